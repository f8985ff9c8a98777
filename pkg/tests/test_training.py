import numpy as np
import pytest

from trnn._kernels import sgd_epoch
from trnn.automata import Dataset, LabeledString, dfa_accepts, sample_dataset, tomita
from trnn.core import Activation, Model, TrnnCell
from trnn.encoding import encode_dfa
from trnn.training import (
    Params, TrainConfig, _pack, bptt_grads, evaluate, init_model, make_splits, summarize, train,
)


def random_case(rng, n_max=4, len_max=6, batch=4, m=2):
    n = int(rng.integers(1, n_max + 1))
    H = float(rng.uniform(0.5, 3.0))
    p = Params(rng.normal(0, 0.7, (n, n, m)), rng.normal(0, 0.5, n), rng.normal(0, 0.7, n),
               float(rng.normal()), rng.uniform(0, 1, n), H)
    items = [LabeledString(tuple(int(x) for x in rng.integers(0, m, rng.integers(0, len_max + 1))),
                           bool(rng.integers(0, 2))) for _ in range(batch)]
    return p, items


def loss_of(p, items):
    return bptt_grads(p, items)[1]


def finite_difference(p, items, h=1e-5):
    grads = []
    for name in Params.NAMES:
        base = getattr(p, name)
        if name == "readout_b":
            q1, q2 = p.copy(), p.copy()
            q1.readout_b += h
            q2.readout_b -= h
            grads.append(np.array((loss_of(q1, items) - loss_of(q2, items)) / (2 * h)))
            continue
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            q1, q2 = p.copy(), p.copy()
            getattr(q1, name)[idx] += h
            getattr(q2, name)[idx] -= h
            g[idx] = (loss_of(q1, items) - loss_of(q2, items)) / (2 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, tol=1e-4):
    for a, f in zip(analytic.arrays(), numeric):
        a, f = np.asarray(a, float), np.asarray(f, float)
        big = np.maximum(np.abs(a), np.abs(f)) > 1e-8
        rel = np.abs(a - f)[big] / np.maximum(np.abs(a), np.abs(f))[big]
        assert rel.size == 0 or rel.max() <= tol, rel.max()


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        p, items = random_case(rng)
        g, _ = bptt_grads(p, items)
        assert_grads_close(g, finite_difference(p, items))


def test_small_model_gradient_example():
    rng = np.random.default_rng(5)
    p, items = random_case(rng, n_max=3, len_max=5)
    p = Params(rng.normal(0, 0.7, (3, 3, 2)), p.b[:1].repeat(3), rng.normal(size=3), 0.1,
               rng.uniform(size=3), 1.0)
    g, _ = bptt_grads(p, items)
    assert_grads_close(g, finite_difference(p, items))


def test_zero_model_balanced_batch_bias_gradient_zero():
    p = Params(np.zeros((3, 3, 2)), np.zeros(3), np.zeros(3), 0.0, np.zeros(3), 1.0)
    batch = [LabeledString((0, 1), True), LabeledString((1,), False),
             LabeledString((), True), LabeledString((1, 1, 0), False)]
    g, loss = bptt_grads(p, batch)
    assert g.readout_b == pytest.approx(0.0, abs=1e-15)
    assert loss == pytest.approx(np.log(2))


def test_unused_symbol_slice_has_zero_gradient():
    rng = np.random.default_rng(1)
    p, _ = random_case(rng, m=3)
    batch = [LabeledString((0, 1, 0), True), LabeledString((1, 1), False)]
    g, _ = bptt_grads(p, batch)
    assert np.all(g.W[:, :, 2] == 0)


def test_empty_string_uses_initial_state_only():
    rng = np.random.default_rng(2)
    p, _ = random_case(rng)
    g, _ = bptt_grads(p, [LabeledString((), True)])
    assert np.all(g.W == 0) and np.all(g.b == 0)
    with pytest.raises(ValueError):
        bptt_grads(p, [])


@pytest.mark.parametrize("batch_size,clip", [(1, 0.0), (3, 0.0), (2, 0.5)])
def test_compiled_epoch_matches_reference(batch_size, clip):
    rng = np.random.default_rng(7)
    p, items = random_case(rng, batch=6)
    q = p.copy()
    flat, offsets, labels = _pack(items)
    order = np.array([3, 0, 5, 1, 4, 2])
    lr = 0.05
    c, _ = sgd_epoch(q.W, q.b, q.readout_w, q.readout_b, q.init_state, q.gain_h, lr,
                     flat, offsets, labels, order, batch_size, clip)
    q.readout_b = c
    ref = p.copy()
    for start in range(0, len(order), batch_size):
        g, _ = bptt_grads(ref, [items[i] for i in order[start:start + batch_size]])
        scale = 1.0
        if clip > 0:
            norm = np.sqrt(sum(float(np.sum(np.asarray(a) ** 2)) for a in g.arrays()))
            scale = min(1.0, clip / norm)
        ref.W -= lr * scale * g.W
        ref.b -= lr * scale * g.b
        ref.readout_w -= lr * scale * g.readout_w
        ref.readout_b -= lr * scale * g.readout_b
        ref.init_state -= lr * scale * g.init_state
    for a, b in zip(q.arrays(), ref.arrays()):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_loss_monotone_small_lr():
    rng = np.random.default_rng(11)
    p, items = random_case(rng, batch=8)
    prev = loss_of(p, items)
    for _ in range(10):
        g, _ = bptt_grads(p, items)
        for name in ("W", "b", "readout_w", "init_state"):
            setattr(p, name, getattr(p, name) - 1e-4 * getattr(g, name))
        p.readout_b -= 1e-4 * g.readout_b
        cur = loss_of(p, items)
        assert cur <= prev + 1e-9
        prev = cur


def test_init_model_seeded_and_zero_std():
    cfg = TrainConfig(seed=3)
    a, b = init_model(cfg, 2), init_model(cfg, 2)
    assert np.array_equal(a.cell.W, b.cell.W)
    z = init_model(TrainConfig(init_std=0.0), 2)
    assert np.all(z.cell.W == 0) and z.accept_prob((0, 1, 1)) == 0.5


def test_default_config_matches_best_setting():
    cfg = TrainConfig()
    assert (cfg.hidden, cfg.optimizer, cfg.batch) == (16, "sgd", 1)
    assert (cfg.lr, cfg.gain_h, cfg.init_std, cfg.grad_clip) == (5e-2, 2.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="adam")
    with pytest.raises(ValueError):
        TrainConfig(lr=0)


@pytest.fixture(scope="module")
def small_splits():
    specs = (("train", 300, 12), ("val", 200, 12), ("test1", 100, 15))
    return make_splits(tomita(4), 0, specs=specs)


def test_train_zero_epochs_returns_initial(small_splits):
    cfg = TrainConfig(epochs=0)
    m0 = init_model(cfg, 2)
    m1, met = train(m0, small_splits["train"], small_splits["val"], cfg)
    assert met.per_epoch == []
    assert np.array_equal(m0.cell.W, m1.cell.W)


def test_train_deterministic(small_splits):
    cfg = TrainConfig(epochs=3, seed=4)
    runs = [train(init_model(cfg, 2), small_splits["train"], small_splits["val"], cfg) for _ in range(2)]
    assert runs[0][1].per_epoch == runs[1][1].per_epoch
    assert np.array_equal(runs[0][0].cell.W, runs[1][0].cell.W)


def test_train_rejects_alphabet_mismatch(small_splits):
    cfg = TrainConfig(epochs=1)
    with pytest.raises(ValueError, match="alphabet"):
        train(init_model(cfg, 3), small_splits["train"], small_splits["val"], cfg)


def test_train_early_stop(small_splits):
    enc = encode_dfa(tomita(4))
    # start from a perfect (rescaled) model so validation is 100% from epoch 1
    cell = TrnnCell(enc.cell.W * 12, np.full(5, -6.0), Activation("sharp_sigmoid", 1.0))
    perfect = Model(cell, enc.model.readout_w, enc.model.readout_b, enc.model.init_state)
    cfg = TrainConfig(epochs=20, lr=1e-6, require_val_acc=100.0, patience_epochs=5, hidden=5)
    _, met = train(perfect, small_splits["train"], small_splits["val"], cfg)
    assert len(met.per_epoch) == 5 and met.epochs_to_perfect_val == 1


def test_split_hygiene():
    splits = make_splits(tomita(5), 1)
    names = list(splits)
    assert [len(splits[n]) for n in names] == [2000, 2000, 1000, 1000, 1000, 1000]
    assert [splits[n].max_len for n in names] == [50, 50, 60, 120, 200, 400]
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            assert not (splits[a].strings & splits[b].strings)
        assert all(dfa_accepts(tomita(5), it.symbols) == it.label for it in splits[a])


def test_evaluate_encoded_and_constant_models():
    ds = sample_dataset(tomita(4), 400, 30, seed=2)
    assert evaluate(encode_dfa(tomita(4)).model, ds) == 100.0
    const = init_model(TrainConfig(init_std=0.0), 2)
    assert evaluate(const, ds) == pytest.approx(100.0 * ds.positives / len(ds))
    bad = Dataset("x", ds.items, 30, alphabet=tomita(4).alphabet.__class__("abc"))
    with pytest.raises(ValueError, match="alphabet"):
        evaluate(const, bad)


def test_summarize_aggregates():
    from trnn.training import Metrics
    m1 = Metrics(per_epoch=[{"valAcc": 90.0}, {"valAcc": 100.0}], epochs_to_perfect_val=2,
                 test_acc={"test2": 99.0})
    m2 = Metrics(per_epoch=[{"valAcc": 100.0}, {"valAcc": 100.0}], epochs_to_perfect_val=1,
                 test_acc={"test2": 97.0})
    s = summarize([(None, m1), (None, m2)])
    assert s["splits"]["test2"] == {"mean": 98.0, "std": 1.0}
    assert s["meanEpochsToPerfectVal"] == 1.5
    assert s["meanValPerfectEpoch"] == 2
