import numpy as np
import pytest
from hypothesis import given, strategies as st

from trnn.automata import all_strings, dfa_accepts, tomita
from trnn.core import (
    Activation, Model, TrnnCell, check_stability, classify, min_gain, readout, run,
    saturated_linear, sharp_sigmoid, step,
)
from trnn.encoding import encode_dfa

import oracles


def test_saturated_linear_examples():
    assert saturated_linear(-0.5) == 0
    assert saturated_linear(0.3) == pytest.approx(0.3)
    assert saturated_linear(7) == 1


def test_sharp_sigmoid_examples():
    for H in (0.1, 1, 40):
        assert sharp_sigmoid(0.0, H) == 0.5
    # 1 / (1 + e^-10)
    assert sharp_sigmoid(0.25, 40) == pytest.approx(0.9999546021312976, rel=1e-12)


@given(st.floats(-50, 50), st.floats(0.01, 100))
def test_sharp_sigmoid_symmetry(v, H):
    assert sharp_sigmoid(-v, H) == pytest.approx(1 - sharp_sigmoid(v, H), abs=1e-12)


def test_min_gain_closed_form():
    H = min_gain(0.25, 0.01)
    assert H == pytest.approx(oracles.min_gain_closed_form(0.25, 0.01), rel=1e-12)
    # frozen oracle value; the commonly quoted 18.3808 is a loose rounding of it
    assert H == pytest.approx(18.380479400538, abs=1e-9)
    assert abs(H - 18.3808) < 1e-3
    assert sharp_sigmoid(-0.25, H) <= 0.01 + 1e-15
    assert min_gain(1e-9, 0.5 - 1e-9) < 1e-6
    for bad in ((0.0, 0.01), (0.5, 0.01), (0.25, 0.0), (0.25, 0.5)):
        with pytest.raises(ValueError):
            min_gain(*bad)


def test_min_gain_bound_randomized():
    rng = np.random.default_rng(0)
    for eps0, eps in ((0.1, 0.01), (0.25, 0.01), (0.4, 0.05)):
        H = min_gain(eps0, eps)
        bar = np.eye(6)[rng.integers(0, 6, size=20_000)]
        Z = bar + rng.uniform(-eps0, eps0, size=bar.shape)
        dev = np.max(np.abs(bar - sharp_sigmoid(Z - 0.5, H)))
        assert dev <= eps + 1e-12


def test_activation_validation():
    with pytest.raises(ValueError):
        Activation("relu")
    with pytest.raises(ValueError):
        Activation("sharp_sigmoid", H=0)
    assert Activation("saturated_linear", shift=-0.5)(np.array([0.2, 2.0])).tolist() == [0.0, 1.0]


def test_step_zero_and_identity():
    n, m = 4, 2
    zero = TrnnCell(np.zeros((n, n, m)), np.zeros(n), Activation("saturated_linear"))
    z = np.array([0, 1, 0, 0.0])
    assert np.all(step(zero, z, 1) == 0)
    W = np.zeros((n, n, m))
    for i in range(n):
        W[i, i, :] = 1
    ident = TrnnCell(W, np.zeros(n), Activation("saturated_linear"))
    assert np.array_equal(step(ident, z, 0), z)
    with pytest.raises(IndexError):
        step(ident, z, 2)
    with pytest.raises(ValueError):
        step(ident, np.zeros(3), 0)


def test_cell_shape_validation():
    with pytest.raises(ValueError):
        TrnnCell(np.zeros((3, 2, 2)), np.zeros(3), Activation())
    with pytest.raises(ValueError):
        TrnnCell(np.zeros((3, 3, 2)), np.zeros(2), Activation())


@pytest.mark.parametrize("k", range(1, 8))
def test_definition_tensor_cell_matches_dfa(k):
    dfa = tomita(k)
    enc = encode_dfa(dfa, "exact")
    for s in all_strings(2, 10):
        traj = run(enc.cell, enc.model.init_state, s)
        assert int(np.argmax(traj[-1][1:])) == dfa.run(s)
        assert classify(enc.model, traj[-1]) == dfa_accepts(dfa, s)


def test_run_empty_and_prefix_consistent():
    enc = encode_dfa(tomita(2), "exact")
    z0 = enc.model.init_state
    assert np.array_equal(run(enc.cell, z0, ()), z0[None, :])
    s = (0, 1, 0, 1, 1, 0)
    full = run(enc.cell, z0, s)
    for t in range(len(s) + 1):
        assert np.array_equal(full[: t + 1], run(enc.cell, z0, s[:t]))


def test_run_tomita2_walk():
    dfa = tomita(2)
    enc = encode_dfa(dfa, "exact")
    traj = run(enc.cell, enc.model.init_state, dfa.alphabet.encode("abab"))
    expected = np.array([enc.one_hot(q) for q in dfa.walk("abab")])
    assert np.array_equal(traj, expected)


def test_readout_encoded_and_zero():
    eps = 0.01
    enc = encode_dfa(tomita(4), "exact", 0.25, eps)
    acc = next(iter(tomita(4).accepting))
    rej = next(q for q in range(4) if q not in tomita(4).accepting)
    assert readout(enc.model, enc.one_hot(acc)) >= 1 - eps - 1e-12
    assert readout(enc.model, enc.one_hot(rej)) <= eps + 1e-12
    zero = Model(enc.cell, np.zeros(5), 0.0, enc.model.init_state)
    assert readout(zero, np.random.default_rng(0).random(5)) == 0.5
    assert classify(zero, np.zeros(5))  # 0.5 ties to accept


def test_stability_sigmoid_self_loop():
    # tomita 1: state 0 loops on 'a'
    enc = encode_dfa(tomita(1), "sigmoid", 0.25, 0.01)
    rep = check_stability(enc.cell, enc.one_hot(0), 0.2, input=0)
    assert rep.stable and rep.worst_deviation <= 0.01


def test_stability_radius_zero_reports_drift():
    enc = encode_dfa(tomita(1), "sigmoid", 0.25, 0.01)
    z = enc.one_hot(0)
    rep = check_stability(enc.cell, z, 0.0, input=0)
    drift = np.max(np.abs(run(enc.cell, z, (0,) * 50)[-1] - z))
    assert rep.worst_deviation == pytest.approx(drift)
    assert rep.stable


def test_stability_exact_snap_back():
    enc = encode_dfa(tomita(1), "exact")
    cell = TrnnCell(enc.cell.W, enc.cell.b, Activation("saturated_linear"))
    rep = check_stability(cell, enc.one_hot(0), 0.2, input=0, iterations=1, tol=0.0)
    # 0/1 weights with no bias pass perturbations through without growing them
    assert rep.worst_deviation <= 0.2
    # an exact snap needs the threshold reading: steep weights and a -1.5 offset
    snap = TrnnCell(enc.cell.W * 4, enc.cell.b - 1.5, Activation("saturated_linear"))
    rep = check_stability(snap, enc.one_hot(0), 0.2, input=0, iterations=1, tol=0.0)
    assert rep.stable and rep.worst_deviation == 0.0
    with pytest.raises(ValueError):
        check_stability(cell, enc.one_hot(0), 0.5)
