import json

import numpy as np
import pytest

from trnn import serialize as ser
from trnn.automata import minimize, sample_dataset, tomita
from trnn.cli import child_seed, main
from trnn.encoding import encode_dfa, encode_tm
from trnn.turing import random_tm, write_one_at_end


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


# -- formats -------------------------------------------------------------------

def test_dfa_json_roundtrip():
    for k in range(1, 8):
        d = tomita(k)
        assert ser.dfa_from_dict(json.loads(json.dumps(ser.dfa_to_dict(d)))) == d


def test_dfa_json_errors_name_field():
    with pytest.raises(ser.FormatError, match="'delta'"):
        ser.dfa_from_dict({"alphabet": "ab", "n": 1, "start": 0, "accepting": []})
    with pytest.raises(ser.FormatError, match="'start'"):
        ser.dfa_from_dict({"alphabet": "ab", "n": 1, "start": "x", "accepting": [], "delta": [[0, 0]]})
    with pytest.raises(ser.FormatError, match="rows"):
        ser.dfa_from_dict({"alphabet": "ab", "n": 2, "start": 0, "accepting": [], "delta": [[0, 0]]})


def test_tm_json_roundtrip():
    tm = random_tm(5, 3, 4)
    assert ser.tm_from_dict(ser.tm_to_dict(tm)) == tm
    with pytest.raises(ser.FormatError, match=r"rules\[0\]: field 'move'"):
        ser.tm_from_dict({"n": 2, "m": 2, "start": 0, "halt": 1,
                          "rules": [{"state": 0, "read": 0, "write": 1, "next": 1}]})


def test_model_json_roundtrip_and_order():
    enc = encode_dfa(tomita(3), "sigmoid")
    d = ser.model_to_dict(enc.model, {"source": "dfa", "mode": "sigmoid"})
    W = enc.model.cell.W
    # flattened with i slowest and k fastest
    assert d["W"][1] == W[0, 0, 1] and d["W"][W.shape[2]] == W[0, 1, 0]
    back = ser.model_from_dict(json.loads(json.dumps(d)))
    assert np.array_equal(back.cell.W, W)
    assert back.cell.activation == enc.model.cell.activation
    d["W"] = d["W"][:-1]
    with pytest.raises(ser.FormatError, match="'W'"):
        ser.model_from_dict(d)


@pytest.mark.parametrize("variant", ["two_step", "real_time"])
def test_lattice_json_roundtrip(variant):
    lat = encode_tm(random_tm(4, 3, 2), [1, 2], variant)
    back = ser.lattice_from_dict(json.loads(json.dumps(ser.lattice_to_dict(lat))))
    assert np.array_equal(back.Z, lat.Z) and back.tm == lat.tm
    for k, v in lat.weights.arrays().items():
        assert np.array_equal(back.weights.arrays()[k], v)


def test_dataset_tsv_roundtrip_with_empty_string():
    ds = sample_dataset(tomita(2), 40, 6, seed=0, name="val", grammar="tomita2")
    text = ser.dataset_to_tsv(ds)
    assert text.startswith("# grammar=tomita2 split=val max_len=6 seed=0 ")
    back = ser.dataset_from_tsv(text)
    assert back.items == ds.items and back.shortfall == ds.shortfall
    with pytest.raises(ser.FormatError, match=":2: label"):
        ser.dataset_from_tsv("# split=x\n2\tab\n")


def test_dot_export():
    dot = ser.dfa_to_dot(tomita(1), "t1")
    assert "doublecircle" in dot and "__start -> q0" in dot
    assert dot == ser.dfa_to_dot(minimize(tomita(1)), "t1")


def test_child_seed_stable():
    assert child_seed(0, "data") == child_seed(0, "data")
    assert child_seed(0, "data") != child_seed(0, "train")
    assert child_seed(1, "data") != child_seed(0, "data")


# -- commands ------------------------------------------------------------------

def test_gen_data_sizes_and_determinism(tmp_path, capsys):
    assert main(["gen-data", "--grammar", "4", "--out", str(tmp_path / "a"), "--seed", "5"]) == 0
    assert main(["gen-data", "--grammar", "4", "--out", str(tmp_path / "b"), "--seed", "5"]) == 0
    sizes = {}
    for name in ("train", "val", "test1", "test2", "ext200", "ext400"):
        a = (tmp_path / "a" / f"{name}.tsv").read_bytes()
        assert a == (tmp_path / "b" / f"{name}.tsv").read_bytes()
        sizes[name] = len(a.decode().splitlines()) - 1
    assert list(sizes.values()) == [2000, 2000, 1000, 1000, 1000, 1000]
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "gen-data" and manifest["seed"] == 5
    assert set(manifest) >= {"command", "configPath", "seed", "outputDir", "toolVersion", "timestampUTC"}


def test_gen_data_tomita1_shortfall_header(tmp_path):
    assert main(["gen-data", "--grammar", "1", "--out", str(tmp_path), "--sizes", "200,200,50,50,20,20"]) == 0
    header = (tmp_path / "train.tsv").read_text().splitlines()[0]
    assert "positives=51" in header and "shortfall=0" in header
    header = (tmp_path / "val.tsv").read_text().splitlines()[0]
    assert "positives=0" in header


def test_encode_dfa_summary(tmp_path, capsys):
    write_json(tmp_path / "t4.json", ser.dfa_to_dict(tomita(4)))
    assert main(["encode-dfa", "--dfa", str(tmp_path / "t4.json"), "--out", str(tmp_path / "m.json")]) == 0
    assert "n_h=5" in capsys.readouterr().out
    model = json.loads((tmp_path / "m.json").read_text())
    assert model["encoding"]["source"] == "dfa" and model["n_h"] == 5


def test_encode_tm_summary(tmp_path, capsys):
    write_json(tmp_path / "tm.json", ser.tm_to_dict(random_tm(6, 4, 0)))
    assert main(["encode-tm", "--tm", str(tmp_path / "tm.json"), "--out", str(tmp_path / "l.json")]) == 0
    assert "K=11" in capsys.readouterr().out
    assert main(["encode-tm", "--tm", str(tmp_path / "tm.json"), "--variant", "two_step",
                 "--out", str(tmp_path / "l2.json")]) == 0
    assert "K=17" in capsys.readouterr().out


def test_malformed_json_exit_2(tmp_path, capsys):
    (tmp_path / "bad.json").write_text('{"alphabet": "ab", "n": 1,')
    assert main(["minimize", "--dfa", str(tmp_path / "bad.json")]) == 2
    assert "malformed JSON" in capsys.readouterr().err
    write_json(tmp_path / "bad2.json", {"alphabet": "ab", "n": 1, "start": 0, "accepting": []})
    assert main(["minimize", "--dfa", str(tmp_path / "bad2.json")]) == 2
    assert "'delta'" in capsys.readouterr().err


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["gen-data", "--grammar", "9", "--out", "x"])
    assert exc.value.code == 2


@pytest.mark.parametrize("variant,ratio", [("two_step", "2"), ("real_time", "1")])
def test_simulate_tm_ok(tmp_path, capsys, variant, ratio):
    write_json(tmp_path / "tm.json", ser.tm_to_dict(write_one_at_end()))
    rc = main(["simulate-tm", "--tm", str(tmp_path / "tm.json"), "--input", "11", "--variant", variant,
               "--steps", "20", "--out", str(tmp_path / "o")])
    assert rc == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["ok"] and report["cyclesPerTmStep"] == int(ratio)
    trace = (tmp_path / "o" / "trace.txt").read_text().splitlines()
    assert trace[0] == "t=0 parity=0 decoded=0,0,11"


def test_simulate_tm_corrupted_lattice_exit_1(tmp_path):
    lat = ser.lattice_to_dict(encode_tm(write_one_at_end(), [1, 1], "real_time"))
    lat["weights"]["head"]["data"] = [0.0] * len(lat["weights"]["head"]["data"])
    write_json(tmp_path / "lat.json", lat)
    rc = main(["simulate-tm", "--lattice", str(tmp_path / "lat.json"), "--steps", "5",
               "--out", str(tmp_path / "o")])
    assert rc == 1
    assert json.loads((tmp_path / "o" / "report.json").read_text())["ok"] is False


def test_simulate_tm_zero_steps(tmp_path):
    write_json(tmp_path / "tm.json", ser.tm_to_dict(write_one_at_end()))
    assert main(["simulate-tm", "--tm", str(tmp_path / "tm.json"), "--steps", "0",
                 "--out", str(tmp_path / "o")]) == 0


def test_extract_writes_report_and_dots(tmp_path):
    write_json(tmp_path / "tomita2.json", ser.dfa_to_dict(tomita(2)))
    assert main(["encode-dfa", "--grammar", "2", "--out", str(tmp_path / "m.json")]) == 0
    rc = main(["extract", "--model", str(tmp_path / "m.json"), "--oracle", str(tmp_path / "tomita2.json"),
               "--out", str(tmp_path / "x"), "--name", "t2"])
    assert rc == 0
    names = sorted(p.name for p in (tmp_path / "x").iterdir())
    assert names == ["manifest.json", "t2.extracted.dot", "t2.oracle.dot", "t2.report.json"]
    assert json.loads((tmp_path / "x" / "t2.report.json").read_text())["comparison"]["isomorphic"]


def test_eval_and_alphabet_mismatch(tmp_path, capsys):
    assert main(["encode-dfa", "--grammar", "4", "--out", str(tmp_path / "m.json")]) == 0
    ds = sample_dataset(tomita(4), 50, 10, seed=1)
    (tmp_path / "d.tsv").write_text(ser.dataset_to_tsv(ds))
    assert main(["eval", "--model", str(tmp_path / "m.json"), "--data", str(tmp_path / "d.tsv")]) == 0
    assert "accuracy=100.0000" in capsys.readouterr().out
    (tmp_path / "d3.tsv").write_text("# split=x alphabet=abc\n1\tabc\n")
    assert main(["eval", "--model", str(tmp_path / "m.json"), "--data", str(tmp_path / "d3.tsv")]) == 1
    assert "alphabet" in capsys.readouterr().err


def test_minimize_and_equiv(tmp_path, capsys):
    bloated = {"alphabet": "ab", "n": 3, "start": 0, "accepting": [0, 1], "delta": [[1, 2], [0, 2], [2, 2]]}
    write_json(tmp_path / "big.json", bloated)
    assert main(["minimize", "--dfa", str(tmp_path / "big.json"), "--out", str(tmp_path / "s.json"), "--dot"]) == 0
    assert json.loads((tmp_path / "s.json").read_text())["n"] == 2
    assert (tmp_path / "s.dot").exists()
    write_json(tmp_path / "t1.json", ser.dfa_to_dict(tomita(1)))
    write_json(tmp_path / "t7.json", ser.dfa_to_dict(tomita(7)))
    assert main(["equiv", str(tmp_path / "big.json"), str(tmp_path / "t1.json")]) == 0
    assert main(["equiv", str(tmp_path / "t1.json"), str(tmp_path / "t7.json")]) == 1
    assert "'b'" in capsys.readouterr().out


def test_train_small_run(tmp_path):
    cfg = {"epochs": 2, "hidden": 4}
    write_json(tmp_path / "cfg.json", cfg)
    rc = main(["train", "--grammar", "1", "--trials", "2", "--config", str(tmp_path / "cfg.json"),
               "--epochs", "1", "--out", str(tmp_path / "run")])
    assert rc == 0
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summary["trials"] == 2 and summary["config"]["epochs"] == 1
    assert set(summary["splits"]) == {"test1", "test2", "ext200", "ext400"}
    rows = (tmp_path / "run" / "trial0.metrics.csv").read_text().splitlines()
    assert rows[0] == "epoch,trainLoss,valAcc" and len(rows) == 2


def test_train_unknown_config_field(tmp_path, capsys):
    write_json(tmp_path / "cfg.json", {"epochz": 2})
    assert main(["train", "--grammar", "1", "--config", str(tmp_path / "cfg.json"),
                 "--out", str(tmp_path / "run")]) == 2
    assert "epochz" in capsys.readouterr().err
