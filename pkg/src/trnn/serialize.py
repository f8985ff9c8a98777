"""File formats: JSON for automata, machines, models, lattices and reports;
TSV for datasets; CSV for training metrics; DOT for drawing automata."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .automata import DFA, Alphabet, Dataset, LabeledString, canonical
from .core import Activation, Model, TrnnCell
from .encoding import LatticeWeights, TmLattice
from .turing import TuringMachine

__all__ = [
    "FormatError",
    "atomic_write",
    "dfa_to_dict", "dfa_from_dict",
    "tm_to_dict", "tm_from_dict",
    "model_to_dict", "model_from_dict",
    "lattice_to_dict", "lattice_from_dict",
    "report_to_dict",
    "dataset_to_tsv", "dataset_from_tsv",
    "metrics_to_csv",
    "dfa_to_dot",
    "load_json", "dump_json",
]


class FormatError(ValueError):
    """A file does not match its declared format; the message names the field."""


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def load_json(path: str | os.PathLike) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _get(d: Mapping, key: str, kind=None, where: str = ""):
    if not isinstance(d, Mapping):
        raise FormatError(f"{where or 'document'}: expected an object")
    if key not in d:
        raise FormatError(f"{where}field {key!r} is missing")
    v = d[key]
    if kind is not None and not isinstance(v, kind) or isinstance(v, bool) and kind is not bool:
        raise FormatError(f"{where}field {key!r} has the wrong type ({type(v).__name__})")
    return v


# -- DFA ---------------------------------------------------------------------

def dfa_to_dict(dfa: DFA) -> dict:
    return {
        "alphabet": dfa.alphabet.symbols,
        "n": dfa.n,
        "start": dfa.start,
        "accepting": sorted(dfa.accepting),
        "delta": [list(row) for row in dfa.delta],
    }


def dfa_from_dict(d: Mapping) -> DFA:
    alphabet = _get(d, "alphabet", str)
    n = _get(d, "n", int)
    delta = _get(d, "delta", list)
    if len(delta) != n:
        raise FormatError(f"field 'delta' has {len(delta)} rows but n={n}")
    try:
        return DFA(Alphabet(alphabet), tuple(tuple(r) for r in delta), _get(d, "start", int),
                   frozenset(_get(d, "accepting", list)))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid DFA: {exc}") from None


# -- Turing machine ----------------------------------------------------------

def tm_to_dict(tm: TuringMachine) -> dict:
    return {
        "n": tm.n,
        "m": tm.m,
        "start": tm.start,
        "halt": tm.halt,
        "accepting": sorted(tm.accepting),
        "rules": [
            {"state": q, "read": r, "write": w, "next": v, "move": a}
            for (q, r), (w, v, a) in sorted(tm.rules.items())
        ],
    }


def tm_from_dict(d: Mapping) -> TuringMachine:
    rules = {}
    for i, r in enumerate(_get(d, "rules", list)):
        where = f"rules[{i}]: "
        key = (_get(r, "state", int, where), _get(r, "read", int, where))
        if key in rules:
            raise FormatError(f"{where}duplicate rule for state {key[0]} reading {key[1]}")
        rules[key] = (_get(r, "write", int, where), _get(r, "next", int, where), _get(r, "move", int, where))
    return TuringMachine(_get(d, "n", int), _get(d, "m", int), rules, _get(d, "start", int),
                         _get(d, "halt", int), frozenset(d.get("accepting", [])))


# -- models ------------------------------------------------------------------

def model_to_dict(model: Model, encoding: Mapping | None = None) -> dict:
    act = model.cell.activation
    out = {
        "n_h": model.n_h,
        "m": model.m,
        "activation": {"kind": act.kind, "H": act.H, "shift": act.shift},
        "W_order": "i,j,k",
        "W": model.cell.W.ravel(order="C").tolist(),
        "b": model.cell.b.tolist(),
        "readoutWeights": model.readout_w.tolist(),
        "readoutBias": float(model.readout_b),
        "initState": model.init_state.tolist(),
    }
    if encoding is not None:
        out["encoding"] = dict(encoding)
    return out


def model_from_dict(d: Mapping) -> Model:
    n, m = _get(d, "n_h", int), _get(d, "m", int)
    if d.get("W_order", "i,j,k") != "i,j,k":
        raise FormatError(f"field 'W_order' must be 'i,j,k', got {d['W_order']!r}")
    W = np.asarray(_get(d, "W", list), dtype=float)
    if W.size != n * n * m:
        raise FormatError(f"field 'W' has {W.size} entries, expected n_h*n_h*m = {n * n * m}")
    act = _get(d, "activation", Mapping)
    try:
        activation = Activation(_get(act, "kind", str, "activation."), float(act.get("H", 1.0)),
                                float(act.get("shift", 0.0)))
        cell = TrnnCell(W.reshape(n, n, m), np.asarray(_get(d, "b", list), dtype=float), activation)
        return Model(cell, np.asarray(_get(d, "readoutWeights", list), dtype=float),
                     float(_get(d, "readoutBias", (int, float))),
                     np.asarray(_get(d, "initState", list), dtype=float))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"invalid model: {exc}") from None


# -- lattices ----------------------------------------------------------------

def _arr(a: np.ndarray | None):
    if a is None:
        return None
    return {"shape": list(a.shape), "data": np.asarray(a).ravel().tolist()}


def _unarr(d, name: str) -> np.ndarray | None:
    if d is None:
        return None
    shape = _get(d, "shape", list, f"{name}.")
    data = np.asarray(_get(d, "data", list, f"{name}."), dtype=float)
    if data.size != int(np.prod(shape)):
        raise FormatError(f"field {name!r} has {data.size} values for shape {shape}")
    return data.reshape(shape)


def lattice_to_dict(lat: TmLattice) -> dict:
    return {
        "variant": lat.variant,
        "K": lat.K,
        "t": lat.t,
        "activation": lat.activation,
        "H": lat.H,
        "tm": tm_to_dict(lat.tm),
        "weights": {k: _arr(v) for k, v in lat.weights.arrays().items()},
        "Z": _arr(lat.Z),
        "A": _arr(lat.A),
    }


def lattice_from_dict(d: Mapping) -> TmLattice:
    variant = _get(d, "variant", str)
    if variant not in ("two_step", "real_time"):
        raise FormatError(f"field 'variant' must be two_step or real_time, got {variant!r}")
    w = _get(d, "weights", Mapping)
    weights = LatticeWeights(variant, **{k: _unarr(v, f"weights.{k}") for k, v in w.items()})
    return TmLattice(variant, tm_from_dict(_get(d, "tm", Mapping)), weights,
                     _unarr(_get(d, "Z", Mapping), "Z"), _unarr(d.get("A"), "A"),
                     int(d.get("t", 0)), d.get("activation", "threshold"), d.get("H"))


# -- extraction reports ------------------------------------------------------

def report_to_dict(report) -> dict:
    cmp = report.comparison
    return {
        "status": report.status,
        "k": report.k,
        "rawStateCount": report.raw_state_count,
        "elapsedSeconds": round(report.elapsed, 3),
        "kTried": list(report.tried),
        "dfa": dfa_to_dict(report.dfa) if report.dfa is not None else None,
        "candidate": dfa_to_dict(report.candidate) if report.candidate is not None else None,
        "comparison": None if cmp is None else {
            "isomorphic": cmp.isomorphic,
            "equivalent": cmp.equivalent,
            "counterexample": cmp.counterexample,
        },
    }


# -- datasets ----------------------------------------------------------------

def dataset_to_tsv(ds: Dataset) -> str:
    pos = ds.positives
    lines = [
        f"# grammar={ds.grammar or '-'} split={ds.name} max_len={ds.max_len} seed={ds.seed}"
        f" alphabet={ds.alphabet.symbols} positives={pos} negatives={len(ds) - pos} shortfall={ds.shortfall}"
    ]
    lines += [f"{int(it.label)}\t{ds.alphabet.decode(it.symbols)}" for it in ds.items]
    return "\n".join(lines) + "\n"


def dataset_from_tsv(text: str, source: str = "<dataset>") -> Dataset:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FormatError(f"{source}: missing '# grammar=... split=...' header")
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
    alphabet = Alphabet(meta.get("alphabet", "ab"))
    items = []
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip() and "\t" not in line:
            continue
        label, _, s = line.partition("\t")
        if label not in ("0", "1"):
            raise FormatError(f"{source}:{no}: label must be 0 or 1, got {label!r}")
        try:
            items.append(LabeledString(alphabet.encode(s), label == "1"))
        except ValueError as exc:
            raise FormatError(f"{source}:{no}: {exc}") from None
    try:
        return Dataset(
            name=meta.get("split", "data"), items=tuple(items), max_len=int(meta.get("max_len", 0)),
            alphabet=alphabet, grammar="" if meta.get("grammar") == "-" else meta.get("grammar", ""),
            seed=int(meta.get("seed", 0)), shortfall=int(meta.get("shortfall", 0)),
        )
    except ValueError as exc:
        raise FormatError(f"{source}: bad header value: {exc}") from None


def metrics_to_csv(per_epoch) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "trainLoss", "valAcc"])
    for row in per_epoch:
        w.writerow([row["epoch"], f"{row['trainLoss']:.8g}", f"{row['valAcc']:.4f}"])
    return buf.getvalue()


# -- DOT ---------------------------------------------------------------------

def dfa_to_dot(dfa: DFA, name: str = "dfa") -> str:
    """Graphviz source; states are renumbered canonically so output is stable."""
    d = canonical(dfa)
    out = [f'digraph "{name}" {{', "  rankdir=LR;", '  __start [shape=point, label=""];']
    for q in range(d.n):
        shape = "doublecircle" if q in d.accepting else "circle"
        out.append(f'  q{q} [shape={shape}, label="q{q}"];')
    out.append(f"  __start -> q{d.start};")
    for q in range(d.n):
        by_target: dict[int, list[str]] = {}
        for k, r in enumerate(d.delta[q]):
            by_target.setdefault(r, []).append(d.alphabet.symbols[k])
        for r, syms in by_target.items():
            out.append(f'  q{q} -> q{r} [label="{",".join(syms)}"];')
    out.append("}")
    return "\n".join(out) + "\n"
