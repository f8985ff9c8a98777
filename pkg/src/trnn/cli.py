"""``trnn`` command-line tool.

Every command that writes files first writes ``manifest.json`` into its
output directory, recording the full resolved arguments and root seed so the
run can be repeated.  Exit codes: 0 success, 1 verification or comparison
failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import logging
import sys
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from . import serialize as ser
from .automata import DFA, minimize, equivalent, tomita
from .encoding import encode_dfa, encode_tm, lattice_trace, verify_simulation
from .extraction import ExtractionConfig, extract
from .training import SPLIT_SPECS, TrainConfig, evaluate, make_splits, run_experiment

log = logging.getLogger("trnn")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def child_seed(root: int, component: str) -> int:
    """Fixed derivation of a component seed from the command's root seed."""
    h = hashlib.sha256(f"{root}:{component}".encode()).digest()
    return int.from_bytes(h[:4], "big") & 0x7FFFFFFF


def _tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def write_manifest(out_dir: Path, args: argparse.Namespace, seed: int | None = None) -> None:
    resolved = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.command,
        "configPath": str(getattr(args, "config", None) or ""),
        "seed": seed if seed is not None else getattr(args, "seed", None),
        "outputDir": str(out_dir),
        "toolVersion": _tool_version(),
        "timestampUTC": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "args": resolved,
    }
    ser.atomic_write(out_dir / "manifest.json", ser.dump_json(manifest))


def _load_dfa(args) -> DFA:
    if getattr(args, "grammar", None) is not None and not getattr(args, "dfa", None):
        return tomita(args.grammar)
    if not args.dfa:
        raise UsageError("give --dfa FILE or --grammar 1..7")
    return ser.dfa_from_dict(ser.load_json(args.dfa))


def _grammar(text: str) -> int:
    k = int(text)
    if not 1 <= k <= 7:
        raise argparse.ArgumentTypeError(f"grammar must be 1..7, got {k}")
    return k


# -- commands ----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    out = Path(args.out)
    write_manifest(out, args)
    dfa = tomita(args.grammar)
    specs = SPLIT_SPECS
    if args.sizes:
        sizes = [int(x) for x in args.sizes.split(",")]
        if len(sizes) != len(SPLIT_SPECS):
            raise UsageError(f"--sizes needs {len(SPLIT_SPECS)} comma-separated counts")
        specs = tuple((name, c, L) for (name, _, L), c in zip(SPLIT_SPECS, sizes))
    splits = make_splits(dfa, child_seed(args.seed, "data"), grammar=f"tomita{args.grammar}", specs=specs)
    for name, ds in splits.items():
        ser.atomic_write(out / f"{name}.tsv", ser.dataset_to_tsv(ds))
        pos = ds.positives
        print(f"{name:7s} n={len(ds):5d} pos={pos:5d} neg={len(ds) - pos:5d} "
              f"max_len={ds.max_len} shortfall={ds.shortfall}")
    return EXIT_OK


def cmd_encode_dfa(args) -> int:
    out = Path(args.out)
    write_manifest(out.parent, args)
    dfa = _load_dfa(args)
    enc = encode_dfa(dfa, args.mode, args.eps0, args.eps)
    block = {"source": "dfa", "mode": enc.mode, "H": enc.H, "stateOf": list(enc.state_of),
             "dfa": ser.dfa_to_dict(dfa)}
    ser.atomic_write(out, ser.dump_json(ser.model_to_dict(enc.model, block)))
    H = f"{enc.H:.6g}" if enc.H is not None else "n/a (saturated linear)"
    print(f"states n={dfa.n} alphabet m={dfa.m} neurons n_h={enc.n_h} mode={enc.mode} H={H}")
    return EXIT_OK


def cmd_encode_tm(args) -> int:
    out = Path(args.out)
    write_manifest(out.parent, args)
    tm = ser.tm_from_dict(ser.load_json(args.tm))
    lat = encode_tm(tm, _tape(args.input), args.variant, activation=args.activation)
    ser.atomic_write(out, ser.dump_json(ser.lattice_to_dict(lat)))
    H = f"{lat.H:.6g}" if lat.H is not None else "n/a (threshold)"
    print(f"machine n={tm.n} m={tm.m} variant={lat.variant} K={lat.K} columns={lat.columns} "
          f"cycles_per_tm_step={lat.cycles_per_tm_step} H={H}")
    return EXIT_OK


def _tape(text: str | None) -> list[int]:
    if not text:
        return []
    try:
        return [int(c) for c in text.replace(",", "")]
    except ValueError:
        raise UsageError(f"--input must be a string of symbol digits, got {text!r}") from None


def cmd_simulate_tm(args) -> int:
    out = Path(args.out)
    write_manifest(out, args)
    lattice = None
    if args.lattice:
        lattice = ser.lattice_from_dict(ser.load_json(args.lattice))
        tm, variant = lattice.tm, lattice.variant
    elif args.tm:
        tm, variant = ser.tm_from_dict(ser.load_json(args.tm)), args.variant
    else:
        raise UsageError("give --tm FILE or --lattice FILE")
    tape = _tape(args.input)
    rep = verify_simulation(tm, tape, variant, args.steps, args.activation, lattice=lattice)
    start = lattice if lattice is not None else encode_tm(tm, tape, variant, activation=args.activation)
    _, text = lattice_trace(start, max(rep.network_steps, 0))
    ser.atomic_write(out / "trace.txt", text)
    report = {"ok": rep.ok, "firstDivergence": rep.first_divergence,
              "cyclesPerTmStep": rep.cycles_per_tm_step, "tmSteps": rep.tm_steps,
              "networkSteps": rep.network_steps, "detail": rep.detail, "variant": variant}
    ser.atomic_write(out / "report.json", ser.dump_json(report))
    print(("ok" if rep.ok else "FAILED") + f" variant={variant} tm_steps={rep.tm_steps} "
          f"network_steps={rep.network_steps} cycles_per_tm_step={rep.cycles_per_tm_step}"
          + (f" first_divergence={rep.first_divergence} ({rep.detail})" if not rep.ok else ""))
    return EXIT_OK if rep.ok else EXIT_FAIL


_CFG_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}


def _train_config(args) -> TrainConfig:
    base = {}
    if args.config:
        raw = ser.load_json(args.config)
        if not isinstance(raw, dict):
            raise ser.FormatError(f"{args.config}: expected a JSON object")
        unknown = set(raw) - _CFG_FIELDS
        if unknown:
            raise ser.FormatError(f"{args.config}: unknown field(s) {sorted(unknown)}")
        base.update(raw)
    for name in ("hidden", "lr", "epochs", "batch", "init_std", "gain_h", "grad_clip", "require_val_acc"):
        v = getattr(args, name, None)
        if v is not None:
            base[name] = v
    base["seed"] = child_seed(args.seed, "train")
    return TrainConfig(**base)


def cmd_train(args) -> int:
    out = Path(args.out)
    write_manifest(out, args)
    cfg = _train_config(args)
    res = run_experiment(args.grammar, args.trials, cfg, data_seed=child_seed(args.seed, "data"),
                         workers=args.parallel_trials)
    for t, (model, met) in enumerate(res["runs"]):
        ser.atomic_write(out / f"trial{t}.metrics.csv", ser.metrics_to_csv(met.per_epoch))
        ser.atomic_write(out / f"trial{t}.model.json", ser.dump_json(ser.model_to_dict(model)))
    summary = dict(res["summary"], grammar=args.grammar, config=dataclasses.asdict(cfg))
    ser.atomic_write(out / "summary.json", ser.dump_json(summary))
    print(f"tomita{args.grammar}: {args.trials} trial(s), epochs to 100% val: {summary['epochsToPerfectVal']}")
    for name, s in summary["splits"].items():
        print(f"  {name:7s} mean={s['mean']:.2f} std={s['std']:.2f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = ser.model_from_dict(ser.load_json(args.model))
    ds = ser.dataset_from_tsv(Path(args.data).read_text(encoding="utf-8"), str(args.data))
    if ds.alphabet.m != model.m:
        print(f"error: dataset alphabet {ds.alphabet.symbols!r} has {ds.alphabet.m} symbols, "
              f"model expects {model.m}", file=sys.stderr)
        return EXIT_FAIL
    acc = evaluate(model, ds)
    print(f"accuracy={acc:.4f} n={len(ds)} split={ds.name}")
    return EXIT_OK


def cmd_extract(args) -> int:
    out = Path(args.out)
    write_manifest(out, args)
    model = ser.model_from_dict(ser.load_json(args.model))
    oracle = ser.dfa_from_dict(ser.load_json(args.oracle)) if args.oracle else tomita(args.grammar)
    if oracle.m != model.m:
        print(f"error: oracle has {oracle.m} symbols, model expects {model.m}", file=sys.stderr)
        return EXIT_FAIL
    cfg = ExtractionConfig(k_min=args.k_min, k_max=args.k_max, timeout_seconds=args.timeout,
                           seed=child_seed(args.seed, "extract"))
    rep = extract(model, oracle, cfg)
    name = args.name
    ser.atomic_write(out / f"{name}.report.json", ser.dump_json(ser.report_to_dict(rep)))
    ser.atomic_write(out / f"{name}.oracle.dot", ser.dfa_to_dot(minimize(oracle), f"{name}.oracle"))
    shown = rep.dfa or rep.candidate
    if shown is not None:
        ser.atomic_write(out / f"{name}.extracted.dot", ser.dfa_to_dot(shown, f"{name}.extracted"))
    cmp = rep.comparison
    print(f"status={rep.status} k={rep.k} states={shown.n if shown else '-'} "
          f"elapsed={rep.elapsed:.2f}s"
          + (f" isomorphic={cmp.isomorphic} counterexample={cmp.counterexample!r}" if cmp else ""))
    return EXIT_OK if rep.status == "ok" else EXIT_FAIL


def cmd_minimize(args) -> int:
    dfa = _load_dfa(args)
    small = minimize(dfa)
    text = ser.dump_json(ser.dfa_to_dict(small))
    if args.out:
        out = Path(args.out)
        write_manifest(out.parent, args)
        ser.atomic_write(out, text)
        if args.dot:
            ser.atomic_write(out.with_suffix(".dot"), ser.dfa_to_dot(small, out.stem))
    else:
        sys.stdout.write(text)
    print(f"states {dfa.n} -> {small.n}", file=sys.stderr)
    return EXIT_OK


def cmd_equiv(args) -> int:
    a = ser.dfa_from_dict(ser.load_json(args.a))
    b = ser.dfa_from_dict(ser.load_json(args.b))
    eq, cex = equivalent(a, b)
    print("equivalent" if eq else f"not equivalent; shortest counterexample {cex!r}")
    return EXIT_OK if eq else EXIT_FAIL


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trnn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=func)
        return sp

    sp = add("gen-data", cmd_gen_data, "sample the six Tomita splits as TSV files")
    sp.add_argument("--grammar", type=_grammar, required=True)
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sizes", help="comma-separated counts for train,val,test1,test2,ext200,ext400")

    sp = add("encode-dfa", cmd_encode_dfa, "insert a DFA into a second-order network")
    sp.add_argument("--dfa", type=Path)
    sp.add_argument("--grammar", type=_grammar)
    sp.add_argument("--mode", choices=("exact", "sigmoid"), default="exact")
    sp.add_argument("--eps0", type=float, default=0.25)
    sp.add_argument("--eps", type=float, default=0.01)
    sp.add_argument("--out", required=True, type=Path)

    sp = add("encode-tm", cmd_encode_tm, "compile a Turing machine into a network lattice")
    sp.add_argument("--tm", required=True, type=Path)
    sp.add_argument("--variant", choices=("two_step", "real_time"), default="real_time")
    sp.add_argument("--activation", choices=("threshold", "sigmoid"), default="threshold")
    sp.add_argument("--input", default="", help="initial tape as symbol digits, e.g. 0110")
    sp.add_argument("--out", required=True, type=Path)

    sp = add("simulate-tm", cmd_simulate_tm, "co-run interpreter and lattice and compare")
    sp.add_argument("--tm", type=Path)
    sp.add_argument("--lattice", type=Path, help="a lattice file from encode-tm (overrides --tm/--variant)")
    sp.add_argument("--variant", choices=("two_step", "real_time"), default="real_time")
    sp.add_argument("--activation", choices=("threshold", "sigmoid"), default="threshold")
    sp.add_argument("--input", default="")
    sp.add_argument("--steps", type=int, default=200)
    sp.add_argument("--out", required=True, type=Path)

    sp = add("train", cmd_train, "train second-order networks on a Tomita grammar")
    sp.add_argument("--grammar", type=_grammar, required=True)
    sp.add_argument("--trials", type=int, default=5)
    sp.add_argument("--config", type=Path, help="JSON object with TrainConfig fields")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--hidden", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--init-std", dest="init_std", type=float)
    sp.add_argument("--gain", dest="gain_h", type=float)
    sp.add_argument("--grad-clip", dest="grad_clip", type=float,
                    help="global gradient-norm cap per update; 0 disables")
    sp.add_argument("--require-val-acc", dest="require_val_acc", type=float)
    sp.add_argument("--parallel-trials", type=int, default=1)
    sp.add_argument("--out", required=True, type=Path)

    sp = add("eval", cmd_eval, "accuracy of a model file on a TSV dataset")
    sp.add_argument("--model", required=True, type=Path)
    sp.add_argument("--data", required=True, type=Path)

    sp = add("extract", cmd_extract, "extract a DFA from a model and compare it with an oracle")
    sp.add_argument("--model", required=True, type=Path)
    sp.add_argument("--oracle", type=Path)
    sp.add_argument("--grammar", type=_grammar)
    sp.add_argument("--k-min", type=int, default=2)
    sp.add_argument("--k-max", type=int, default=24)
    sp.add_argument("--timeout", type=float, default=1500.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--name", default="extracted")
    sp.add_argument("--out", required=True, type=Path)

    sp = add("minimize", cmd_minimize, "minimize a DFA file")
    sp.add_argument("--dfa", type=Path)
    sp.add_argument("--grammar", type=_grammar)
    sp.add_argument("--out", type=Path)
    sp.add_argument("--dot", action="store_true", help="also write <out>.dot")

    sp = add("equiv", cmd_equiv, "check two DFA files for language equivalence")
    sp.add_argument("a", type=Path)
    sp.add_argument("b", type=Path)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "extract" and not (args.oracle or args.grammar):
        parser.error("extract needs --oracle FILE or --grammar 1..7")
    try:
        return args.func(args)
    except (UsageError, ser.FormatError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PermissionError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
