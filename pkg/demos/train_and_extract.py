"""Train a network on Tomita 4 samples, test it on much longer strings, and
extract the automaton it learned.

Usage: python demos/train_and_extract.py [grammar] [seed]
"""

import sys

from trnn.automata import tomita
from trnn.extraction import extract
from trnn.serialize import dfa_to_dot
from trnn.training import TrainConfig, make_splits, run_trial


def main(grammar=4, seed=0):
    dfa = tomita(grammar)
    splits = make_splits(dfa, seed, grammar=f"tomita{grammar}")
    for name, ds in splits.items():
        print(f"{name:<6} {len(ds):>5} strings up to length {ds.max_len}, {ds.positives} positive")

    cfg = TrainConfig(seed=seed)
    model, metrics = run_trial(cfg, splits)
    for row in metrics.per_epoch[::5]:
        print(f"epoch {row['epoch']:>3} loss {row['trainLoss']:.4f} val {row['valAcc']:.1f}%")
    print("first perfect validation epoch:", metrics.epochs_to_perfect_val)
    for name, acc in metrics.test_acc.items():
        print(f"{name:<6} accuracy {acc:.2f}%")

    rep = extract(model, dfa)
    print(f"\nextraction: {rep.status}, k={rep.k}, raw states {rep.raw_state_count}")
    if rep.dfa is not None:
        print(dfa_to_dot(rep.dfa, f"tomita{grammar}_extracted"))
    elif rep.comparison is not None:
        print("counterexample:", repr(rep.comparison.counterexample))


if __name__ == "__main__":
    main(*map(int, sys.argv[1:3]))
