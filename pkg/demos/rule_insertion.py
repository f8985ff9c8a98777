"""Program the Tomita automata into second-order networks and read them back.

For each grammar: the minimal DFA size, the network size (one neuron per
state plus a response neuron), the worst drift of the sigmoid network from
the exact one-hot trajectory over long random strings, and the automaton
recovered from the network by clustering its hidden states.
"""

import random

import numpy as np

from trnn.automata import minimize, tomita
from trnn.core import run
from trnn.encoding import encode_dfa
from trnn.extraction import extract


def drift(enc, n_strings=200, max_len=400, seed=0):
    rng = random.Random(seed)
    worst = 0.0
    for _ in range(n_strings):
        s = [rng.randrange(2) for _ in range(rng.randint(0, max_len))]
        traj = run(enc.cell, enc.model.init_state, s)
        exact = np.array([enc.one_hot(q) for q in enc.dfa.walk(s)])
        worst = max(worst, float(np.abs(traj - exact).max()))
    return worst


def main():
    print(f"{'grammar':>8} {'states':>6} {'n_h':>4} {'H':>8} {'drift':>9} {'extracted':>10}")
    for g in range(1, 8):
        dfa = tomita(g)
        sig = encode_dfa(dfa, "sigmoid")
        rep = extract(encode_dfa(dfa).model, dfa)
        got = f"{rep.dfa.n} ({rep.status})" if rep.dfa else rep.status
        print(f"{g:>8} {minimize(dfa).n:>6} {sig.n_h:>4} {sig.H:>8.3f} {drift(sig):>9.2e} {got:>10}")


if __name__ == "__main__":
    main()
