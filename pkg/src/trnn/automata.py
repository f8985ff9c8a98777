"""Deterministic finite automata, the Tomita grammars, and dataset sampling.

Strings are handled as tuples of alphabet indices.  Every public function
also accepts a plain ``str`` over the DFA's alphabet for convenience.
"""

from __future__ import annotations

import itertools
import random
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Alphabet",
    "DFA",
    "LabeledString",
    "Dataset",
    "InvalidSymbolError",
    "dfa_accepts",
    "tomita",
    "tomita_predicate",
    "minimize",
    "canonical",
    "equivalent",
    "isomorphic",
    "relabel",
    "random_dfa",
    "count_by_length",
    "sample_dataset",
    "transition_tensor",
    "all_strings",
]


class InvalidSymbolError(ValueError):
    """A symbol is not part of the alphabet."""


@dataclass(frozen=True)
class Alphabet:
    symbols: str

    def __post_init__(self):
        if len(self.symbols) < 1:
            raise ValueError("alphabet must contain at least one symbol")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError(f"duplicate symbols in alphabet {self.symbols!r}")

    @property
    def m(self) -> int:
        return len(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, ch: str) -> int:
        i = self.symbols.find(ch)
        if i < 0 or len(ch) != 1:
            raise InvalidSymbolError(f"symbol {ch!r} not in alphabet {self.symbols!r}")
        return i

    def encode(self, s: str | Sequence[int]) -> tuple[int, ...]:
        """Map a string (or an index sequence, which is range-checked) to indices."""
        if isinstance(s, str):
            return tuple(self.index(ch) for ch in s)
        out = tuple(int(k) for k in s)
        for k in out:
            if not 0 <= k < self.m:
                raise InvalidSymbolError(f"symbol index {k} out of range for m={self.m}")
        return out

    def decode(self, s: Sequence[int]) -> str:
        return "".join(self.symbols[k] for k in s)


@dataclass(frozen=True)
class DFA:
    """A total DFA.  ``delta[q][k]`` is the successor of state ``q`` on symbol ``k``."""

    alphabet: Alphabet
    delta: tuple[tuple[int, ...], ...]
    start: int
    accepting: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "delta", tuple(tuple(int(x) for x in row) for row in self.delta))
        object.__setattr__(self, "accepting", frozenset(int(q) for q in self.accepting))
        if isinstance(self.alphabet, str):
            object.__setattr__(self, "alphabet", Alphabet(self.alphabet))
        n, m = self.n, self.alphabet.m
        if n < 1:
            raise ValueError("a DFA needs at least one state")
        for q, row in enumerate(self.delta):
            if len(row) != m:
                raise ValueError(f"state {q}: expected {m} transitions, got {len(row)}")
            for k, r in enumerate(row):
                if not 0 <= r < n:
                    raise ValueError(f"delta[{q}][{k}] = {r} is not a state")
        if not 0 <= self.start < n:
            raise ValueError(f"start state {self.start} out of range")
        bad = [q for q in self.accepting if not 0 <= q < n]
        if bad:
            raise ValueError(f"accepting states out of range: {bad}")

    @property
    def n(self) -> int:
        return len(self.delta)

    @property
    def m(self) -> int:
        return self.alphabet.m

    def run(self, s: str | Sequence[int]) -> int:
        q = self.start
        for k in self.alphabet.encode(s):
            q = self.delta[q][k]
        return q

    def walk(self, s: str | Sequence[int]) -> list[int]:
        """States visited, starting with ``start``; length ``len(s) + 1``."""
        q = self.start
        out = [q]
        for k in self.alphabet.encode(s):
            q = self.delta[q][k]
            out.append(q)
        return out

    def delta_array(self) -> np.ndarray:
        return np.asarray(self.delta, dtype=np.int64).reshape(self.n, self.m)

    def accepting_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[list(self.accepting)] = True
        return mask


@dataclass(frozen=True)
class LabeledString:
    symbols: tuple[int, ...]
    label: bool


@dataclass(frozen=True)
class Dataset:
    name: str
    items: tuple[LabeledString, ...]
    max_len: int
    alphabet: Alphabet = Alphabet("ab")
    grammar: str = ""
    seed: int | None = None
    shortfall: int = 0

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def strings(self) -> set[tuple[int, ...]]:
        return {it.symbols for it in self.items}

    @property
    def positives(self) -> int:
        return sum(it.label for it in self.items)


def dfa_accepts(dfa: DFA, s: str | Sequence[int]) -> bool:
    return dfa.run(s) in dfa.accepting


# -- Tomita grammars -------------------------------------------------------
# State 0 is the start state in each table; "a" is index 0 and "b" index 1.

_TOMITA = {
    # a*
    1: ([[0, 1], [1, 1]], [0]),
    # (ab)*
    2: ([[1, 2], [2, 0], [2, 2]], [0]),
    # no odd a-block immediately followed by an odd b-block
    # 0: clean, 1: odd a-block, 2: odd a then odd b, 3: odd a then even b, 4: dead
    3: ([[1, 0], [0, 2], [4, 3], [1, 2], [4, 4]], [0, 1, 3]),
    # no aaa
    4: ([[1, 0], [2, 0], [3, 0], [3, 3]], [0, 1, 2]),
    # even #a and even #b; state = 2*(#a mod 2) + (#b mod 2)
    5: ([[2, 1], [3, 0], [0, 3], [1, 2]], [0]),
    # #a - #b = 0 mod 3
    6: ([[1, 2], [2, 0], [0, 1]], [0]),
    # b*a*b*a*
    7: ([[1, 0], [1, 2], [3, 2], [3, 4], [4, 4]], [0, 1, 2, 3]),
}


def tomita(k: int) -> DFA:
    """Hand-built minimal DFA for Tomita grammar ``k`` over ``{a, b}``."""
    if k not in _TOMITA:
        raise ValueError(f"Tomita grammar index must be in 1..7, got {k!r}")
    delta, acc = _TOMITA[k]
    return DFA(Alphabet("ab"), tuple(map(tuple, delta)), 0, frozenset(acc))


def _runs(s: str) -> list[tuple[str, int]]:
    return [(ch, len(list(g))) for ch, g in itertools.groupby(s)]


def tomita_predicate(k: int, s: str | Sequence[int]) -> bool:
    """Literal evaluation of the Tomita definitions by counting and pattern logic.

    Kept free of any automaton so it can serve as an oracle for :func:`tomita`.
    """
    if not isinstance(s, str):
        s = Alphabet("ab").decode(Alphabet("ab").encode(s))
    if set(s) - {"a", "b"}:
        raise InvalidSymbolError(f"string {s!r} is not over {{a, b}}")
    na, nb = s.count("a"), s.count("b")
    if k == 1:
        return nb == 0
    if k == 2:
        return s == "ab" * (len(s) // 2)
    if k == 3:
        runs = _runs(s)
        for (c1, l1), (c2, l2) in zip(runs, runs[1:]):
            if c1 == "a" and c2 == "b" and l1 % 2 == 1 and l2 % 2 == 1:
                return False
        return True
    if k == 4:
        return "aaa" not in s
    if k == 5:
        return na % 2 == 0 and nb % 2 == 0
    if k == 6:
        return (na - nb) % 3 == 0
    if k == 7:
        return _b_a_b_a(s)
    raise ValueError(f"Tomita grammar index must be in 1..7, got {k!r}")


def _b_a_b_a(s: str) -> bool:
    # b*a*b*a*: at most four blocks once a leading b-block is assumed.
    blocks = [c for c, _ in _runs(s)]
    if blocks and blocks[0] == "a":
        blocks.insert(0, "b")
    return len(blocks) <= 4


def all_strings(m: int, max_len: int, min_len: int = 0) -> Iterable[tuple[int, ...]]:
    """Every index string with ``min_len <= len <= max_len`` in shortlex order."""
    for length in range(min_len, max_len + 1):
        yield from itertools.product(range(m), repeat=length)


# -- minimization and comparison --------------------------------------------

def _reachable(dfa: DFA) -> list[int]:
    seen = {dfa.start}
    order = [dfa.start]
    queue = deque(order)
    while queue:
        q = queue.popleft()
        for r in dfa.delta[q]:
            if r not in seen:
                seen.add(r)
                order.append(r)
                queue.append(r)
    return order


def canonical(dfa: DFA) -> DFA:
    """Renumber reachable states in BFS order from the start (alphabet-order ties).

    Unreachable states are dropped; no merging happens here.
    """
    order = _reachable(dfa)
    new = {q: i for i, q in enumerate(order)}
    delta = tuple(tuple(new[r] for r in dfa.delta[q]) for q in order)
    acc = frozenset(new[q] for q in order if q in dfa.accepting)
    return DFA(dfa.alphabet, delta, 0, acc)


def minimize(dfa: DFA) -> DFA:
    """Hopcroft partition refinement followed by canonical BFS numbering."""
    d = canonical(dfa)
    n, m = d.n, d.m
    inverse = [[[] for _ in range(n)] for _ in range(m)]
    for q in range(n):
        for k in range(m):
            inverse[k][d.delta[q][k]].append(q)

    acc = frozenset(d.accepting)
    rej = frozenset(range(n)) - acc
    partition = [b for b in (acc, rej) if b]
    block_of = [0] * n
    for i, b in enumerate(partition):
        for q in b:
            block_of[q] = i
    work = {min(range(len(partition)), key=lambda i: len(partition[i]))} if len(partition) == 2 else set()

    while work:
        splitter = partition[work.pop()]
        for k in range(m):
            pre = {p for q in splitter for p in inverse[k][q]}
            if not pre:
                continue
            touched = {block_of[p] for p in pre}
            for bi in touched:
                block = partition[bi]
                inside = block & pre
                outside = block - pre
                if not outside:
                    continue
                partition[bi] = inside
                partition.append(outside)
                nj = len(partition) - 1
                for q in outside:
                    block_of[q] = nj
                if bi in work:
                    work.add(nj)
                else:
                    work.add(bi if len(inside) <= len(outside) else nj)

    delta = tuple(
        tuple(block_of[d.delta[min(b)][k]] for k in range(m)) for b in partition
    )
    accepting = frozenset(i for i, b in enumerate(partition) if b & acc)
    return canonical(DFA(d.alphabet, delta, block_of[d.start], accepting))


def equivalent(a: DFA, b: DFA) -> tuple[bool, str | None]:
    """Language equality via BFS over the product automaton.

    Returns ``(True, None)`` or ``(False, w)`` where ``w`` is the shortlex-least
    string accepted by exactly one of the automata.
    """
    if a.alphabet != b.alphabet:
        raise ValueError(f"alphabet mismatch: {a.alphabet.symbols!r} vs {b.alphabet.symbols!r}")
    start = (a.start, b.start)
    parent: dict[tuple[int, int], tuple[tuple[int, int], int] | None] = {start: None}
    queue = deque([start])
    while queue:
        pair = queue.popleft()
        p, q = pair
        if (p in a.accepting) != (q in b.accepting):
            path = []
            while parent[pair] is not None:
                pair, k = parent[pair]
                path.append(k)
            return False, a.alphabet.decode(reversed(path))
        for k in range(a.m):
            nxt = (a.delta[p][k], b.delta[q][k])
            if nxt not in parent:
                parent[nxt] = (pair, k)
                queue.append(nxt)
    return True, None


def isomorphic(a: DFA, b: DFA) -> bool:
    """Structural identity of two minimal DFAs up to state renaming."""
    for name, d in (("first", a), ("second", b)):
        if minimize(d).n != d.n:
            raise ValueError(f"{name} DFA is not minimal; minimize it before comparing")
    return a.alphabet == b.alphabet and canonical(a) == canonical(b)


def relabel(dfa: DFA, perm: Sequence[int]) -> DFA:
    """Rename state ``q`` to ``perm[q]``."""
    inv = {perm[q]: q for q in range(dfa.n)}
    delta = tuple(tuple(perm[r] for r in dfa.delta[inv[i]]) for i in range(dfa.n))
    return DFA(dfa.alphabet, delta, perm[dfa.start], frozenset(perm[q] for q in dfa.accepting))


def random_dfa(n: int, m: int, rng: random.Random | int, alphabet: str = "abcdefgh") -> DFA:
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    delta = tuple(tuple(rng.randrange(n) for _ in range(m)) for _ in range(n))
    acc = frozenset(q for q in range(n) if rng.random() < 0.5)
    return DFA(Alphabet(alphabet[:m]), delta, rng.randrange(n), acc)


# -- counting and sampling ----------------------------------------------------

def _completions(dfa: DFA, max_len: int) -> list[list[int]]:
    """``c[r][q]`` = number of length-``r`` suffixes leading from ``q`` to acceptance."""
    c = [[1 if q in dfa.accepting else 0 for q in range(dfa.n)]]
    for _ in range(max_len):
        prev = c[-1]
        c.append([sum(prev[r] for r in dfa.delta[q]) for q in range(dfa.n)])
    return c


def count_by_length(dfa: DFA, max_len: int) -> list[int]:
    """Number of accepted strings of each length ``0..max_len`` (exact integers)."""
    c = _completions(dfa, max_len)
    return [c[length][dfa.start] for length in range(max_len + 1)]


def _sample_string(dfa, comp, length, label, rng):
    """Uniform draw among strings of ``length`` whose membership equals ``label``."""
    m = dfa.m
    q = dfa.start
    out = []
    for r in range(length, 0, -1):
        weights = []
        for k in range(m):
            acc = comp[r - 1][dfa.delta[q][k]]
            weights.append(acc if label else m ** (r - 1) - acc)
        pick = rng.randrange(sum(weights))
        for k, w in enumerate(weights):
            if pick < w:
                break
            pick -= w
        out.append(k)
        q = dfa.delta[q][k]
    return tuple(out)


def _enumerate_class(dfa, comp, max_len, label):
    """All strings up to ``max_len`` with the given membership (small classes only)."""
    m = dfa.m
    out = []

    def rec(q, prefix, remaining):
        if (q in dfa.accepting) == label:
            out.append(tuple(prefix))
        if remaining == 0:
            return
        for k in range(m):
            r = dfa.delta[q][k]
            have = sum(comp[j][r] for j in range(remaining))
            if not label:
                have = sum(m ** j for j in range(remaining)) - have
            if have:
                prefix.append(k)
                rec(r, prefix, remaining - 1)
                prefix.pop()

    rec(dfa.start, [], max_len)
    return out


def sample_dataset(
    dfa: DFA,
    count: int,
    max_len: int,
    seed: int,
    exclude: Iterable[Sequence[int]] = (),
    name: str = "train",
    grammar: str = "",
    min_len: int = 0,
) -> Dataset:
    """Draw up to ``count`` distinct labeled strings, balanced between classes.

    A length is chosen uniformly among those that still have unused strings of
    the requested class, then a string of that length is drawn uniformly from
    the class.  A class with fewer than ``count // 2`` available strings is
    taken whole and the other class fills the remainder.  ``shortfall`` on the
    result records how many strings were missing overall.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    rng = random.Random(seed)
    m = dfa.m
    excl = {tuple(s) for s in exclude}
    comp = _completions(dfa, max_len)

    lengths = range(min_len, max_len + 1)
    pos_by_len = {L: comp[L][dfa.start] for L in lengths}
    neg_by_len = {L: m ** L - pos_by_len[L] for L in lengths}
    for s in excl:
        if min_len <= len(s) <= max_len:
            if dfa_accepts(dfa, s):
                pos_by_len[len(s)] -= 1
            else:
                neg_by_len[len(s)] -= 1
    avail = {True: sum(pos_by_len.values()), False: sum(neg_by_len.values())}

    want_pos = count // 2
    want = {True: want_pos, False: count - want_pos}
    for lab in (True, False):
        if avail[lab] < want[lab]:
            want[lab] = avail[lab]
            want[not lab] = min(avail[not lab], count - avail[lab])

    chosen: list[LabeledString] = []
    for lab, remaining in ((True, pos_by_len), (False, neg_by_len)):
        need = want[lab]
        if need == 0:
            continue
        if need == avail[lab] and need <= 50_000:
            members = [
                s for s in _enumerate_class(dfa, comp, max_len, lab)
                if len(s) >= min_len and s not in excl
            ]
            rng.shuffle(members)
            chosen.extend(LabeledString(s, lab) for s in members)
            continue
        taken: set[tuple[int, ...]] = set()
        left = dict(remaining)
        while len(taken) < need:
            open_lengths = [L for L in lengths if left[L] > 0]
            L = rng.choice(open_lengths)
            s = _sample_string(dfa, comp, L, lab, rng)
            if s in taken or s in excl:
                continue
            taken.add(s)
            left[L] -= 1
            chosen.append(LabeledString(s, lab))

    rng.shuffle(chosen)
    return Dataset(
        name=name,
        items=tuple(chosen),
        max_len=max_len,
        alphabet=dfa.alphabet,
        grammar=grammar,
        seed=seed,
        shortfall=count - len(chosen),
    )


def transition_tensor(dfa: DFA) -> np.ndarray:
    """0/1 tensor ``W[i, j, k] = 1`` iff ``delta(q_j, a_k) = q_i``."""
    W = np.zeros((dfa.n, dfa.n, dfa.m))
    for j in range(dfa.n):
        for k in range(dfa.m):
            W[dfa.delta[j][k], j, k] = 1.0
    return W
