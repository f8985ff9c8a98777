"""Automaton extraction from recurrent networks by clustering hidden states.

Hidden states reached on a set of prefixes are clustered with k-means; each
cluster becomes a DFA state.  Transitions are traced breadth-first by stepping
the network from each centroid and snapping the result to the nearest
centroid.  The cluster count is swept upward until the minimized result is
language-equivalent to a reference automaton or the time budget runs out.
"""

from __future__ import annotations

import random
import time
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .automata import DFA, Alphabet, all_strings, equivalent, minimize
from .core import Model, classify, run, step

__all__ = [
    "StateSample",
    "ExtractionConfig",
    "ExtractionReport",
    "Comparison",
    "KMeansResult",
    "ExtractionTimeout",
    "StateBlowUp",
    "collect_states",
    "cluster_states",
    "build_automaton",
    "extract",
    "compare_to_oracle",
]


class ExtractionTimeout(RuntimeError):
    pass


class StateBlowUp(RuntimeError):
    """Transition tracing discovered more states than allowed."""


@dataclass(frozen=True, eq=False)
class StateSample:
    prefix: tuple[int, ...]
    hidden: np.ndarray
    cluster_id: int | None = None


@dataclass(frozen=True)
class ExtractionConfig:
    k_min: int = 2
    k_max: int = 24
    exhaustive_len: int = 6
    samples_per_length: int = 10
    max_prefix_len: int = 30
    timeout_seconds: float = 1500.0
    seed: int = 0
    max_states_before_abort: int = 1000

    def __post_init__(self):
        if self.k_min < 2:
            raise ValueError("k_min must be >= 2")
        if self.k_max < self.k_min:
            raise ValueError("k_max must be >= k_min")
        if not self.timeout_seconds > 0:
            raise ValueError("timeout_seconds must be positive")


class Comparison(NamedTuple):
    isomorphic: bool
    equivalent: bool
    counterexample: str | None


@dataclass
class ExtractionReport:
    status: str                      # "ok", "timeout" or "unstable"
    dfa: DFA | None = None           # minimized; present iff status == "ok"
    raw_state_count: int = 0
    k: int | None = None
    comparison: Comparison | None = None
    candidate: DFA | None = None     # best non-equivalent attempt when unstable
    elapsed: float = 0.0
    tried: list[int] = field(default_factory=list)


class KMeansResult(NamedTuple):
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float


def collect_states(model: Model, alphabet: Alphabet | int, cfg: ExtractionConfig = ExtractionConfig()
                   ) -> list[StateSample]:
    """Hidden states for every prefix up to ``exhaustive_len`` plus seeded random prefixes.

    Random strings of each length ``1..max_prefix_len`` (``samples_per_length``
    of them) contribute the states after every one of their prefixes.
    Duplicated prefixes are recorded once, in first-seen order.
    """
    m = alphabet if isinstance(alphabet, int) else alphabet.m
    rng = random.Random(cfg.seed)
    out: dict[tuple[int, ...], np.ndarray] = {}
    for s in all_strings(m, cfg.exhaustive_len):
        if s not in out:
            out[s] = run(model.cell, model.init_state, s)[-1]
    for length in range(1, cfg.max_prefix_len + 1):
        for _ in range(cfg.samples_per_length):
            s = tuple(rng.randrange(m) for _ in range(length))
            traj = run(model.cell, model.init_state, s)
            for t in range(length + 1):
                out.setdefault(s[:t], traj[t])
    return [StateSample(p, h) for p, h in out.items()]


def _as_matrix(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return np.atleast_2d(samples).astype(float)
    return np.array([s.hidden for s in samples], dtype=float)


def _nearest(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    idx = np.argmin(d, axis=1)  # ties go to the lowest index
    return idx, d[np.arange(len(X)), idx]


def cluster_states(samples, k: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-6,
                   deadline: float | None = None) -> KMeansResult:
    """Weighted k-means with k-means++ seeding on the distinct hidden vectors.

    Working on unique rows weighted by multiplicity makes the result
    independent of sample order and of uniform duplication.
    """
    X = _as_matrix(samples)
    uniq, inverse, counts = np.unique(X, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if k > len(uniq):
        raise ValueError(f"k={k} exceeds the {len(uniq)} distinct hidden states")
    w = counts.astype(float)
    rng = np.random.default_rng(seed)

    first = rng.choice(len(uniq), p=w / w.sum())
    C = [uniq[first]]
    d2 = ((uniq - C[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        p = w * d2
        nxt = rng.choice(len(uniq), p=p / p.sum()) if p.sum() > 0 else int(np.argmax(d2))
        C.append(uniq[nxt])
        d2 = np.minimum(d2, ((uniq - uniq[nxt]) ** 2).sum(axis=1))
    C = np.array(C)

    for _ in range(max_iter):
        if deadline is not None and time.monotonic() > deadline:
            raise ExtractionTimeout("k-means exceeded the time budget")
        assign, _ = _nearest(uniq, C)
        newC = C.copy()
        for j in range(k):
            sel = assign == j
            if sel.any():
                newC[j] = np.average(uniq[sel], axis=0, weights=w[sel])
        shift = float(np.max(np.abs(newC - C)))
        C = newC
        if shift <= tol:
            break
    assign, dist = _nearest(uniq, C)
    inertia = float((w * dist).sum())
    return KMeansResult(C, assign[inverse], inertia)


def build_automaton(model: Model, centroids: np.ndarray, alphabet: Alphabet | int,
                    max_states: int = 1000, deadline: float | None = None) -> DFA:
    """Breadth-first transition tracing from the centroids (unminimized result)."""
    alpha = Alphabet("abcdefghijklmnopqrstuvwxyz"[:alphabet]) if isinstance(alphabet, int) else alphabet
    C = np.asarray(centroids, dtype=float)
    start = int(_nearest(model.init_state[None, :], C)[0][0])
    order = {start: 0}
    queue = deque([start])
    edges: dict[int, list[int]] = {}
    while queue:
        if deadline is not None and time.monotonic() > deadline:
            raise ExtractionTimeout("transition tracing exceeded the time budget")
        c = queue.popleft()
        nxt = np.array([step(model.cell, C[c], k) for k in range(alpha.m)])
        targets = _nearest(nxt, C)[0]
        edges[c] = [int(t) for t in targets]
        for t in edges[c]:
            if t not in order:
                if len(order) >= max_states:
                    raise StateBlowUp(f"more than {max_states} states discovered")
                order[t] = len(order)
                queue.append(t)
    nodes = sorted(order, key=order.get)
    delta = tuple(tuple(order[t] for t in edges[c]) for c in nodes)
    acc = frozenset(order[c] for c in nodes if classify(model, C[c]))
    return DFA(alpha, delta, 0, acc)


def compare_to_oracle(extracted: DFA, oracle: DFA) -> Comparison:
    a, b = minimize(extracted), minimize(oracle)
    eq, cex = equivalent(a, b)
    return Comparison(a == b, eq, cex)


def extract(model: Model, oracle: DFA, cfg: ExtractionConfig = ExtractionConfig(),
            samples: Sequence[StateSample] | None = None) -> ExtractionReport:
    """Sweep the cluster count until the extracted DFA matches ``oracle``.

    Returns status ``ok`` for the smallest successful k, ``timeout`` when the
    wall-clock budget runs out, and ``unstable`` when no k in the sweep works
    or tracing blows up; the fewest-state failed attempt is kept as
    ``candidate``.
    """
    if model.m != oracle.m:
        raise ValueError(f"model has {model.m} input symbols, oracle alphabet has {oracle.m}")
    t0 = time.monotonic()
    deadline = t0 + cfg.timeout_seconds
    report = ExtractionReport(status="unstable")
    best: tuple[DFA, Comparison, int, int] | None = None
    try:
        if samples is None:
            samples = collect_states(model, oracle.alphabet, cfg)
        if time.monotonic() > deadline:
            raise ExtractionTimeout("state collection exceeded the time budget")
        X = _as_matrix(samples)
        distinct = len(np.unique(X, axis=0))
        for k in range(cfg.k_min, min(cfg.k_max, distinct) + 1):
            report.tried.append(k)
            km = cluster_states(X, k, seed=cfg.seed, deadline=deadline)
            try:
                raw = build_automaton(model, km.centroids, oracle.alphabet,
                                      cfg.max_states_before_abort, deadline)
            except StateBlowUp:
                continue
            dfa = minimize(raw)
            cmp = compare_to_oracle(dfa, oracle)
            if cmp.equivalent:
                report.status, report.dfa, report.k = "ok", dfa, k
                report.raw_state_count, report.comparison = raw.n, cmp
                break
            if best is None or dfa.n < best[0].n:
                best = (dfa, cmp, k, raw.n)
    except ExtractionTimeout:
        report.status = "timeout"
    if report.status != "ok" and best is not None:
        report.candidate, report.comparison, report.k, report.raw_state_count = best
    report.elapsed = time.monotonic() - t0
    return report
