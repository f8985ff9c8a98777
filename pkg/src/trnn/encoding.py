"""Rule insertion: programming automata directly into second-order weights.

Two constructions live here.

``encode_dfa`` builds an (n+1)-neuron cell whose state block is the 0/1
transition tensor of the DFA and whose extra neuron (index 0) tracks whether
the current state is accepting.

``encode_tm`` builds a lattice of locally connected neuron columns sharing one
set of second-order weights.  Each column is updated from products of its own
activity with a neighbor's, followed by a hard threshold at 1.5 on the
integer-valued pre-activation:

* ``two_step``: columns are one-hot over ``K = m + 2n + 1`` neurons.  Indices
  ``0..m-1`` are tape symbols, index ``m`` is never active, and state ``q``
  (0-based) owns two head slots, ``m + 2q + 1`` (ready) and ``m + 2q + 2``
  (left move pending).  The head column sits immediately left of the scanned
  cell.  A clock of period two alternates two weight slices; one TM step
  takes two network steps.
* ``real_time``: each column carries a symbol block (m neurons) and a head
  block ``A`` (n + 1 neurons, index 0 meaning "no head here"), so
  ``K = m + n + 1``.  The head sits on its cell and every TM step takes one
  network step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .automata import DFA
from .core import (DEFAULT_EPS, DEFAULT_EPS0, Activation, Model, TrnnCell,
                   min_gain, sharp_sigmoid)
from .turing import (BLANK, TmConfig, TuringMachine, tm_run,
                     tm_validate)

__all__ = [
    "DfaEncoding",
    "TmLattice",
    "LatticeWeights",
    "SimulationFault",
    "UndecodableLatticeError",
    "InTransition",
    "SimulationReport",
    "encode_dfa",
    "first_order_neuron_bound",
    "column_width",
    "encode_tm",
    "lattice_step",
    "decode_lattice",
    "verify_simulation",
    "lattice_trace",
    "THRESHOLD",
]

THRESHOLD = 1.5


# -- DFA insertion -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DfaEncoding:
    model: Model
    dfa: DFA
    mode: str
    H: float | None
    state_of: tuple[int, ...]  # neuron -> DFA state; -1 for the response neuron

    @property
    def cell(self) -> TrnnCell:
        return self.model.cell

    @property
    def n_h(self) -> int:
        return self.model.n_h

    def one_hot(self, q: int) -> np.ndarray:
        """Exact hidden vector for DFA state ``q`` (response neuron included)."""
        z = np.zeros(self.n_h)
        z[1 + q] = 1.0
        z[0] = float(q in self.dfa.accepting)
        return z


def encode_dfa(dfa: DFA, mode: str = "exact", eps0: float = DEFAULT_EPS0,
               eps: float = DEFAULT_EPS) -> DfaEncoding:
    """Insert ``dfa`` into an (n+1)-neuron second-order cell.

    Both modes share the same 0/1 weights: ``W[1+i, 1+j, k] = 1`` iff
    ``delta(j, k) = i``, and ``W[0, 1+j, k] = 1`` iff ``delta(j, k)`` accepts.
    ``exact`` runs them through the saturated-linear activation, so 0/1
    vectors map to 0/1 vectors.  ``sigmoid`` uses ``h_H(v - 1/2)`` with
    ``H = min_gain(eps0, eps)``, which keeps every component within ``eps`` of
    the exact trajectory as long as ``(n - 1) * eps <= eps0`` (the largest
    pre-activation error collects ``eps`` from every other state neuron).
    """
    n, m = dfa.n, dfa.m
    if mode not in ("exact", "sigmoid"):
        raise ValueError(f"mode must be 'exact' or 'sigmoid', got {mode!r}")
    W = np.zeros((n + 1, n + 1, m))
    for j in range(n):
        for k in range(m):
            i = dfa.delta[j][k]
            W[1 + i, 1 + j, k] = 1.0
            if i in dfa.accepting:
                W[0, 1 + j, k] = 1.0
    if mode == "exact":
        act, H = Activation("saturated_linear"), None
    else:
        if (n - 1) * eps > eps0:
            raise ValueError(
                f"{n} states with eps={eps} can accumulate {(n - 1) * eps:.3g} > eps0={eps0}; "
                "lower eps"
            )
        H = min_gain(eps0, eps)
        act = Activation("sharp_sigmoid", H, shift=-0.5)
    cell = TrnnCell(W, np.zeros(n + 1), act)
    z0 = np.zeros(n + 1)
    z0[1 + dfa.start] = 1.0
    z0[0] = float(dfa.start in dfa.accepting)
    H_out = min_gain(eps0, eps)
    w = np.zeros(n + 1)
    w[0] = H_out
    model = Model(cell, w, -H_out / 2, z0)
    return DfaEncoding(model, dfa, mode, H, (-1,) + tuple(range(n)))


def first_order_neuron_bound(m: int, n: int) -> int:
    """Neurons a first-order network needs for an n-state, m-symbol DFA: ``2mn - m + 3``.

    Kept as a reporting constant next to the ``n + 1`` of the second-order
    encoding.  A variant ``2mn - m + 3n + 1`` also circulates for the same
    bound; for (m, n) = (70, 100) the two give 13933 and 14231.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    return 2 * m * n - m + 3


# -- Turing machine lattices -----------------------------------------------------

class SimulationFault(RuntimeError):
    """A lattice update broke the one-hot / single-head invariants."""

    def __init__(self, msg: str, column: int | None = None, t: int | None = None):
        super().__init__(msg)
        self.column = column
        self.t = t


class UndecodableLatticeError(ValueError):
    """The lattice does not hold exactly one head column."""


class InTransition(UndecodableLatticeError):
    """A two-step lattice is between the halves of a left move."""


def column_width(tm: TuringMachine, variant: str) -> int:
    if variant == "two_step":
        return tm.m + 2 * tm.n + 1
    if variant == "real_time":
        return tm.m + tm.n + 1
    raise ValueError(f"variant must be 'two_step' or 'real_time', got {variant!r}")


@dataclass(frozen=True, eq=False)
class LatticeWeights:
    """Shared column-local weights.

    two_step: ``left[p]`` and ``right[p]`` have shape (K, K, K) and are indexed
    ``[new, left-or-own, own-or-right]`` for clock phase ``p``.
    real_time: ``sym`` (m, m, n+1) updates the symbol block from the column's
    own (symbol, head) product; ``head`` (3, n+1, m, n+1) updates the head block
    from the products of the left, own and right columns; ``head_bias`` (n+1,).
    """

    variant: str
    left: np.ndarray | None = None
    right: np.ndarray | None = None
    sym: np.ndarray | None = None
    head: np.ndarray | None = None
    head_bias: np.ndarray | None = None

    def arrays(self) -> dict[str, np.ndarray]:
        names = ("left", "right") if self.variant == "two_step" else ("sym", "head", "head_bias")
        return {k: getattr(self, k) for k in names}


@dataclass(frozen=True, eq=False)
class TmLattice:
    variant: str
    tm: TuringMachine
    weights: LatticeWeights
    Z: np.ndarray                 # (columns, K) for two_step, (columns, m) for real_time
    A: np.ndarray | None = None   # (columns, n+1) for real_time
    t: int = 0
    activation: str = "threshold"
    H: float | None = None

    @property
    def K(self) -> int:
        return column_width(self.tm, self.variant)

    @property
    def parity(self) -> int:
        return self.t % 2 if self.variant == "two_step" else 0

    @property
    def cycles_per_tm_step(self) -> int:
        return 2 if self.variant == "two_step" else 1

    @property
    def columns(self) -> int:
        return self.Z.shape[0]

    def column_vectors(self) -> np.ndarray:
        """All K neurons of every column as one (columns, K) array."""
        return self.Z if self.A is None else np.concatenate([self.Z, self.A], axis=1)


def _two_step_weights(tm: TuringMachine) -> LatticeWeights:
    m, n = tm.m, tm.n
    K = column_width(tm, "two_step")

    def ready(q):
        return m + 2 * q + 1

    def pending(q):
        return m + 2 * q + 2

    heads = [(q, ready(q), False) for q in range(n)] + [(q, pending(q), True) for q in range(n)]
    left = np.zeros((2, K, K, K))
    right = np.zeros((2, K, K, K))
    every = range(K)

    def select_left(p, own, fn):
        # new value chosen by the left neighbour; right term proposes candidates
        outs = set()
        for l in every:
            j = fn(l)
            left[p, j, l, own] = 1.0
            outs.add(j)
        for j in outs:
            right[p, j, own, :] = 1.0

    def select_right(p, own, fn):
        outs = set()
        for r in every:
            j = fn(r)
            right[p, j, own, r] = 1.0
            outs.add(j)
        for j in outs:
            left[p, j, :, own] = 1.0

    def rule(q, r):
        return tm.transition(q, r)

    # phase 0: the ready head applies its rule together with the scanned cell
    for s in range(m):
        def after_head(l, s=s):
            for q, idx, is_pending in heads:
                if l == idx and not is_pending and not tm.is_final(q):
                    w, v, a = rule(q, s)
                    return ready(v) if a == +1 else w
            return s
        select_left(0, s, after_head)
    for q, idx, is_pending in heads:
        def head_update(r, q=q, idx=idx, is_pending=is_pending):
            if is_pending or tm.is_final(q) or r >= m:
                return idx
            w, v, a = rule(q, r)
            return {+1: w, 0: ready(v), -1: pending(v)}[a]
        select_right(0, idx, head_update)

    # phase 1: a pending head swaps with the symbol on its left
    for s in range(m):
        def before_head(r, s=s):
            for q, idx, is_pending in heads:
                if r == idx and is_pending:
                    return ready(q)
            return s
        select_right(1, s, before_head)
    for q, idx, is_pending in heads:
        def head_commit(l, idx=idx, is_pending=is_pending):
            if is_pending and l < m:
                return l
            return idx
        select_left(1, idx, head_commit)
    return LatticeWeights("two_step", left=left, right=right)


def _real_time_weights(tm: TuringMachine) -> LatticeWeights:
    m, n = tm.m, tm.n
    sym = np.zeros((m, m, n + 1))
    head = np.zeros((3, n + 1, m, n + 1))
    bias = np.zeros(n + 1)
    for s in range(m):
        sym[s, s, 0] = 2.0
        for q in range(n):
            w = s if tm.is_final(q) else tm.transition(q, s)[0]
            sym[w, s, 1 + q] = 2.0
    # offset index d = 0, 1, 2 stands for the column at i-1, i, i+1
    for d, off in enumerate((-1, 0, +1)):
        for s in range(m):
            head[d, 0, s, 0] = 1.0
            for q in range(n):
                if tm.is_final(q):
                    w, v, a = s, q, 0
                else:
                    w, v, a = tm.transition(q, s)
                if off + a == 0:
                    head[d, 1 + v, s, 1 + q] = 2.0
                else:
                    head[d, 0, s, 1 + q] = 1.0
    # "no head" needs all three neighbours to send nothing: 3 - 1 = 2 vs 2 - 1 = 1
    bias[0] = -1.0
    return LatticeWeights("real_time", sym=sym, head=head, head_bias=bias)


def _lattice_gain(K: int, eps0: float = DEFAULT_EPS0) -> tuple[float, float]:
    # Products of two near-one-hot columns drift by at most about 2*K*eps per
    # bilinear term; up to three terms with weights <= 2 feed each neuron.
    eps = eps0 / (16.0 * K)
    return min_gain(eps0, eps), eps


def encode_tm(tm: TuringMachine, tape: Sequence[int] = (), variant: str = "real_time",
              window: int | None = None, activation: str = "threshold") -> TmLattice:
    """Compile ``tm`` into a lattice holding its initial configuration on ``tape``."""
    problems = tm_validate(tm)
    if problems:
        raise ValueError("invalid Turing machine: " + "; ".join(problems))
    if activation not in ("threshold", "sigmoid"):
        raise ValueError(f"activation must be 'threshold' or 'sigmoid', got {activation!r}")
    K = column_width(tm, variant)
    tape = list(tape) or [BLANK]
    if window is None:
        window = len(tape) + 4
    if window < len(tape) + 2:
        raise ValueError(f"window {window} too small for an input of length {len(tape)} (need >= {len(tape) + 2})")
    H = _lattice_gain(K)[0] if activation == "sigmoid" else None
    if variant == "two_step":
        weights = _two_step_weights(tm)
        cols = [BLANK, -1] + tape
        cols += [BLANK] * max(0, window - len(cols) + 1)
        Z = np.zeros((len(cols), K))
        for i, c in enumerate(cols):
            Z[i, tm.m + 2 * tm.start + 1 if c == -1 else c] = 1.0
        lat = TmLattice(variant, tm, weights, Z, None, 0, activation, H)
    else:
        weights = _real_time_weights(tm)
        cols = [BLANK] + tape
        cols += [BLANK] * max(0, window - len(cols))
        Z = np.zeros((len(cols), tm.m))
        Z[np.arange(len(cols)), cols] = 1.0
        A = np.zeros((len(cols), tm.n + 1))
        A[:, 0] = 1.0
        A[1, 0] = 0.0
        A[1, 1 + tm.start] = 1.0
        lat = TmLattice(variant, tm, weights, Z, A, 0, activation, H)
    return _grow(lat)


def _head_columns(lat: TmLattice) -> np.ndarray:
    if lat.variant == "two_step":
        mask = lat.Z[:, lat.tm.m + 1:] > 0.5
    else:
        mask = lat.A[:, 1:] > 0.5
    return np.flatnonzero(mask.any(axis=1))


def _head_column(lat: TmLattice) -> int:
    where = _head_columns(lat)
    if len(where) != 1:
        raise UndecodableLatticeError(f"expected one head column, found {len(where)}")
    return int(where[0])


def _grow(lat: TmLattice, margin: int = 2) -> TmLattice:
    """Pad with blank columns so the head stays ``margin`` columns from each edge."""
    where = _head_columns(lat)
    if len(where) != 1:
        return lat  # headless (or already broken) lattices are left as they are
    p = int(where[0])
    lo = max(0, margin - p)
    hi = max(0, p + margin + 1 - lat.columns)
    if not lo and not hi:
        return lat

    def pad(X, fill_index):
        blank = np.zeros(X.shape[1])
        blank[fill_index] = 1.0
        return np.vstack([np.tile(blank, (lo, 1)), X, np.tile(blank, (hi, 1))])

    Z = pad(lat.Z, BLANK)
    A = pad(lat.A, 0) if lat.A is not None else None
    return replace(lat, Z=Z, A=A)


def _activate(lat: TmLattice, pre: np.ndarray) -> np.ndarray:
    if lat.activation == "threshold":
        return (pre >= THRESHOLD).astype(float)
    return sharp_sigmoid(pre - THRESHOLD, lat.H)


def _check(lat: TmLattice, heads_before: int = 1) -> None:
    blocks = [lat.Z] if lat.A is None else [lat.Z, lat.A]
    for X in blocks:
        on = X > 0.5
        counts = on.sum(axis=1)
        bad = np.flatnonzero(counts != 1)
        if len(bad):
            raise SimulationFault(
                f"column {bad[0]} has {counts[bad[0]]} active neurons after step {lat.t}",
                column=int(bad[0]), t=lat.t,
            )
    if lat.variant == "two_step":
        spare = np.flatnonzero(lat.Z[:, lat.tm.m] > 0.5)
        if len(spare):
            raise SimulationFault(f"column {spare[0]} activated the unused neuron", int(spare[0]), lat.t)
    heads = _head_columns(lat)
    if len(heads) != heads_before:
        col = int(heads[1]) if len(heads) > 1 else None
        raise SimulationFault(f"{len(heads)} head columns after step {lat.t}", column=col, t=lat.t)


def _bilinear(W: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``out[c, j] = sum_ab W[j, a, b] X[c, a] Y[c, b]`` for every column ``c``."""
    outer = (X[:, :, None] * Y[:, None, :]).reshape(X.shape[0], -1)
    return outer @ W.reshape(W.shape[0], -1).T


def _shifted(X: np.ndarray, fill_index: int) -> tuple[np.ndarray, np.ndarray]:
    blank = np.zeros((1, X.shape[1]))
    blank[0, fill_index] = 1.0
    left = np.vstack([blank, X[:-1]])
    right = np.vstack([X[1:], blank])
    return left, right


def lattice_step(lat: TmLattice) -> TmLattice:
    """One synchronous update of every column; raises :class:`SimulationFault` on breakage."""
    lat = _grow(lat)
    heads_before = min(len(_head_columns(lat)), 1)
    w = lat.weights
    if lat.variant == "two_step":
        p = lat.parity
        Zl, Zr = _shifted(lat.Z, BLANK)
        pre = _bilinear(w.left[p], Zl, lat.Z) + _bilinear(w.right[p], lat.Z, Zr)
        new = replace(lat, Z=_activate(lat, pre), t=lat.t + 1)
    else:
        Zl, Zr = _shifted(lat.Z, BLANK)
        Al, Ar = _shifted(lat.A, 0)
        pre_z = _bilinear(w.sym, lat.Z, lat.A)
        pre_a = (_bilinear(w.head[0], Zl, Al) + _bilinear(w.head[1], lat.Z, lat.A)
                 + _bilinear(w.head[2], Zr, Ar) + w.head_bias)
        new = replace(lat, Z=_activate(lat, pre_z), A=_activate(lat, pre_a), t=lat.t + 1)
    _check(new, heads_before)
    return new


def decode_lattice(lat: TmLattice) -> TmConfig:
    """Read the TM configuration back out of the lattice (steps = completed TM steps).

    Raises :class:`InTransition` for a two-step lattice caught between the
    halves of a left move, and :class:`UndecodableLatticeError` when there is
    not exactly one head column.
    """
    m = lat.tm.m
    p = _head_column(lat)
    if lat.variant == "two_step":
        idx = np.argmax(lat.Z, axis=1)
        slot = int(idx[p]) - (m + 1)
        q, is_pending = divmod(slot, 2)
        if is_pending:
            raise InTransition(f"left move of state {q} pending at column {p}")
        tape = tuple(int(s) for i, s in enumerate(idx) if i != p)
        if p >= len(tape):
            tape += (BLANK,)
        return TmConfig(tape, p, q, (lat.t + 1) // 2).normalized()
    sym = np.argmax(lat.Z, axis=1)
    q = int(np.argmax(lat.A[p])) - 1
    return TmConfig(tuple(int(s) for s in sym), p, q, lat.t).normalized()


def lattice_trace(lat: TmLattice, steps: int) -> tuple[TmLattice, str]:
    """Run ``steps`` network steps and render one trace line per step (including t=0)."""
    lines = []

    def line(l):
        try:
            c = decode_lattice(l)
            dec = f"{c.state},{c.head},{''.join(map(str, c.tape))}"
        except InTransition:
            dec = "IN-TRANSITION"
        return f"t={l.t} parity={l.parity} decoded={dec}\n"

    lines.append(line(lat))
    for _ in range(steps):
        lat = lattice_step(lat)
        lines.append(line(lat))
    return lat, "".join(lines)


class SimulationReport(NamedTuple):
    ok: bool
    first_divergence: int | None
    cycles_per_tm_step: int
    tm_steps: int
    network_steps: int
    detail: str = ""


def verify_simulation(tm: TuringMachine, tape: Sequence[int], variant: str, steps: int,
                      activation: str = "threshold", lattice: TmLattice | None = None) -> SimulationReport:
    """Co-run the interpreter and the lattice for ``steps`` TM steps.

    After the machine halts, the lattice keeps running and must keep decoding
    to the halted configuration.  ``lattice`` substitutes a prebuilt (possibly
    tampered) lattice for the freshly encoded one.
    """
    lat = lattice if lattice is not None else encode_tm(tm, tape, variant, activation=activation)
    r = lat.cycles_per_tm_step
    if steps <= 0:
        return SimulationReport(True, None, r, 0, 0)
    trace = tm_run(tm, tape, max_steps=steps, trace=True).trace
    try:
        if not decode_lattice(lat).same_as(trace[0]):
            return SimulationReport(False, 0, r, 0, lat.t, "initial configuration differs")
    except UndecodableLatticeError as exc:
        return SimulationReport(False, 0, r, 0, lat.t, str(exc))
    t0 = lat.t
    for c in range(1, steps + 1):
        expected = trace[min(c, len(trace) - 1)]
        try:
            for _ in range(r):
                lat = lattice_step(lat)
            got = decode_lattice(lat)
        except (SimulationFault, UndecodableLatticeError) as exc:
            return SimulationReport(False, c, r, c - 1, lat.t - t0, str(exc))
        if not got.same_as(expected):
            return SimulationReport(False, c, r, c - 1, lat.t - t0,
                                    f"decoded {got} but interpreter has {expected.normalized()}")
    measured = (lat.t - t0) // steps
    return SimulationReport(measured == r, None, measured, steps, lat.t - t0)
