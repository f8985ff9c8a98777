"""Second-order (tensor) recurrent cell.

The update is ``z'_i = act(sum_j W[i, j, k] z_j + b_i)`` for input symbol ``k``;
since inputs are one-hot the bilinear form is a per-symbol matrix-vector
product, so ``W[:, :, k]`` is used directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "Activation",
    "TrnnCell",
    "Model",
    "StabilityReport",
    "saturated_linear",
    "sharp_sigmoid",
    "min_gain",
    "step",
    "run",
    "readout",
    "classify",
    "check_stability",
    "DEFAULT_EPS0",
    "DEFAULT_EPS",
]

DEFAULT_EPS0 = 0.25
DEFAULT_EPS = 0.01


def saturated_linear(v):
    """Clamp to ``[0, 1]``."""
    return np.clip(v, 0.0, 1.0)


def sharp_sigmoid(v, H: float):
    """Logistic function with gain ``H``: ``1 / (1 + exp(-H v))``."""
    return expit(H * np.asarray(v, dtype=float))


def min_gain(eps0: float = DEFAULT_EPS0, eps: float = DEFAULT_EPS) -> float:
    """Smallest gain ``H`` with ``sharp_sigmoid(-(1/2 - eps0), H) <= eps``.

    With this gain, any vector within ``eps0`` (sup norm) of a 0/1 vector is
    mapped by ``sharp_sigmoid(z - 1/2, H)`` to within ``eps`` of that 0/1 vector.
    """
    if not 0.0 < eps0 < 0.5:
        raise ValueError(f"eps0 must lie in (0, 1/2), got {eps0}")
    if not 0.0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 1/2), got {eps}")
    return math.log(1.0 / eps - 1.0) / (0.5 - eps0)


@dataclass(frozen=True)
class Activation:
    kind: str = "sharp_sigmoid"
    H: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in ("saturated_linear", "sharp_sigmoid"):
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "sharp_sigmoid" and not self.H > 0:
            raise ValueError(f"gain H must be positive, got {self.H}")

    def __call__(self, v):
        v = np.asarray(v, dtype=float) + self.shift
        if self.kind == "saturated_linear":
            return saturated_linear(v)
        return sharp_sigmoid(v, self.H)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TrnnCell:
    """Weights ``W`` of shape ``(n_h, n_h, m)`` indexed (next, prev, symbol) and bias ``b``."""

    W: np.ndarray
    b: np.ndarray
    activation: Activation = field(default_factory=Activation)

    def __post_init__(self):
        W, b = _frozen(self.W), _frozen(self.b)
        if W.ndim != 3 or W.shape[0] != W.shape[1]:
            raise ValueError(f"W must have shape (n_h, n_h, m), got {W.shape}")
        if b.shape != (W.shape[0],):
            raise ValueError(f"b must have shape ({W.shape[0]},), got {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def n_h(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.W.shape[2]


@dataclass(frozen=True, eq=False)
class Model:
    """A cell plus a logistic readout on the final hidden state."""

    cell: TrnnCell
    readout_w: np.ndarray
    readout_b: float
    init_state: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "readout_w", _frozen(self.readout_w))
        object.__setattr__(self, "init_state", _frozen(self.init_state))
        object.__setattr__(self, "readout_b", float(self.readout_b))
        n_h = self.cell.n_h
        if self.readout_w.shape != (n_h,) or self.init_state.shape != (n_h,):
            raise ValueError("readout weights and initial state must have length n_h")

    @property
    def n_h(self) -> int:
        return self.cell.n_h

    @property
    def m(self) -> int:
        return self.cell.m

    def final_state(self, s: Sequence[int]) -> np.ndarray:
        return run(self.cell, self.init_state, s)[-1]

    def accept_prob(self, s: Sequence[int]) -> float:
        return readout(self, self.final_state(s))

    def accepts(self, s: Sequence[int]) -> bool:
        return classify(self, self.final_state(s))


def step(cell: TrnnCell, z, k: int) -> np.ndarray:
    if not 0 <= k < cell.m:
        raise IndexError(f"input symbol {k} out of range for m={cell.m}")
    z = np.asarray(z, dtype=float)
    if z.shape != (cell.n_h,):
        raise ValueError(f"hidden state must have shape ({cell.n_h},), got {z.shape}")
    return cell.activation(cell.W[:, :, k] @ z + cell.b)


def run(cell: TrnnCell, init, s: Sequence[int]) -> np.ndarray:
    """Hidden trajectory as an array of shape ``(len(s) + 1, n_h)``, row 0 is ``init``."""
    z = np.asarray(init, dtype=float)
    out = np.empty((len(s) + 1, cell.n_h))
    out[0] = z
    for t, k in enumerate(s):
        z = step(cell, z, int(k))
        out[t + 1] = z
    return out


def readout(model: Model, z) -> float:
    return float(expit(model.readout_w @ np.asarray(z, dtype=float) + model.readout_b))


def classify(model: Model, z) -> bool:
    # ties (exactly 0.5) count as accept
    return readout(model, z) >= 0.5


class StabilityReport(NamedTuple):
    stable: bool
    worst_deviation: float


def check_stability(
    cell: TrnnCell,
    z_star,
    radius: float,
    trials: int = 100,
    seed: int = 0,
    tol: float = DEFAULT_EPS,
    input: int = 0,
    iterations: int = 50,
) -> StabilityReport:
    """Probe whether ``z_star`` attracts nearby states under a fixed input symbol.

    ``trials`` points are drawn uniformly from the sup-norm ball of ``radius``
    around ``z_star`` (clipped to the unit cube), iterated ``iterations`` times,
    and compared with ``z_star``.  With ``radius == 0`` only ``z_star`` itself
    is iterated, so the deviation measures its own drift.
    """
    if not radius < 0.5:
        raise ValueError("radius must be below 1/2")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    z_star = np.asarray(z_star, dtype=float)
    rng = np.random.default_rng(seed)
    if radius == 0:
        starts = z_star[None, :]
    else:
        noise = rng.uniform(-radius, radius, size=(trials, cell.n_h))
        starts = np.clip(z_star + noise, 0.0, 1.0)
    Wk = cell.W[:, :, input]
    Z = starts.T
    for _ in range(iterations):
        Z = cell.activation(Wk @ Z + cell.b[:, None])
    worst = float(np.max(np.abs(Z.T - z_star)))
    return StabilityReport(worst <= tol, worst)
