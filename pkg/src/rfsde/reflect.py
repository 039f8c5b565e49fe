"""Catching-up (projected Euler) scheme for the reflected system.

The state is advanced by an explicit Euler step driven by the drift and the
noise increment, then projected onto the current constraint interval::

    X[k+1] = clip(X[k] + b(X[k]) dt + dW[k], l(t[k+1]), u(t[k+1]))
    Y[k+1] = Y[k] + X[k+1] - X[k] - b(X[k]) dt - dW[k]

with ``Y[0] = x0``, so ``X[k] = sum_{j<k} b(X[j]) dt + W[k] + Y[k]`` holds
by construction. Noise arrays may carry leading batch dimensions; all
replications then advance together.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import PreconditionError, TubeGapError
from .specdsl import FunctionSpec

__all__ = [
    "TubeSpec",
    "ReflectedPath",
    "uniform_grid",
    "project_interval",
    "solve_reflected",
    "path_variation",
    "decomposition_residual",
    "normal_cone_violations",
]


def uniform_grid(T: float, n: int) -> np.ndarray:
    if not T > 0 or n < 1:
        raise PreconditionError(f"grid needs T > 0 and n >= 1, got T={T}, n={n}")
    return np.linspace(0.0, float(T), int(n) + 1)


def _grid_step(times: np.ndarray) -> float:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise PreconditionError("grid must be a 1-D array with at least two points")
    steps = np.diff(times)
    dt = (times[-1] - times[0]) / (times.size - 1)
    if times[0] != 0.0 or not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
        raise PreconditionError("grid must be uniform and start at 0")
    return float(dt)


@dataclass(frozen=True)
class TubeSpec:
    """Moving interval ``C(t) = [lower(t), upper(t)]``."""

    lower: FunctionSpec
    upper: FunctionSpec

    def __post_init__(self):
        for name, f in (("lower", self.lower), ("upper", self.upper)):
            if not f.is_smooth:
                warnings.warn(
                    f"tube {name} boundary {f.source!r} uses abs/sign/min/max/clamp "
                    "and may not be continuously differentiable",
                    RuntimeWarning,
                    stacklevel=3,
                )

    @classmethod
    def from_sources(cls, lower: str, upper: str, variable: str = "t") -> "TubeSpec":
        return cls(FunctionSpec(lower, variable), FunctionSpec(upper, variable))

    def bounds(self, times) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(times, dtype=float)
        lo = np.broadcast_to(self.lower(t), t.shape).astype(float)
        hi = np.broadcast_to(self.upper(t), t.shape).astype(float)
        return lo, hi

    def derivatives(self, times) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(times, dtype=float)
        dlo = np.broadcast_to(self.lower.derivative(t), t.shape).astype(float)
        dhi = np.broadcast_to(self.upper.derivative(t), t.shape).astype(float)
        return dlo, dhi

    def min_gap(self, times) -> float:
        lo, hi = self.bounds(times)
        return float(np.min(hi - lo))

    def check(self, times) -> float:
        """Raise :class:`TubeGapError` unless ``lower < upper`` on the grid; return the minimum gap."""
        lo, hi = self.bounds(times)
        gap = hi - lo
        k = int(np.argmin(gap))
        if not gap[k] > 0:
            raise TubeGapError(
                f"tube collapses at t={float(np.asarray(times)[k]):.6g}: "
                f"lower={lo[k]:.6g} >= upper={hi[k]:.6g}"
            )
        return float(gap[k])

    def lipschitz_on_grid(self, times) -> float:
        """``max_k max(|dl_k|, |du_k|) / dt``, the grid estimate of Lip(C)."""
        dt = _grid_step(times)
        lo, hi = self.bounds(times)
        return float(max(np.max(np.abs(np.diff(lo))), np.max(np.abs(np.diff(hi)))) / dt)


@dataclass(frozen=True)
class ReflectedPath:
    """Discrete Skorokhod decomposition on a uniform grid.

    ``X``, ``Y`` and ``W`` have shape ``(..., n + 1)``; ``lower`` and
    ``upper`` hold the tube on the grid.
    """

    times: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    W: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    x0: float

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n(self) -> int:
        return self.times.size - 1

    @cached_property
    def dY(self) -> np.ndarray:
        return np.diff(self.Y, axis=-1)


def project_interval(x, lo, hi):
    """Euclidean projection of ``x`` onto ``[lo, hi]``."""
    if np.any(np.asarray(lo) > np.asarray(hi)):
        raise PreconditionError(f"empty interval: lo={lo} > hi={hi}")
    out = np.minimum(np.maximum(x, lo), hi)
    return float(out) if np.ndim(out) == 0 else out


def solve_reflected(
    b: FunctionSpec, tube: TubeSpec, W, x0: float, times
) -> ReflectedPath:
    """Run the catching-up scheme for drift ``b``, tube ``tube`` and noise ``W``.

    ``W`` must start at zero; pass zeros for the noiseless system.
    """
    times = np.asarray(times, dtype=float)
    dt = _grid_step(times)
    W = np.asarray(W, dtype=float)
    if W.shape[-1] != times.size:
        raise PreconditionError(
            f"noise has {W.shape[-1]} points but the grid has {times.size}"
        )
    if np.any(W[..., 0] != 0.0):
        raise PreconditionError("noise must start at W(0) = 0")
    tube.check(times)
    lo, hi = tube.bounds(times)
    x0 = float(x0)
    if not lo[0] <= x0 <= hi[0]:
        raise PreconditionError(
            f"x0={x0} lies outside C(0) = [{lo[0]:.6g}, {hi[0]:.6g}]"
        )

    drift = b.compiled
    dW = np.diff(W, axis=-1)
    X = np.empty_like(W)
    Y = np.empty_like(W)
    X[..., 0] = x0
    Y[..., 0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(times.size - 1):
            xk = X[..., k]
            pred = xk + drift(xk) * dt + dW[..., k]
            xn = np.minimum(np.maximum(pred, lo[k + 1]), hi[k + 1])
            X[..., k + 1] = xn
            Y[..., k + 1] = Y[..., k] + (xn - pred)
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("non-finite state in reflected solve")
    return ReflectedPath(times, X, Y, W, lo, hi, x0)


def path_variation(Y) -> float | np.ndarray:
    """Discrete 1-variation ``sum_k |Y[k+1] - Y[k]|`` along the last axis."""
    v = np.sum(np.abs(np.diff(np.asarray(Y, dtype=float), axis=-1)), axis=-1)
    return float(v) if np.ndim(v) == 0 else v


def decomposition_residual(path: ReflectedPath, b: FunctionSpec) -> float:
    """``max_k |X[k] - (sum_{j<k} b(X[j]) dt + W[k] + Y[k])|``."""
    drift = b.compiled(path.X[..., :-1]) * path.dt
    cum = np.concatenate(
        (np.zeros(path.X.shape[:-1] + (1,)), np.cumsum(drift, axis=-1)), axis=-1
    )
    return float(np.max(np.abs(path.X - (cum + path.W + path.Y))))


def normal_cone_violations(path: ReflectedPath, atol: float = 1e-12) -> int:
    """Count steps where the reflection pushes in a forbidden direction.

    Pushes up (``dY > 0``) are only allowed when the new state sits on the
    lower boundary, pushes down only on the upper boundary.
    """
    dY = path.dY
    Xn = path.X[..., 1:]
    at_lo = np.abs(Xn - path.lower[1:]) <= atol
    at_hi = np.abs(Xn - path.upper[1:]) <= atol
    bad_up = (dY > atol) & ~at_lo
    bad_down = (dY < -atol) & ~at_hi
    return int(np.count_nonzero(bad_up | bad_down))
