"""Noiseless trend system: solution, regime classification and ``dy/dt``."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import PreconditionError, TransitionPointError
from .reflect import ReflectedPath, TubeSpec, solve_reflected
from .specdsl import FunctionSpec

__all__ = [
    "Regime",
    "TrendSolution",
    "solve_trend",
    "default_contact_tol",
    "classify_regime",
    "classify_all",
    "ydot",
]

# tau = x - x0 and the Riemann-sum form must agree to this accuracy
_TAU_CROSSCHECK_TOL = 1e-9


class Regime(enum.Enum):
    INTERIOR = "interior"
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class TrendSolution:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    tau: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    x0: float
    contact_tol: float

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def regime(self) -> list[Regime]:
        return classify_all(self, self.contact_tol)

    def interp(self, name: str, t):
        """Linear interpolation of ``x``, ``y`` or ``tau`` at times ``t``."""
        return np.interp(t, self.times, getattr(self, name))

    def as_path(self) -> ReflectedPath:
        return ReflectedPath(
            self.times, self.x, self.y, np.zeros_like(self.x), self.lower, self.upper, self.x0
        )


def default_contact_tol(dt: float, tube_lipschitz: float) -> float:
    return 10.0 * dt * (1.0 + tube_lipschitz)


def solve_trend(
    b: FunctionSpec,
    tube: TubeSpec,
    x0: float,
    times,
    contact_tol: float | None = None,
) -> TrendSolution:
    """Solve the noiseless system and compute the trend ``tau = x - x0``.

    The trend is also formed as ``sum_{j<k} b(x_j) dt + y_k - x0`` and the
    two forms are cross-checked.
    """
    times = np.asarray(times, dtype=float)
    path = solve_reflected(b, tube, np.zeros_like(times), x0, times)
    x, y = path.X, path.Y
    tau = x - path.x0
    drift_sum = np.concatenate(([0.0], np.cumsum(b.compiled(x[:-1]) * path.dt)))
    tau_riemann = drift_sum + y - path.x0
    scale = 1.0 + np.max(np.abs(x)) + np.max(np.abs(y))
    if np.max(np.abs(tau - tau_riemann)) > _TAU_CROSSCHECK_TOL * scale:
        raise FloatingPointError("trend cross-check failed: x - x0 != int b(x) + y - x0")
    if contact_tol is None:
        contact_tol = default_contact_tol(path.dt, tube.lipschitz_on_grid(times))
    return TrendSolution(times, x, y, tau, path.lower, path.upper, path.x0, float(contact_tol))


def classify_regime(sol: TrendSolution, k: int, contact_tol: float | None = None) -> Regime:
    """Contact regime of the noiseless state at grid index ``k``."""
    tol = sol.contact_tol if contact_tol is None else contact_tol
    if not tol > 0:
        raise PreconditionError("contact_tol must be positive")
    lo, hi, xk = sol.lower[k], sol.upper[k], sol.x[k]
    if hi - lo <= 2.0 * tol:
        raise PreconditionError(
            f"tube gap {hi - lo:.3g} at index {k} is too small for contact_tol {tol:.3g}"
        )
    if xk <= lo + tol:
        return Regime.LOWER
    if xk >= hi - tol:
        return Regime.UPPER
    return Regime.INTERIOR


def classify_all(sol: TrendSolution, contact_tol: float | None = None) -> list[Regime]:
    return [classify_regime(sol, k, contact_tol) for k in range(sol.times.size)]


def ydot(
    b: FunctionSpec,
    tube: TubeSpec,
    sol: TrendSolution,
    k: int,
    contact_tol: float | None = None,
) -> float:
    """Density of the reflection term at a grid index inside a stable regime.

    Interior: 0. Lower boundary: ``l'(t) - b(l(t))``. Upper boundary:
    ``u'(t) - b(u(t))``. The regime must be the same at ``k - 1``, ``k`` and
    ``k + 1`` (one-sided at the ends of the grid), and the value must point
    into the tube (non-negative on the floor, non-positive on the ceiling).
    """
    n = sol.times.size
    if not 0 <= k < n:
        raise IndexError(k)
    neighbours = [j for j in (k - 1, k, k + 1) if 0 <= j < n]
    regimes = {classify_regime(sol, j, contact_tol) for j in neighbours}
    if len(regimes) != 1:
        raise TransitionPointError(
            f"regime changes around t={sol.times[k]:.6g} "
            f"({', '.join(sorted(r.value for r in regimes))}); dy/dt is undefined there"
        )
    (regime,) = regimes
    if regime is Regime.INTERIOR:
        return 0.0
    t = float(sol.times[k])
    if regime is Regime.LOWER:
        value = float(tube.lower.derivative(t) - b(tube.lower(t)))
        if value < -1e-12:
            raise TransitionPointError(
                f"floor contact at t={t:.6g} would need dy/dt={value:.6g} < 0; "
                "the state cannot stay on the lower boundary"
            )
        return max(value, 0.0)
    value = float(tube.upper.derivative(t) - b(tube.upper(t)))
    if value > 1e-12:
        raise TransitionPointError(
            f"ceiling contact at t={t:.6g} would need dy/dt={value:.6g} > 0; "
            "the state cannot stay on the upper boundary"
        )
    return min(value, 0.0)
