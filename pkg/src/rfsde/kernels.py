"""Compactly supported smoothing kernels.

Each family is stored in a canonical form on a fixed support and mapped
affinely onto ``[supp_lo, supp_hi]``, so rescaled or shifted kernels keep
closed-form densities, CDFs and first moments.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .exceptions import ConfigError, PreconditionError

__all__ = [
    "KernelSpec",
    "KERNEL_FAMILIES",
    "eval_kernel",
    "kernel_cdf",
    "kernel_first_moment",
    "kernel_autocorrelation",
    "sigma2_HK",
]


class _Family(NamedTuple):
    lo: float
    hi: float
    pdf: Callable[[np.ndarray], np.ndarray]
    cdf: Callable[[np.ndarray], np.ndarray]
    mean: float
    kinks: tuple[float, ...]  # interior points where the density is not polynomial


def _tri_pdf(u):
    return np.clip(1.0 - np.abs(u), 0.0, None)


def _tri_cdf(u):
    u = np.clip(u, -1.0, 1.0)
    return np.where(u <= 0.0, 0.5 * (1.0 + u) ** 2, 1.0 - 0.5 * (1.0 - u) ** 2)


def _epa_pdf(u):
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _epa_cdf(u):
    u = np.clip(u, -1.0, 1.0)
    return 0.5 + 0.75 * (u - u**3 / 3.0)


def _box_pdf(u):
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def _box_cdf(u):
    return 0.5 * (np.clip(u, -1.0, 1.0) + 1.0)


def _ost_pdf(u):
    return np.where((u >= 0.0) & (u <= 1.0), 2.0 * (1.0 - u), 0.0)


def _ost_cdf(u):
    u = np.clip(u, 0.0, 1.0)
    return u * (2.0 - u)


KERNEL_FAMILIES: dict[str, _Family] = {
    "triangular": _Family(-1.0, 1.0, _tri_pdf, _tri_cdf, 0.0, (0.0,)),
    "epanechnikov": _Family(-1.0, 1.0, _epa_pdf, _epa_cdf, 0.0, ()),
    "box": _Family(-1.0, 1.0, _box_pdf, _box_cdf, 0.0, ()),
    "one_sided_triangular": _Family(0.0, 1.0, _ost_pdf, _ost_cdf, 1.0 / 3.0, ()),
}


@dataclass(frozen=True)
class KernelSpec:
    """Kernel density positive exactly on ``(supp_lo, supp_hi)``.

    ``KernelSpec("triangular")`` uses the family's natural support;
    ``KernelSpec.named("triangular", scale=2)`` stretches it to [-2, 2].
    """

    family: str
    supp_lo: float | None = None
    supp_hi: float | None = None

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ConfigError(
                f"unknown kernel {self.family!r}; choose from {sorted(KERNEL_FAMILIES)}"
            )
        fam = KERNEL_FAMILIES[self.family]
        if self.supp_lo is None:
            object.__setattr__(self, "supp_lo", fam.lo)
        if self.supp_hi is None:
            object.__setattr__(self, "supp_hi", fam.hi)
        object.__setattr__(self, "supp_lo", float(self.supp_lo))
        object.__setattr__(self, "supp_hi", float(self.supp_hi))
        if not self.supp_lo < self.supp_hi:
            raise ConfigError(f"kernel support needs A < B, got [{self.supp_lo}, {self.supp_hi}]")

    @classmethod
    def named(cls, family: str, scale: float = 1.0) -> "KernelSpec":
        if not scale > 0:
            raise ConfigError(f"kernel scale must be positive, got {scale}")
        fam = KERNEL_FAMILIES.get(family)
        if fam is None:
            return cls(family)  # raises with the list of families
        return cls(family, fam.lo * scale, fam.hi * scale)

    @property
    def A(self) -> float:
        return self.supp_lo

    @property
    def B(self) -> float:
        return self.supp_hi

    @property
    def reach(self) -> float:
        """``max(|A|, |B|)``, the half-width used in margin and bias bounds."""
        return max(abs(self.supp_lo), abs(self.supp_hi))

    @property
    def _fam(self) -> _Family:
        return KERNEL_FAMILIES[self.family]

    @property
    def _stretch(self) -> float:
        fam = self._fam
        return (fam.hi - fam.lo) / (self.supp_hi - self.supp_lo)

    def _to_canonical(self, u):
        return self._fam.lo + (np.asarray(u, dtype=float) - self.supp_lo) * self._stretch

    def breakpoints(self) -> np.ndarray:
        """Support ends plus interior kinks, in this kernel's coordinates."""
        fam = self._fam
        pts = [fam.lo, *fam.kinks, fam.hi]
        return np.array([self.supp_lo + (p - fam.lo) / self._stretch for p in pts])


def _maybe_scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def eval_kernel(k: KernelSpec, u):
    """Kernel density at ``u``; zero outside the support."""
    return _maybe_scalar(k._stretch * k._fam.pdf(k._to_canonical(u)))


def kernel_cdf(k: KernelSpec, v):
    """``Phi_K(v)``, the integral of the density from ``A`` to ``min(v, B)``."""
    return _maybe_scalar(k._fam.cdf(k._to_canonical(v)))


def kernel_first_moment(k: KernelSpec) -> float:
    """Closed-form ``int K(u) u du``."""
    fam = k._fam
    return k.supp_lo + (fam.mean - fam.lo) / k._stretch


@lru_cache(maxsize=8)
def _gauss_legendre(n: int):
    return roots_legendre(n)


@lru_cache(maxsize=64)
def _gauss_jacobi(n: int, beta: float):
    return roots_jacobi(n, 0.0, beta)


def kernel_autocorrelation(k: KernelSpec, w, nodes: int = 8):
    """``rho(w) = int K(u) K(u - w) du``.

    The integrand is piecewise polynomial between the breakpoints of the two
    shifted copies, so Gauss-Legendre on each piece is exact.
    """
    x, wts = _gauss_legendre(nodes)
    bp = k.breakpoints()
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    out = np.empty_like(w_arr)
    for i, lag in enumerate(w_arr):
        lo, hi = max(k.A, k.A + lag), min(k.B, k.B + lag)
        if hi <= lo:
            out[i] = 0.0
            continue
        cuts = np.unique(np.concatenate(([lo, hi], bp, bp + lag)))
        cuts = cuts[(cuts >= lo) & (cuts <= hi)]
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            u = mid + half * x
            total += half * np.dot(wts, eval_kernel(k, u) * eval_kernel(k, u - lag))
        out[i] = total
    return _maybe_scalar(out[0] if np.ndim(w) == 0 else out)


def _lag_breakpoints(k: KernelSpec) -> np.ndarray:
    bp = k.breakpoints()
    diffs = np.abs(bp[:, None] - bp[None, :]).ravel()
    width = k.B - k.A
    inner = diffs[(diffs > 1e-12 * width) & (diffs < width * (1 - 1e-12))]
    return np.unique(np.concatenate(([0.0, width], inner)))


def sigma2_HK(k: KernelSpec, H: float, nodes: int = 40, negative_lag: bool = False) -> float:
    """Asymptotic variance constant ``H(2H-1) iint |u-v|^(2H-2) K(u)K(v) du dv``.

    Reduced to ``2H(2H-1) int_0^(B-A) w^(2H-2) rho(w) dw``. The piece next to
    the singularity at ``w = 0`` uses Gauss-Jacobi nodes for the weight
    ``w^(2H-2)``; the remaining pieces, where ``rho`` is polynomial and the
    weight smooth, use Gauss-Legendre. ``negative_lag`` evaluates ``rho`` at
    ``-w`` instead (same value by symmetry; kept for testing).
    """
    if not 0.5 < H < 1.0:
        raise PreconditionError(f"sigma2_HK needs 1/2 < H < 1, got {H}")
    beta = 2.0 * H - 2.0
    sgn = -1.0 if negative_lag else 1.0
    cuts = _lag_breakpoints(k)

    x, wts = _gauss_jacobi(nodes, round(beta, 15))
    w1 = cuts[1]
    lags = 0.5 * w1 * (1.0 + x)
    total = (0.5 * w1) ** (beta + 1.0) * np.dot(wts, kernel_autocorrelation(k, sgn * lags))

    xl, wl = _gauss_legendre(nodes)
    for a, b in zip(cuts[1:-1], cuts[2:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        lags = mid + half * xl
        total += half * np.dot(wl, lags**beta * kernel_autocorrelation(k, sgn * lags))
    return float(2.0 * H * (2.0 * H - 1.0) * total)
