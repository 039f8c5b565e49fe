"""Exact Gaussian sampling of fractional Brownian motion on a uniform grid.

Two exact methods are available: Cholesky factorisation of the fractional
Gaussian noise covariance (default) and circulant embedding (Davies-Harte),
which is meant for long grids. Random streams come from numpy's
``SeedSequence``: the pair ``(master_seed, stream_index)`` is hashed into the
PCG64 state, so each replication owns an independent, reproducible stream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .exceptions import NumericalError, PreconditionError

logger = logging.getLogger(__name__)

__all__ = [
    "GENERATOR_NAME",
    "CHOLESKY_MAX_N",
    "SeedSpec",
    "FbmPath",
    "fgn_covariance",
    "fgn_autocovariance",
    "sample_fbm",
    "sample_fgn",
]

GENERATOR_NAME = "numpy.PCG64 via SeedSequence(master_seed, spawn_key=(stream_index,))"
CHOLESKY_MAX_N = 4096
CIRCULANT_TOL = 1e-10


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.stream_index < 0:
            raise ValueError("stream_index must be non-negative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class FbmPath:
    H: float
    T: float
    n: int
    values: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def _check_hurst(H: float) -> None:
    # H = 1/2 is admitted for sanity checks against Brownian motion.
    if not 0.5 <= H < 1.0:
        raise PreconditionError(f"Hurst index must satisfy 1/2 <= H < 1, got {H}")


def fgn_autocovariance(H: float, lags, dt: float = 1.0):
    """Vectorised fractional Gaussian noise autocovariance."""
    k = np.abs(np.asarray(lags, dtype=float))
    h2 = 2.0 * H
    return dt**h2 * 0.5 * (np.abs(k + 1.0) ** h2 - 2.0 * k**h2 + np.abs(k - 1.0) ** h2)


def fgn_covariance(H: float, k: int, dt: float = 1.0) -> float:
    """Covariance of two fGn increments ``k`` steps apart on a grid of step ``dt``."""
    _check_hurst(H)
    if k < 0:
        raise ValueError("lag must be non-negative")
    if not dt > 0:
        raise ValueError("dt must be positive")
    return float(fgn_autocovariance(H, k, dt))


@lru_cache(maxsize=16)
def _cholesky_factor(H: float, n: int) -> np.ndarray:
    cov = scipy.linalg.toeplitz(fgn_autocovariance(H, np.arange(n)))
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"fGn covariance (H={H}, n={n}) is not positive definite") from exc
    L.setflags(write=False)
    return L


@lru_cache(maxsize=16)
def _circulant_sqrt_eigs(H: float, n: int) -> np.ndarray:
    gamma = fgn_autocovariance(H, np.arange(n + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eigs = np.fft.fft(row).real
    if eigs.min() < -CIRCULANT_TOL:
        raise NumericalError(
            f"circulant embedding has negative eigenvalue {eigs.min():.3e} (H={H}, n={n})"
        )
    # eigenvalues in [-tol, 0) are roundoff around zero
    root = np.sqrt(np.maximum(eigs, 0.0) / (2 * n))
    root.setflags(write=False)
    return root


def _fgn_unit(H: float, n: int, rng: np.random.Generator, method: str) -> np.ndarray:
    if method == "cholesky":
        if n > CHOLESKY_MAX_N:
            raise PreconditionError(
                f"n={n} exceeds the Cholesky limit {CHOLESKY_MAX_N}; use method='circulant'"
            )
        return _cholesky_factor(H, n) @ rng.standard_normal(n)
    if method == "circulant":
        root = _circulant_sqrt_eigs(H, n)
        m = 2 * n
        z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        return np.fft.fft(root * z).real[:n]
    raise ValueError(f"unknown fBm method {method!r}")


def sample_fgn(
    H: float, n: int, T: float, seed: SeedSpec, method: str = "cholesky"
) -> np.ndarray:
    """``n`` fractional Gaussian noise increments on ``[0, T]``."""
    _check_hurst(H)
    if n < 1:
        raise PreconditionError("n must be >= 1")
    if not T > 0:
        raise PreconditionError("T must be positive")
    dt = T / n
    return dt**H * _fgn_unit(float(H), int(n), seed.generator(), method)


def sample_fbm(
    H: float, n: int, T: float, seed: SeedSpec, method: str = "cholesky"
) -> FbmPath:
    """Exact sample of fBm at ``t_k = kT/n``, ``k = 0..n``; deterministic in ``seed``."""
    inc = sample_fgn(H, n, T, seed, method)
    values = np.concatenate(([0.0], np.cumsum(inc)))
    return FbmPath(float(H), float(T), int(n), values)
