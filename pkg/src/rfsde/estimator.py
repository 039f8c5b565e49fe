"""Kernel estimator of the trend and its error decomposition.

The estimator integrates the kernel-smoothed increments of the observed
path up to ``t``. By Fubini it is a weighted sum of increments::

    tau_hat(t) = sum_j W(s_j, t) (X[j+1] - X[j]),
    W(s, t) = Phi_K(s / h) - Phi_K((s - t) / h),

where ``Phi_K`` is the kernel CDF and ``s_j`` the left end or midpoint of
the ``j``-th cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_eval_times, check_hurst, check_paths, check_positive
from .exceptions import PreconditionError, SupportError
from .fbm import fgn_autocovariance
from .kernels import KernelSpec, eval_kernel, kernel_cdf
from .specdsl import FunctionSpec

__all__ = [
    "EstimatorConfig",
    "ErrorDecomposition",
    "TrendEstimator",
    "power_bandwidth",
    "weight",
    "weight_matrix",
    "increment_times",
    "estimate_trend",
    "decompose_error",
    "gamma_dot",
    "gamma_dot_variance",
]

CONVENTIONS = ("left", "midpoint")


def power_bandwidth(eps: float, H: float) -> float:
    """Rate-optimal bandwidth ``eps ** (1 / (2 - H))``."""
    return float(eps) ** (1.0 / (2.0 - H))


def weight(s, t, k: KernelSpec, h: float):
    """``int_0^t K_h(s - u) du``; zero unless ``hA <= s <= t + hB``."""
    s = np.asarray(s, dtype=float)
    w = kernel_cdf(k, s / h) - kernel_cdf(k, (s - t) / h)
    return float(w) if np.ndim(w) == 0 else w


def increment_times(times, convention: str = "midpoint") -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if convention == "midpoint":
        return 0.5 * (times[:-1] + times[1:])
    if convention == "left":
        return times[:-1]
    raise ValueError(f"increment convention must be one of {CONVENTIONS}, got {convention!r}")


def weight_matrix(times, eval_times, k: KernelSpec, h: float, convention: str = "midpoint"):
    """Matrix ``M[i, j] = W(s_j, t_i)`` mapping increments to estimates."""
    s = increment_times(times, convention)
    t = np.asarray(eval_times, dtype=float)
    return kernel_cdf(k, s[None, :] / h) - kernel_cdf(k, (s[None, :] - t[:, None]) / h)


@dataclass(frozen=True)
class EstimatorConfig:
    kernel: KernelSpec
    bandwidth: float
    eval_times: np.ndarray
    increment_convention: str = "midpoint"

    def __post_init__(self):
        check_positive(self.bandwidth, "bandwidth")
        if self.increment_convention not in CONVENTIONS:
            raise ValueError(f"increment_convention must be one of {CONVENTIONS}")
        object.__setattr__(self, "eval_times", np.atleast_1d(np.asarray(self.eval_times, float)))

    @classmethod
    def power_rule(
        cls, kernel: KernelSpec, eps: float, H: float, eval_times, increment_convention="midpoint"
    ) -> "EstimatorConfig":
        return cls(kernel, power_bandwidth(eps, H), eval_times, increment_convention)

    def bandwidth_ratio(self, eps: float, H: float) -> float:
        """Diagnostic ``eps / h^(1 - H)``; should be small for consistency."""
        return float(eps) / self.bandwidth ** (1.0 - H)


def _apply(a: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``a @ M`` one row at a time.

    A batched matrix product may take a different BLAS path than a single
    row, changing the last bits; row by row, each path's result does not
    depend on which other paths share the batch.
    """
    if a.ndim == 1:
        return a @ M
    flat = a.reshape(-1, a.shape[-1])
    out = np.empty((flat.shape[0], M.shape[1]))
    for i, row in enumerate(flat):
        out[i] = row @ M
    return out.reshape(a.shape[:-1] + (M.shape[1],))


def estimate_trend(X, cfg: EstimatorConfig, times) -> np.ndarray:
    """Trend estimates at ``cfg.eval_times`` from path(s) ``X`` sampled on ``times``.

    ``X`` may have leading batch dimensions; the result has shape
    ``X.shape[:-1] + (len(eval_times),)``.
    """
    times = np.asarray(times, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != times.size:
        raise PreconditionError("path and grid lengths differ")
    t = check_eval_times(cfg.eval_times, times[-1])
    M = weight_matrix(times, t, cfg.kernel, cfg.bandwidth, cfg.increment_convention)
    return _apply(np.diff(X, axis=-1), M.T)


@dataclass(frozen=True)
class ErrorDecomposition:
    """Five-term split of ``tau_hat - tau``; each field is indexed like ``t``."""

    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    zeta: np.ndarray
    eta: np.ndarray
    error: np.ndarray = field(repr=False)  # tau_hat - tau, computed directly

    @property
    def total(self) -> np.ndarray:
        return self.alpha + self.beta + self.gamma + self.zeta + self.eta

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(self.total - self.error)))

    @property
    def bias(self) -> np.ndarray:
        """``beta + eta``, the deterministic part."""
        return self.beta + self.eta


def decompose_error(
    X_eps,
    x,
    y,
    Y_eps,
    B,
    b: FunctionSpec,
    eps: float,
    cfg: EstimatorConfig,
    times,
    t=None,
) -> ErrorDecomposition:
    """Split ``tau_hat(t) - tau(t)`` into drift, bias, noise and reflection terms.

    ``X_eps``, ``Y_eps`` (noisy) and ``B`` may carry leading batch
    dimensions; ``x``, ``y`` are the noiseless solution on the same grid.
    The split is exact given the scheme identity
    ``dX = b(X) dt + eps dB + dY``, which is verified first. Off-grid times
    use linear interpolation of the discrete trend.
    """
    times = np.asarray(times, dtype=float)
    arrays = [np.asarray(a, dtype=float) for a in (X_eps, x, y, Y_eps, B)]
    if any(a.shape[-1] != times.size for a in arrays):
        raise PreconditionError("all paths must share the grid")
    X_eps, x, y, Y_eps, B = arrays
    dt = times[1] - times[0]
    t = check_eval_times(cfg.eval_times if t is None else t, times[-1])
    x0 = float(y[0])

    bX = b.compiled(X_eps[..., :-1])
    bx = b.compiled(x[:-1])
    dX, dx = np.diff(X_eps, axis=-1), np.diff(x)
    dY, dy, dB = np.diff(Y_eps, axis=-1), np.diff(y), np.diff(B, axis=-1)
    scale = 1.0 + np.max(np.abs(X_eps)) + np.max(np.abs(Y_eps))
    if np.max(np.abs(dX - bX * dt - eps * dB - dY)) > 1e-9 * scale:
        raise PreconditionError("noisy paths do not satisfy dX = b(X) dt + eps dB + dY")
    if np.max(np.abs(dx - bx * dt - dy)) > 1e-9 * (1.0 + np.max(np.abs(x))):
        raise PreconditionError("noiseless paths do not satisfy dx = b(x) dt + dy")

    M = weight_matrix(times, t, cfg.kernel, cfg.bandwidth, cfg.increment_convention).T
    drift_cum = np.concatenate(([0.0], np.cumsum(bx * dt)))
    tau_t = np.interp(t, times, x - x0)

    alpha = _apply((bX - bx) * dt, M)
    beta = (bx * dt) @ M - np.interp(t, times, drift_cum)
    gamma = eps * _apply(dB, M)
    zeta = _apply(dY - dy, M)
    eta = dy @ M - (np.interp(t, times, y) - x0)
    error = _apply(dX, M) - tau_t
    shape = np.broadcast_shapes(alpha.shape, gamma.shape)
    alpha, beta, gamma, zeta, eta = (np.broadcast_to(c, shape) for c in (alpha, beta, gamma, zeta, eta))
    return ErrorDecomposition(t, alpha, beta, gamma, zeta, eta, error)


def _check_window(t: float, k: KernelSpec, h: float, T: float) -> None:
    lo, hi = t + h * k.A, t + h * k.B
    tol = 1e-12 * max(1.0, T)
    if lo < -tol or hi > T + tol:
        raise SupportError(
            f"kernel window [{lo:.6g}, {hi:.6g}] around t={t:.6g} leaves [0, {T:.6g}]"
        )


def _scaled_kernel_weights(times, k, h, t, convention):
    s = increment_times(times, convention)
    return eval_kernel(k, (s - t) / h) / h


def gamma_dot(B, k: KernelSpec, h: float, t: float, eps: float, times, convention="midpoint"):
    """``eps * sum_j K_h(s_j - t) (B[j+1] - B[j])``, the smoothed noise at ``t``."""
    times = np.asarray(times, dtype=float)
    _check_window(float(t), k, h, times[-1])
    v = _scaled_kernel_weights(times, k, h, t, convention)
    out = eps * _apply(np.diff(np.asarray(B, dtype=float), axis=-1), v[:, None])[..., 0]
    return float(out) if np.ndim(out) == 0 else out


def gamma_dot_variance(
    H: float, k: KernelSpec, h: float, t: float, eps: float, times, convention="midpoint"
) -> float:
    """Exact variance of :func:`gamma_dot` under fBm of index ``H``.

    ``eps^2 sum_{i,j} K_h(s_i - t) K_h(s_j - t) cov(dB_i, dB_j)``.
    """
    check_hurst(H)
    times = np.asarray(times, dtype=float)
    _check_window(float(t), k, h, times[-1])
    v = _scaled_kernel_weights(times, k, h, t, convention)
    nz = np.flatnonzero(v)
    if nz.size == 0:
        return 0.0
    v = v[nz[0] : nz[-1] + 1]
    dt = times[1] - times[0]
    cov = scipy.linalg.toeplitz(fgn_autocovariance(H, np.arange(v.size), dt))
    return float(eps**2 * v @ cov @ v)


class TrendEstimator(TransformerMixin, BaseEstimator):
    """Kernel trend estimator with the scikit-learn transformer interface.

    Rows of ``X`` are paths observed on the uniform grid ``linspace(0, T,
    n_points)``. :meth:`transform` returns the trend estimates at
    ``eval_times`` (default: 64 interior times clear of the kernel margin).

    Parameters
    ----------
    kernel : str
        Kernel family name.
    bandwidth : float
        Smoothing bandwidth ``h``.
    T : float
        Observation horizon.
    eval_times : array-like or None
    increment_convention : {"midpoint", "left"}
    kernel_scale : float
        Stretch applied to the kernel's natural support.
    """

    def __init__(
        self,
        kernel="triangular",
        bandwidth=0.1,
        T=1.0,
        eval_times=None,
        increment_convention="midpoint",
        kernel_scale=1.0,
    ):
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.T = T
        self.eval_times = eval_times
        self.increment_convention = increment_convention
        self.kernel_scale = kernel_scale

    @classmethod
    def from_noise_level(cls, eps: float, H: float, **kwargs) -> "TrendEstimator":
        """Estimator using the bandwidth ``eps ** (1 / (2 - H))``."""
        return cls(bandwidth=power_bandwidth(eps, check_hurst(H)), **kwargs)

    def fit(self, X, y=None):
        X = check_paths(X)
        T = check_positive(self.T, "T")
        h = check_positive(self.bandwidth, "bandwidth")
        self.kernel_ = KernelSpec.named(self.kernel, self.kernel_scale)
        self.n_points_ = X.shape[1]
        self.times_ = np.linspace(0.0, T, self.n_points_)
        if self.eval_times is None:
            self.eval_times_ = default_eval_times(T, h, self.kernel_)
        else:
            self.eval_times_ = check_eval_times(self.eval_times, T)
        self.config_ = EstimatorConfig(self.kernel_, h, self.eval_times_, self.increment_convention)
        self.weights_ = weight_matrix(
            self.times_, self.eval_times_, self.kernel_, h, self.increment_convention
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        X = check_paths(X)
        if X.shape[1] != self.n_points_:
            raise ValueError(f"expected {self.n_points_} grid points, got {X.shape[1]}")
        return _apply(np.diff(X, axis=1), self.weights_.T)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "eval_times_")
        return np.array([f"tau_hat[{t:.6g}]" for t in self.eval_times_], dtype=object)


def default_eval_times(T: float, h: float, k: KernelSpec, count: int = 64) -> np.ndarray:
    """``count`` evenly spaced times clear of a margin ``h * max(|A|, |B|)`` at both ends."""
    margin = h * k.reach
    if 2 * margin >= T:
        raise PreconditionError(
            f"bandwidth {h:.4g} leaves no interior evaluation window in [0, {T}]"
        )
    return np.linspace(margin, T - margin, count + 2)[1:-1]
