"""Monte Carlo studies of the trend estimator.

Every replication draws its fBm path from the stream ``(master_seed,
rep_index)`` and reuses it for every noise level (common random numbers).
Replications are processed in fixed-size chunks whose composition does not
depend on the number of worker threads, and results are folded in
``rep_index`` order, so reports are bit-identical for any ``n_jobs``.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from ._validation import check_hurst
from .estimator import (
    EstimatorConfig,
    decompose_error,
    default_eval_times,
    gamma_dot,
    gamma_dot_variance,
    weight_matrix,
)
from .exceptions import ConfigError, PreconditionError
from .fbm import CHOLESKY_MAX_N, GENERATOR_NAME, SeedSpec, sample_fbm
from .kernels import KernelSpec, kernel_first_moment, sigma2_HK
from .reflect import TubeSpec, solve_reflected, uniform_grid
from .specdsl import FunctionSpec
from .trend import TrendSolution, solve_trend, ydot

logger = logging.getLogger(__name__)

__all__ = [
    "BandwidthRule",
    "ExperimentConfig",
    "ReplicationRecord",
    "RiskPoint",
    "RateFit",
    "RiskReport",
    "Lemma4Report",
    "AsymptoticReport",
    "noiseless_trend",
    "run_replication",
    "run_replications",
    "aggregate",
    "estimate_risk",
    "rate_regression",
    "risk_sweep",
    "lemma4_study",
    "asymptotic_study",
    "target_rate",
]

CHUNK_SIZE = 16


@dataclass(frozen=True)
class BandwidthRule:
    """Either ``h = eps ** (1 / (2 - H))`` ("power") or a fixed value."""

    kind: str = "power"
    value: float | None = None

    def __post_init__(self):
        if self.kind == "power":
            if self.value is not None:
                raise ConfigError("the power bandwidth rule takes no value")
        elif self.kind == "fixed":
            if self.value is None or not self.value > 0:
                raise ConfigError("a fixed bandwidth needs a positive value")
        else:
            raise ConfigError(f"bandwidth rule must be 'power' or 'fixed', got {self.kind!r}")

    def __call__(self, eps: float, H: float) -> float:
        if self.kind == "fixed":
            return float(self.value)
        if not eps > 0:
            raise PreconditionError("the power bandwidth rule needs eps > 0")
        return float(eps) ** (1.0 / (2.0 - H))


@dataclass(frozen=True)
class ExperimentConfig:
    H: float
    T: float
    n: int
    x0: float
    drift: FunctionSpec
    tube: TubeSpec
    kernel: KernelSpec
    epsilons: tuple[float, ...]
    bandwidth: BandwidthRule = BandwidthRule()
    replications: int = 100
    master_seed: int = 0
    eval_times: tuple[float, ...] | None = None
    increment_convention: str = "midpoint"

    def __post_init__(self):
        check_hurst(self.H)
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ConfigError("n must be an integer >= 2")
        if self.n > CHOLESKY_MAX_N:
            raise ConfigError(f"n must not exceed {CHOLESKY_MAX_N}")
        eps = tuple(float(e) for e in self.epsilons)
        if not eps:
            raise ConfigError("epsilons must be non-empty")
        if any(e < 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilons must be non-negative and strictly decreasing")
        object.__setattr__(self, "epsilons", eps)
        if self.replications < 2:
            raise ConfigError("replications must be >= 2")
        if self.eval_times is not None:
            t = tuple(float(v) for v in np.atleast_1d(self.eval_times))
            if not t or min(t) < 0 or max(t) > self.T:
                raise ConfigError(f"eval_times must be non-empty and lie in [0, {self.T}]")
            object.__setattr__(self, "eval_times", t)

    @property
    def times(self) -> np.ndarray:
        return uniform_grid(self.T, self.n)

    @property
    def dt(self) -> float:
        return self.T / self.n

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def bandwidth_for(self, eps: float) -> float:
        return self.bandwidth(eps, self.H)

    def eval_times_for(self, eps: float) -> np.ndarray:
        if self.eval_times is not None:
            return np.asarray(self.eval_times)
        return default_eval_times(self.T, self.bandwidth_for(eps), self.kernel)

    def estimator_config(self, eps: float) -> EstimatorConfig:
        return EstimatorConfig(
            self.kernel, self.bandwidth_for(eps), self.eval_times_for(eps), self.increment_convention
        )


def target_rate(H: float) -> float:
    """Log-log risk slope predicted for the power bandwidth rule."""
    return 2.0 / (2.0 - H)


@lru_cache(maxsize=32)
def _noiseless(drift, tube, x0, T, n) -> TrendSolution:
    return solve_trend(drift, tube, x0, uniform_grid(T, n))


def noiseless_trend(cfg: ExperimentConfig) -> TrendSolution:
    """Noiseless solution, computed once per (drift, tube, x0, grid)."""
    return _noiseless(cfg.drift, cfg.tube, cfg.x0, cfg.T, cfg.n)


def _fbm_batch(cfg: ExperimentConfig, rep_indices: Sequence[int]) -> np.ndarray:
    return np.stack(
        [sample_fbm(cfg.H, cfg.n, cfg.T, SeedSpec(cfg.master_seed, int(r))).values for r in rep_indices]
    )


# ---------------------------------------------------------------------------
# Replications


@dataclass(frozen=True)
class ReplicationRecord:
    """Outcome of one replication at one noise level."""

    eps: float
    rep_index: int
    bandwidth: float
    sup_sq_error: float
    pointwise_error: np.ndarray = field(repr=False)
    sup_sq_x_error: float = 0.0
    sup_sq_y_error: float = 0.0
    decomposition: dict[str, float] = field(default_factory=dict)

    def same_as(self, other: "ReplicationRecord") -> bool:
        return (
            self.eps == other.eps
            and self.rep_index == other.rep_index
            and self.sup_sq_error == other.sup_sq_error
            and np.array_equal(self.pointwise_error, other.pointwise_error)
            and self.sup_sq_x_error == other.sup_sq_x_error
            and self.sup_sq_y_error == other.sup_sq_y_error
            and self.decomposition == other.decomposition
        )


def _replicate_chunk(
    cfg: ExperimentConfig, epsilons: Sequence[float], rep_indices: Sequence[int], with_estimator: bool
) -> list[list[ReplicationRecord]]:
    trend = noiseless_trend(cfg)
    times = trend.times
    B = _fbm_batch(cfg, rep_indices)
    out = []
    for eps in epsilons:
        path = solve_reflected(cfg.drift, cfg.tube, eps * B, cfg.x0, times)
        sx = np.max((path.X - trend.x) ** 2, axis=-1)
        sy = np.max((path.Y - trend.y) ** 2, axis=-1)
        recs = []
        if with_estimator:
            ecfg = cfg.estimator_config(eps)
            mid = ecfg.eval_times[len(ecfg.eval_times) // 2]
            dec = decompose_error(
                path.X, trend.x, trend.y, path.Y, B, cfg.drift, eps, ecfg, times,
                t=np.concatenate((ecfg.eval_times, [mid])),
            )
            err = dec.error[:, :-1]
            for i, r in enumerate(rep_indices):
                parts = {
                    "t": float(mid),
                    **{c: float(getattr(dec, c)[i, -1]) for c in ("alpha", "beta", "gamma", "zeta", "eta")},
                    "error": float(dec.error[i, -1]),
                }
                recs.append(
                    ReplicationRecord(
                        eps, int(r), ecfg.bandwidth, float(np.max(err[i] ** 2)), err[i].copy(),
                        float(sx[i]), float(sy[i]), parts,
                    )
                )
        else:
            for i, r in enumerate(rep_indices):
                recs.append(
                    ReplicationRecord(eps, int(r), float("nan"), float("nan"), np.empty(0), float(sx[i]), float(sy[i]))
                )
        out.append(recs)
    return out


def _chunks(R: int) -> list[range]:
    return [range(s, min(s + CHUNK_SIZE, R)) for s in range(0, R, CHUNK_SIZE)]


def _map(fn: Callable, items: Sequence, n_jobs: int) -> list:
    if n_jobs is None or n_jobs <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def run_replications(
    cfg: ExperimentConfig,
    epsilons: Sequence[float] | None = None,
    n_jobs: int = 1,
    with_estimator: bool = True,
) -> dict[float, list[ReplicationRecord]]:
    """All ``cfg.replications`` replications at each noise level, ordered by index."""
    epsilons = cfg.epsilons if epsilons is None else tuple(epsilons)
    noiseless_trend(cfg)  # build the shared solution before fanning out
    parts = _map(
        lambda chunk: _replicate_chunk(cfg, epsilons, chunk, with_estimator),
        _chunks(cfg.replications),
        n_jobs,
    )
    return {eps: [rec for part in parts for rec in part[j]] for j, eps in enumerate(epsilons)}


def run_replication(cfg: ExperimentConfig, eps: float, rep_index: int) -> ReplicationRecord:
    """One replication; deterministic in ``(cfg, eps, rep_index)``."""
    if not 0 <= rep_index < cfg.replications:
        raise PreconditionError(f"rep_index must lie in [0, {cfg.replications})")
    return _replicate_chunk(cfg, (float(eps),), (rep_index,), True)[0][0]


# ---------------------------------------------------------------------------
# Aggregation and regression


def aggregate(values) -> tuple[float, float]:
    """Mean and its standard error ``std(ddof=1) / sqrt(R)``."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise PreconditionError("need at least two replications")
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def estimate_risk(cfg: ExperimentConfig, eps: float, n_jobs: int = 1) -> tuple[float, float]:
    """Monte Carlo mean of ``sup_t |tau_hat - tau|^2`` and its standard error."""
    recs = run_replications(cfg, (float(eps),), n_jobs)[float(eps)]
    return aggregate([r.sup_sq_error for r in recs])


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    points: int

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def rate_regression(points: Sequence[tuple[float, float]], level: float = 0.95) -> RateFit:
    """OLS slope of ``log risk`` on ``log eps`` with a t-based confidence interval."""
    pts = list(points)
    if len(pts) < 3:
        raise PreconditionError("rate regression needs at least three points")
    eps = np.array([p[0] for p in pts], dtype=float)
    risk = np.array([p[1] for p in pts], dtype=float)
    if np.any(eps <= 0) or np.any(risk <= 0):
        raise PreconditionError("rate regression needs positive noise levels and risks (log domain)")
    x, y = np.log(eps), np.log(risk)
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = len(pts) - 2
    s2 = float(np.dot(resid, resid) / dof)
    stderr = float(np.sqrt(s2 / np.dot(xc, xc)))
    q = float(stats.t.ppf(0.5 + level / 2.0, dof))
    return RateFit(slope, intercept, stderr, slope - q * stderr, slope + q * stderr, len(pts))


def _metadata(cfg: ExperimentConfig) -> dict[str, Any]:
    return {
        "generator": GENERATOR_NAME,
        "master_seed": cfg.master_seed,
        "stream_indices": [0, cfg.replications],
        "grid": {"T": cfg.T, "n": cfg.n, "dt": cfg.dt},
        "H": cfg.H,
        "x0": cfg.x0,
        "drift": cfg.drift.source,
        "tube": {"lower": cfg.tube.lower.source, "upper": cfg.tube.upper.source},
        "kernel": {"family": cfg.kernel.family, "A": cfg.kernel.A, "B": cfg.kernel.B},
        "bandwidth_rule": {"kind": cfg.bandwidth.kind, "value": cfg.bandwidth.value},
        "increment_convention": cfg.increment_convention,
        "replications": cfg.replications,
    }


@dataclass(frozen=True)
class RiskPoint:
    eps: float
    bandwidth: float
    risk: float  # mean over replications of sup_t squared error
    risk_se: float
    sup_pointwise_risk: float  # sup over t of the mean squared error
    pointwise_risk: np.ndarray = field(repr=False)
    eval_times: np.ndarray = field(repr=False)
    bandwidth_ratio: float = float("nan")  # eps / h^(1 - H)
    h_over_dt: float = float("nan")
    mean_decomposition: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["pointwise_risk"] = self.pointwise_risk.tolist()
        d["eval_times"] = self.eval_times.tolist()
        return d


@dataclass(frozen=True)
class RiskReport:
    points: list[RiskPoint]
    fit: RateFit | None
    target_slope: float
    metadata: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "risk_sweep",
            "points": [p.to_dict() for p in self.points],
            "fit": None if self.fit is None else self.fit.to_dict(),
            "target_slope": self.target_slope,
            "metadata": self.metadata,
        }

    def csv_rows(self) -> tuple[list[str], list[list[float]]]:
        header = ["eps", "bandwidth", "risk", "risk_se", "sup_pointwise_risk", "bandwidth_ratio", "h_over_dt"]
        rows = [[getattr(p, c) for c in header] for p in self.points]
        return header, rows


def risk_sweep(cfg: ExperimentConfig, n_jobs: int = 1) -> RiskReport:
    """Risk curve over ``cfg.epsilons`` and its log-log slope."""
    records = run_replications(cfg, n_jobs=n_jobs)
    points = []
    for eps in cfg.epsilons:
        recs = records[eps]
        risk, se = aggregate([r.sup_sq_error for r in recs])
        pw = np.mean([r.pointwise_error**2 for r in recs], axis=0)
        h = recs[0].bandwidth
        mean_dec = {
            c: float(np.mean([r.decomposition[c] for r in recs]))
            for c in ("alpha", "beta", "gamma", "zeta", "eta", "error")
        }
        mean_dec["t"] = recs[0].decomposition["t"]
        points.append(
            RiskPoint(
                eps, h, risk, se, float(pw.max()), pw, cfg.eval_times_for(eps),
                float(eps / h ** (1.0 - cfg.H)), float(h / cfg.dt), mean_dec,
            )
        )
    usable = [(p.eps, p.risk) for p in points if p.eps > 0 and p.risk > 0]
    fit = rate_regression(usable) if len(usable) >= 3 else None
    return RiskReport(points, fit, target_rate(cfg.H), _metadata(cfg))


@dataclass(frozen=True)
class Lemma4Report:
    epsilons: list[float]
    x_risk: list[float]
    x_risk_se: list[float]
    y_risk: list[float]
    y_risk_se: list[float]
    x_fit: RateFit
    y_fit: RateFit
    target_slope: float
    metadata: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["kind"] = "lemma4"
        return d

    def csv_rows(self):
        header = ["eps", "x_risk", "x_risk_se", "y_risk", "y_risk_se"]
        rows = [list(r) for r in zip(self.epsilons, self.x_risk, self.x_risk_se, self.y_risk, self.y_risk_se)]
        return header, rows


def lemma4_study(cfg: ExperimentConfig, n_jobs: int = 1) -> Lemma4Report:
    """Slopes of ``log E sup|X - x|^2`` and ``log E sup|Y - y|^2`` against ``log eps``."""
    if len(cfg.epsilons) < 3:
        raise PreconditionError("deviation study needs at least three noise levels")
    if any(e <= 0 for e in cfg.epsilons):
        raise PreconditionError("deviation study needs eps > 0 (the log of a zero risk is undefined)")
    records = run_replications(cfg, n_jobs=n_jobs, with_estimator=False)
    xs, xse, ys, yse = [], [], [], []
    for eps in cfg.epsilons:
        m, s = aggregate([r.sup_sq_x_error for r in records[eps]])
        xs.append(m)
        xse.append(s)
        m, s = aggregate([r.sup_sq_y_error for r in records[eps]])
        ys.append(m)
        yse.append(s)
    eps = list(cfg.epsilons)
    x_fit = rate_regression(list(zip(eps, xs)))
    y_fit = rate_regression(list(zip(eps, ys))) if min(ys) > 0 else RateFit(*(float("nan"),) * 5, len(eps))
    return Lemma4Report(eps, xs, xse, ys, yse, x_fit, y_fit, 2.0, _metadata(cfg))


# ---------------------------------------------------------------------------
# Asymptotic study


@dataclass(frozen=True)
class AsymptoticReport:
    t: float
    sigma2: float
    epsilons: list[float]
    bandwidths: list[float]
    h_over_dt: list[float]
    scaled_variance: list[float]  # h^(2-2H) Var(gamma_dot) / eps^2
    variance_rel_error: list[float]
    ks_statistic: list[float]
    ks_pvalue: list[float]
    mu: float | None
    scaled_bias_mean: list[float] | None
    scaled_bias_se: list[float] | None
    scaled_bias_deterministic: list[float] | None
    mu_extrapolated: float | None
    metadata: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["kind"] = "asymptotics"
        return d

    def csv_rows(self):
        header = [
            "eps", "bandwidth", "h_over_dt", "scaled_variance", "variance_rel_error",
            "ks_statistic", "ks_pvalue", "scaled_bias_mean", "scaled_bias_se",
        ]
        nan = [float("nan")] * len(self.epsilons)
        cols = [
            self.epsilons, self.bandwidths, self.h_over_dt, self.scaled_variance,
            self.variance_rel_error, self.ks_statistic, self.ks_pvalue,
            self.scaled_bias_mean or nan, self.scaled_bias_se or nan,
        ]
        return header, [list(r) for r in zip(*cols)]


def limiting_bias(cfg: ExperimentConfig, t: float) -> float:
    """``(b(x(t)) - b(x(0)) + y'(t) - y'(0)) * int K(u) u du`` from the noiseless solution."""
    trend = noiseless_trend(cfg)
    k = int(round(t / cfg.dt))
    if abs(k * cfg.dt - t) > 1e-9 * max(1.0, cfg.T):
        raise PreconditionError(f"t={t} is not a grid time")
    drift_change = float(cfg.drift(trend.x[k]) - cfg.drift(trend.x[0]))
    ydot_change = ydot(cfg.drift, cfg.tube, trend, k) - ydot(cfg.drift, cfg.tube, trend, 0)
    return (drift_change + ydot_change) * kernel_first_moment(cfg.kernel)


def asymptotic_study(cfg: ExperimentConfig, t: float, n_jobs: int = 1) -> AsymptoticReport:
    """Variance constant, Gaussianity and bias limit of the rescaled estimator at ``t``.

    The bias part needs a kernel supported in ``[0, inf)``; for other
    kernels it is left empty.
    """
    t = float(t)
    times = cfg.times
    sigma2 = sigma2_HK(cfg.kernel, cfg.H)
    with_bias = cfg.kernel.A >= 0
    mu = limiting_bias(cfg, t) if with_bias else None
    eps_list = [e for e in cfg.epsilons if e > 0]
    if not eps_list:
        raise PreconditionError("asymptotic study needs eps > 0")
    fixed = cfg.replace(eval_times=(t,), epsilons=tuple(eps_list))
    records = run_replications(fixed, n_jobs=n_jobs) if with_bias else None

    trend = noiseless_trend(cfg)
    B_all = None
    hs, hdt, sv, rel, ks_s, ks_p = [], [], [], [], [], []
    bias_mean, bias_se, bias_det = [], [], []
    for eps in eps_list:
        h = cfg.bandwidth_for(eps)
        var = gamma_dot_variance(cfg.H, cfg.kernel, h, t, eps, times, cfg.increment_convention)
        scaled = h ** (2.0 - 2.0 * cfg.H) * var / eps**2
        hs.append(h)
        hdt.append(h / cfg.dt)
        sv.append(scaled)
        rel.append(scaled / sigma2 - 1.0)
        if B_all is None:
            B_all = np.concatenate(
                [_fbm_batch(cfg, chunk) for chunk in _chunks(cfg.replications)]
            )
        samples = gamma_dot(B_all, cfg.kernel, h, t, eps, times, cfg.increment_convention)
        res = stats.kstest(samples / np.sqrt(var), "norm")
        ks_s.append(float(res.statistic))
        ks_p.append(float(res.pvalue))
        if with_bias:
            scale = eps ** (-1.0 / (2.0 - cfg.H))
            vals = [scale * (r.decomposition["error"] - r.decomposition["gamma"]) for r in records[eps]]
            m, s = aggregate(vals)
            bias_mean.append(m)
            bias_se.append(s)
            # beta + eta alone: the estimator applied to the noiseless path
            M = weight_matrix(times, [t], cfg.kernel, h, cfg.increment_convention)[0]
            det = np.dot(M, np.diff(trend.x)) - (np.interp(t, times, trend.x) - cfg.x0)
            bias_det.append(float(scale * det))

    mu_hat = None
    if with_bias and len(eps_list) >= 2:
        # linear extrapolation of the rescaled bias to h = 0
        slope, intercept = np.polyfit(np.asarray(hs), np.asarray(bias_mean), 1)
        mu_hat = float(intercept)

    meta = _metadata(cfg)
    meta["sigma2_method"] = "autocorrelation + Gauss-Jacobi"
    return AsymptoticReport(
        t, sigma2, eps_list, hs, hdt, sv, rel, ks_s, ks_p, mu,
        bias_mean if with_bias else None,
        bias_se if with_bias else None,
        bias_det if with_bias else None,
        mu_hat, meta,
    )
