import numpy as np
import pytest

from conftest import floor_scenario, ou_scenario
from rfsde.exceptions import ConfigError, PreconditionError
from rfsde.experiments import (
    BandwidthRule,
    aggregate,
    asymptotic_study,
    estimate_risk,
    lemma4_study,
    limiting_bias,
    noiseless_trend,
    rate_regression,
    risk_sweep,
    run_replication,
    run_replications,
    target_rate,
)
from rfsde.kernels import KernelSpec
from rfsde.reflect import TubeSpec
from rfsde.specdsl import FunctionSpec


def test_target_rates():
    assert target_rate(0.75) == pytest.approx(1.6)
    assert target_rate(0.9) == pytest.approx(2 / 1.1)
    assert target_rate(0.6) == pytest.approx(10 / 7)


def test_bandwidth_rule():
    assert BandwidthRule()(2.0**-5, 0.75) == pytest.approx(2.0**-4)
    assert BandwidthRule("fixed", 0.1)(0.0, 0.75) == 0.1
    with pytest.raises(PreconditionError):
        BandwidthRule()(0.0, 0.75)
    with pytest.raises(ConfigError):
        BandwidthRule("fixed", -1.0)
    with pytest.raises(ConfigError):
        BandwidthRule("adaptive")


@pytest.mark.parametrize(
    "change",
    [dict(epsilons=(0.1, 0.2)), dict(epsilons=(0.1, 0.1)), dict(epsilons=()), dict(replications=1),
     dict(n=1), dict(T=0.0), dict(eval_times=(2.0,))],
)
def test_config_validation(change):
    with pytest.raises((ConfigError, PreconditionError)):
        ou_scenario(**change)


def test_noiseless_trend_is_shared():
    cfg = ou_scenario()
    assert noiseless_trend(cfg) is noiseless_trend(cfg)


def test_replication_determinism_and_independence():
    cfg = ou_scenario(n=128)
    a = run_replication(cfg, 0.1, 3)
    b = run_replication(cfg, 0.1, 3)
    c = run_replication(cfg, 0.1, 4)
    assert a.same_as(b)
    assert not np.array_equal(a.pointwise_error, c.pointwise_error)
    with pytest.raises(PreconditionError):
        run_replication(cfg, 0.1, cfg.replications)


def test_single_replication_matches_batch():
    cfg = ou_scenario(n=128)
    batch = run_replications(cfg)
    for r in (0, 7, 19):
        assert run_replication(cfg, cfg.epsilons[1], r).same_as(batch[cfg.epsilons[1]][r])


def test_zero_noise_has_zero_variance():
    cfg = ou_scenario(n=128, epsilons=(0.1, 0.0), bandwidth=BandwidthRule("fixed", 0.1))
    recs = run_replications(cfg)[0.0]
    assert all(r.same_as(recs[0]) or r.sup_sq_error == recs[0].sup_sq_error for r in recs)
    risk, se = estimate_risk(cfg, 0.0)
    assert se == 0.0
    assert risk == pytest.approx(recs[0].sup_sq_error)
    assert recs[0].sup_sq_x_error == 0.0


def test_common_random_numbers():
    cfg = ou_scenario(n=128)
    recs = run_replications(cfg)
    # the noise component scales linearly in eps for the same path
    g1 = recs[cfg.epsilons[0]][5].decomposition["gamma"]
    g2 = recs[cfg.epsilons[1]][5].decomposition["gamma"]
    h1, h2 = (cfg.bandwidth_for(e) for e in cfg.epsilons[:2])
    assert np.sign(g1) == np.sign(g2) or min(abs(g1), abs(g2)) < 1e-12
    assert h1 > h2


def test_aggregate():
    assert aggregate([1.0, 3.0]) == (2.0, 1.0)
    with pytest.raises(PreconditionError):
        aggregate([1.0])


def test_rate_regression_synthetic():
    eps = 2.0 ** -np.arange(3, 8)
    fit = rate_regression(list(zip(eps, 3 * eps**1.6)))
    assert fit.slope == pytest.approx(1.6, abs=1e-12)
    assert fit.ci_high - fit.ci_low < 1e-9
    assert np.exp(fit.intercept) == pytest.approx(3.0)
    fit2 = rate_regression(list(zip(eps, 3 * eps**2)))
    assert fit2.slope == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(PreconditionError):
        rate_regression([(1, 1), (2, 2)])
    with pytest.raises(PreconditionError):
        rate_regression([(1, 1), (2, 0), (3, 1)])


def test_rate_regression_ci_covers_noisy_slope():
    rng = np.random.default_rng(0)
    eps = 2.0 ** -np.arange(2, 9)
    fit = rate_regression(list(zip(eps, eps**1.5 * np.exp(0.05 * rng.standard_normal(eps.size)))))
    assert fit.ci_low < 1.5 < fit.ci_high


def test_risk_sweep_report():
    cfg = ou_scenario(n=256)
    rep = risk_sweep(cfg)
    assert len(rep.points) == 3
    assert rep.target_slope == pytest.approx(1.6)
    for p in rep.points:
        assert p.risk > 0 and p.risk_se > 0
        assert p.sup_pointwise_risk <= p.risk + 1e-15
        assert p.eval_times.size == 64
        assert p.h_over_dt == pytest.approx(p.bandwidth * cfg.n)
    header, rows = rep.csv_rows()
    assert header[0] == "eps" and len(rows) == 3
    d = rep.to_dict()
    assert d["metadata"]["master_seed"] == cfg.master_seed
    assert "timings" not in d["metadata"]


def test_threads_give_identical_records():
    cfg = ou_scenario(n=128, replications=40)
    one = run_replications(cfg, n_jobs=1)
    four = run_replications(cfg, n_jobs=4)
    for eps in cfg.epsilons:
        assert all(a.same_as(b) for a, b in zip(one[eps], four[eps]))


def test_deviation_study_ou():
    cfg = ou_scenario(n=256, replications=30, epsilons=(2.0**-2, 2.0**-4, 2.0**-6))
    rep = lemma4_study(cfg)
    assert rep.x_fit.slope == pytest.approx(2.0, abs=0.15)
    assert rep.target_slope == 2.0
    assert np.isnan(rep.y_fit.slope)  # never touches the walls, Y - y is identically zero


def test_deviation_study_preconditions():
    with pytest.raises(PreconditionError):
        lemma4_study(ou_scenario(epsilons=(0.1, 0.05)))
    with pytest.raises(PreconditionError):
        lemma4_study(ou_scenario(epsilons=(0.1, 0.05, 0.0), bandwidth=BandwidthRule("fixed", 0.1)))


def test_limiting_bias():
    cfg = ou_scenario(kernel=KernelSpec("one_sided_triangular"), n=512)
    assert limiting_bias(cfg, 0.5) == pytest.approx((1 - np.exp(-0.5)) / 3, rel=1e-2)
    assert limiting_bias(ou_scenario(n=512), 0.5) == 0.0
    with pytest.raises(PreconditionError):
        limiting_bias(cfg, 0.5001)


def test_asymptotic_study_small():
    cfg = ou_scenario(kernel=KernelSpec("one_sided_triangular"), n=512, replications=64,
                      epsilons=(2.0**-3, 2.0**-4, 2.0**-5))
    rep = asymptotic_study(cfg, 0.5)
    assert rep.mu is not None and rep.mu_extrapolated is not None
    assert all(abs(r) < 0.02 for r in rep.variance_rel_error)
    assert all(p > 0.001 for p in rep.ks_pvalue)
    assert len(rep.csv_rows()[1]) == 3


def test_asymptotic_study_symmetric_kernel_skips_bias():
    rep = asymptotic_study(ou_scenario(n=512, replications=16), 0.5)
    assert rep.mu is None and rep.scaled_bias_mean is None
    assert rep.sigma2 > 0


def test_floor_scenario_regimes():
    cfg = floor_scenario()
    trend = noiseless_trend(cfg)
    assert np.allclose(trend.tau, cfg.times, atol=cfg.dt)
    b = FunctionSpec("0", "x", 1.0)
    assert b == cfg.drift
    assert isinstance(cfg.tube, TubeSpec)
