"""End-to-end acceptance checks.

Each test covers one criterion at its stated tolerance and prints a single
``[PASS]``/``[FAIL]`` line, visible even without ``-s``. Run alone with::

    pytest tests/test_acceptance.py -v
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest

from conftest import floor_scenario, ou_scenario
from oracles import (
    central_difference,
    difference_is_reliable,
    discrete_lipschitz,
    fbm_covariance,
    lipschitz_bounds,
    random_expr,
    sigma2_richardson,
    singularity_distance,
    slope,
    step_sup_error,
)
from rfsde.cli import main
from rfsde.experiments import BandwidthRule, asymptotic_study, lemma4_study, risk_sweep
from rfsde.fbm import SeedSpec, sample_fbm
from rfsde.kernels import KernelSpec, sigma2_HK
from rfsde.reflect import decomposition_residual, solve_reflected, uniform_grid
from rfsde.specdsl import differentiate, evaluate, parse, to_source

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(criterion: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
        assert ok, detail

    return emit


def test_c1_fbm_covariance(report):
    start = time.perf_counter()
    reps, n = 10_000, 256
    rng = np.random.default_rng(0)
    worst, fails = 0.0, []
    for H in (0.6, 0.75, 0.9):
        B = np.array([sample_fbm(H, n, 1.0, SeedSpec(2024, r)).values for r in range(reps)])
        idx = rng.choice(np.arange(1, n + 1), size=(10, 2))
        for i, j in idx:
            s, t = i / n, j / n
            prod = B[:, i] * B[:, j]
            z = abs(prod.mean() - fbm_covariance(s, t, H)) / (prod.std(ddof=1) / math.sqrt(reps))
            worst = max(worst, z)
            if z > 3:
                fails.append((H, s, t, round(z, 2)))
    elapsed = time.perf_counter() - start
    ok = not fails and elapsed <= 120
    report("C1 fBm law", ok, f"30 pairs, max |z| = {worst:.2f} (limit 3), {elapsed:.1f}s; failures {fails}")


def test_c2_reflected_solver(report):
    ns = [2**8, 2**9, 2**10, 2**11]
    cases = {
        "moving floor": (floor_scenario(), lambda t: t - 1, lambda t: t - 1),
        "interior OU": (ou_scenario(), lambda t: np.exp(-t), lambda t: np.ones_like(t)),
    }
    lines, ok = [], True
    for name, (cfg, x_exact, y_exact) in cases.items():
        x_err, y_err = [], []
        for n in ns:
            times = uniform_grid(1.0, n)
            p = solve_reflected(cfg.drift, cfg.tube, np.zeros_like(times), cfg.x0, times)
            x_err.append(step_sup_error(times, p.X, x_exact))
            y_err.append(step_sup_error(times, p.Y, y_exact))
            resid = decomposition_residual(p, cfg.drift)
            y_bound, x_bound = lipschitz_bounds(p, cfg.drift, cfg.tube)
            lip_ok = (discrete_lipschitz(p.Y, p.dt) <= 1.05 * y_bound
                      and discrete_lipschitz(p.X, p.dt) <= 1.05 * x_bound)
            ok &= resid <= 1e-10 and lip_ok
        # noisy paths share the same algebraic identity
        B = np.array([sample_fbm(cfg.H, 2048, 1.0, SeedSpec(5, r)).values for r in range(16)])
        noisy_resid = decomposition_residual(
            solve_reflected(cfg.drift, cfg.tube, 0.5 * B, cfg.x0, uniform_grid(1.0, 2048)), cfg.drift)
        s = slope([1 / n for n in ns], x_err)
        ok &= abs(s - 1.0) <= 0.3 and noisy_resid <= 1e-10
        if min(y_err) > 0:
            sy = slope([1 / n for n in ns], y_err)
            ok &= abs(sy - 1.0) <= 0.3
            lines.append(f"{name} X slope {s:.3f}, Y slope {sy:.3f}, noisy residual {noisy_resid:.1e}")
        else:
            ok &= max(y_err) == 0.0
            lines.append(f"{name} X slope {s:.3f}, Y exact, noisy residual {noisy_resid:.1e}")
    report("C2 reflected-solver oracles", ok, "; ".join(lines) + "; Lipschitz bounds within 5%")


def test_c3_deviation_scaling(report):
    start = time.perf_counter()
    cfg = ou_scenario(n=1024, replications=200, epsilons=tuple(2.0 ** -np.arange(2, 7)), master_seed=3)
    rep = lemma4_study(cfg, n_jobs=4)
    elapsed = time.perf_counter() - start
    s = rep.x_fit.slope
    ok = abs(s - 2.0) <= 0.15 and elapsed <= 600
    report("C3 deviation scaling", ok, f"slope {s:.4f} (target 2 +/- 0.15), {elapsed:.1f}s")


def test_c4_rate(report):
    eps = tuple(2.0 ** -np.arange(3, 8))
    lines, ok = [], True
    for name, make in (("interior OU", ou_scenario), ("moving floor", floor_scenario)):
        start = time.perf_counter()
        for H in (0.6, 0.75):
            cfg = make(H=H, n=2048, replications=200, epsilons=eps, master_seed=7)
            rep = risk_sweep(cfg, n_jobs=4)
            target = 2 / (2 - H)
            good = abs(rep.fit.slope - target) <= 0.25
            ok &= good
            lines.append(f"{name} H={H}: {rep.fit.slope:.3f} vs {target:.4f}")
        elapsed = time.perf_counter() - start
        ok &= elapsed <= 1800
    report("C4 risk rate", ok, "; ".join(lines))


def _asymptotic_cfg():
    return ou_scenario(
        kernel=KernelSpec("one_sided_triangular"), n=2048, replications=200,
        epsilons=tuple(2.0 ** -np.arange(3, 9)), master_seed=17,
    )


def test_c5_variance_constant(report):
    cfg = _asymptotic_cfg()
    rep = asymptotic_study(cfg, 0.5, n_jobs=4)
    qualifying = [r for r, q in zip(rep.variance_rel_error, rep.h_over_dt) if q >= 128]
    var_ok = bool(qualifying) and max(abs(r) for r in qualifying) <= 0.02
    ks_ok = min(rep.ks_pvalue) > 0.01

    # box kernel: aligned window of 128 cells each side of a grid time
    box_cfg = cfg.replace(kernel=KernelSpec("box"), bandwidth=BandwidthRule("fixed", 128 * cfg.dt),
                          epsilons=(2.0**-3, 2.0**-5))
    box = asymptotic_study(box_cfg, 0.5, n_jobs=4)
    box_err = max(abs(v - 4 ** (cfg.H - 1)) for v in box.scaled_variance)
    box_ok = box_err <= 1e-4 and min(box.ks_pvalue) > 0.01
    ok = var_ok and ks_ok and box_ok
    detail = (
        f"one-sided triangular: max rel err {max(abs(r) for r in qualifying):.2e} over "
        f"{len(qualifying)} levels with h/dt >= 128; min KS p {min(rep.ks_pvalue):.3f}; "
        f"box: |var - 4^(H-1)| = {box_err:.1e}, min KS p {min(box.ks_pvalue):.3f}"
    )
    report("C5 variance constant", ok, detail)


def test_c6_bias_limit(report):
    rep = asymptotic_study(_asymptotic_cfg(), 0.5, n_jobs=4)
    mu = (1 - math.exp(-0.5)) / 3
    rel = abs(rep.mu_extrapolated - mu) / mu
    ok = rel <= 0.10
    report("C6 bias limit", ok, f"extrapolated {rep.mu_extrapolated:.5f} vs mu(0.5) = {mu:.5f} (rel {rel:.3f}, limit 0.10)")


def test_c7_sigma2_quadrature(report):
    k = KernelSpec("triangular")
    worst = 0.0
    for H in np.round(np.arange(0.55, 0.951, 0.05), 2):
        ref = sigma2_richardson(k, float(H))
        worst = max(worst, abs(sigma2_HK(k, float(H)) / ref - 1))
    report("C7 sigma^2 quadrature", worst <= 1e-4, f"max rel diff vs 2-D Richardson oracle {worst:.1e} (limit 1e-4)")


def test_c8_dsl(report):
    rng = np.random.default_rng(8)
    trees, round_trip_fail, checked, deriv_fail = 1000, 0, 0, []
    for _ in range(trees):
        e = random_expr(rng, int(rng.integers(1, 6)))
        if parse(to_source(e), "x") != e:
            round_trip_fail += 1
        d = differentiate(e)
        for v in rng.uniform(-10, 10, 100):
            v = float(v)
            if singularity_distance(e, v) < 1e-3:
                continue
            try:
                dv = evaluate(d, v)
                fd = central_difference(e, v)
            except ArithmeticError:
                continue
            if not (math.isfinite(dv) and math.isfinite(fd)):
                continue
            tol = 1e-5 * (1 + abs(dv))
            if not difference_is_reliable(e, v, tol):
                continue
            checked += 1
            if abs(dv - fd) > tol:
                deriv_fail.append((to_source(e), v))
    ok = round_trip_fail == 0 and not deriv_fail and checked > 50_000
    report("C8 DSL", ok, f"{trees} trees: {round_trip_fail} round-trip failures, "
           f"{len(deriv_fail)} derivative mismatches over {checked} points")


def test_c9_reproducibility(report, tmp_path):
    cfg = {
        "H": 0.75, "T": 1.0, "n": 512, "x0": 1.0,
        "drift": {"expr": "-x", "lipschitz": 1.0},
        "tube": {"lower": "-2", "upper": "2"},
        "kernel": "triangular", "epsilons": [0.125, 0.0625, 0.03125, 0.015625],
        "bandwidth": "power", "replications": 60, "seed": 42,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    payloads = {}
    for threads in (1, 4, 8):
        out = tmp_path / f"t{threads}"
        assert main(["risk-sweep", str(path), "--out-dir", str(out), "--threads", str(threads)]) == 0
        payloads[threads] = {
            f.name: f.read_bytes() for f in sorted(out.iterdir()) if f.name != "manifest.json"
        }
    names = sorted(payloads[1])
    ok = len(names) == 3 and all(payloads[t] == payloads[1] for t in (4, 8))
    report("C9 reproducibility", ok, f"{', '.join(names)} byte-identical across --threads 1, 4, 8: {ok}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
