"""Command-line interface.

Exit codes: 0 success, 2 configuration or parse error, 3 numerical
failure, 4 violated precondition.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import build_experiment, build_kernel, config_hash, load_config
from .estimator import decompose_error, estimate_trend
from .exceptions import ConfigError, NumericalError, PreconditionError
from .experiments import (
    ExperimentConfig,
    asymptotic_study,
    lemma4_study,
    noiseless_trend,
    risk_sweep,
)
from .fbm import GENERATOR_NAME, SeedSpec, sample_fbm
from .io import RunManifest, format_number, risk_curve_svg, write_csv, write_json
from .kernels import sigma2_HK
from .reflect import solve_reflected
from .specdsl import DSLSyntaxError, EvalError

logger = logging.getLogger("rfsde")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PRECONDITION = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfsde",
        description="Simulate reflected fractional SDEs and study the kernel trend estimator.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, config_required=True):
        p = sub.add_parser(name, help=help_text)
        if config_required:
            p.add_argument("config", type=Path, help="JSON configuration file")
        else:
            p.add_argument("config", type=Path, nargs="?", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads for replications")
        return p

    p = add("simulate", "dump one noisy path (t, X, Y, W, l, u)")
    p.add_argument("--epsilon", type=float, help="noise level (default: first in config)")
    p.add_argument("--rep", type=int, default=0, help="replication index selecting the noise stream")
    add("trend", "dump the noiseless solution (t, x, y, tau, regime)")
    p = add("estimate", "trend estimate and error decomposition for one path")
    p.add_argument("--epsilon", type=float, help="noise level (default: first in config)")
    p.add_argument("--rep", type=int, default=0)
    p = add("risk-sweep", "risk curve over the noise levels and its log-log slope")
    p.add_argument("--svg", action="store_true", help="also write an SVG chart of the risk curve")
    p = add("lemma4", "sup-norm distance between noisy and noiseless paths against eps")
    p.add_argument("--svg", action="store_true")
    p = add("asymptotics", "variance constant, Gaussianity and bias limit at one time")
    p.add_argument("--t", type=float, required=True, dest="time", help="evaluation time (grid point)")
    p = add("sigma2", "print the asymptotic variance constant for a kernel", config_required=False)
    p.add_argument("--kernel", help="kernel family (overrides the config)")
    p.add_argument("--H", type=float, help="Hurst index (overrides the config)")
    return parser


def _experiment(args) -> tuple[dict, ExperimentConfig]:
    raw = load_config(args.config)
    return raw, build_experiment(raw, seed=args.seed)


def _manifest(args, raw: dict, exp: ExperimentConfig | None) -> RunManifest:
    grid = {} if exp is None else {"T": exp.T, "n": exp.n, "dt": exp.dt}
    effective = dict(raw)
    if args.seed is not None:
        effective["seed"] = args.seed
    return RunManifest(
        tool_version=__version__,
        command=args.command,
        config_hash=config_hash(effective),
        master_seed=None if exp is None else exp.master_seed,
        prng=GENERATOR_NAME,
        grid=grid,
        threads=args.threads,
    )


def _eps(args, exp: ExperimentConfig) -> float:
    return exp.epsilons[0] if args.epsilon is None else float(args.epsilon)


def _cmd_simulate(args, exp, out, manifest):
    eps = _eps(args, exp)
    times = exp.times
    B = sample_fbm(exp.H, exp.n, exp.T, SeedSpec(exp.master_seed, args.rep)).values
    path = solve_reflected(exp.drift, exp.tube, eps * B, exp.x0, times)
    rows = zip(times, path.X, path.Y, path.W, path.lower, path.upper)
    return [write_csv(out / "path.csv", ["t", "X", "Y", "W", "l", "u"], rows)]


def _cmd_trend(args, exp, out, manifest):
    sol = noiseless_trend(exp)
    rows = zip(sol.times, sol.x, sol.y, sol.tau, [r.value for r in sol.regime])
    return [write_csv(out / "trend.csv", ["t", "x", "y", "tau", "regime"], rows)]


def _cmd_estimate(args, exp, out, manifest):
    eps = _eps(args, exp)
    times = exp.times
    sol = noiseless_trend(exp)
    B = sample_fbm(exp.H, exp.n, exp.T, SeedSpec(exp.master_seed, args.rep)).values
    path = solve_reflected(exp.drift, exp.tube, eps * B, exp.x0, times)
    ecfg = exp.estimator_config(eps)
    tau_hat = estimate_trend(path.X, ecfg, times)
    dec = decompose_error(path.X, sol.x, sol.y, path.Y, B, exp.drift, eps, ecfg, times)
    tau = np.interp(ecfg.eval_times, times, sol.tau)
    header = ["t", "tau_hat", "tau", "alpha", "beta", "gamma", "zeta", "eta"]
    rows = zip(ecfg.eval_times, tau_hat, tau, dec.alpha, dec.beta, dec.gamma, dec.zeta, dec.eta)
    return [write_csv(out / "estimate.csv", header, rows)]


def _cmd_risk_sweep(args, exp, out, manifest):
    report = risk_sweep(exp, n_jobs=args.threads)
    header, rows = report.csv_rows()
    files = [write_json(out / "risk_sweep.json", report), write_csv(out / "risk_curve.csv", header, rows)]
    pw_header = ["eps", "t", "pointwise_risk"]
    pw_rows = [
        (p.eps, t, r) for p in report.points for t, r in zip(p.eval_times, p.pointwise_risk)
    ]
    files.append(write_csv(out / "pointwise_risk.csv", pw_header, pw_rows))
    if args.svg and report.fit is not None:
        svg = out / "risk_curve.svg"
        pts = [p for p in report.points if p.eps > 0 and p.risk > 0]
        svg.write_text(
            risk_curve_svg([p.eps for p in pts], [p.risk for p in pts], report.fit.slope, report.fit.intercept),
            encoding="utf-8",
        )
        files.append(svg)
    if report.fit is not None:
        print(
            f"slope {format_number(report.fit.slope)} "
            f"[{report.fit.ci_low:.4f}, {report.fit.ci_high:.4f}] target {report.target_slope:.4f}"
        )
    return files


def _cmd_lemma4(args, exp, out, manifest):
    report = lemma4_study(exp, n_jobs=args.threads)
    header, rows = report.csv_rows()
    files = [write_json(out / "lemma4.json", report.to_dict()), write_csv(out / "lemma4.csv", header, rows)]
    if args.svg:
        svg = out / "lemma4.svg"
        svg.write_text(
            risk_curve_svg(report.epsilons, report.x_risk, report.x_fit.slope, report.x_fit.intercept,
                           title="E sup|X - x|^2 vs eps"),
            encoding="utf-8",
        )
        files.append(svg)
    print(f"x slope {report.x_fit.slope:.4f}  y slope {report.y_fit.slope:.4f}  target 2")
    return files


def _cmd_asymptotics(args, exp, out, manifest):
    report = asymptotic_study(exp, args.time, n_jobs=args.threads)
    header, rows = report.csv_rows()
    files = [
        write_json(out / "asymptotics.json", report.to_dict()),
        write_csv(out / "asymptotics.csv", header, rows),
    ]
    print(f"sigma2_HK {format_number(report.sigma2)}")
    if report.mu is not None:
        print(f"mu(t) {report.mu:.6g}  extrapolated {report.mu_extrapolated:.6g}")
    return files


def _cmd_sigma2(args) -> int:
    raw = load_config(args.config) if args.config is not None else {}
    kernel = build_kernel(args.kernel if args.kernel is not None else raw.get("kernel"))
    H = args.H if args.H is not None else raw.get("H")
    if H is None:
        raise ConfigError("missing config key: H (or pass --H)")
    print(format_number(sigma2_HK(kernel, float(H))))
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "trend": _cmd_trend,
    "estimate": _cmd_estimate,
    "risk-sweep": _cmd_risk_sweep,
    "lemma4": _cmd_lemma4,
    "asymptotics": _cmd_asymptotics,
}


def _run(args) -> int:
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    if args.command == "sigma2":
        return _cmd_sigma2(args)
    raw, exp = _experiment(args)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(args, raw, exp)
    start = time.perf_counter()
    files = _COMMANDS[args.command](args, exp, out, manifest)
    manifest.timings["wall_seconds"] = time.perf_counter() - start
    for f in files:
        manifest.add_output(f)
    manifest.write(out / "manifest.json")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _run(args)
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ConfigError, DSLSyntaxError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, EvalError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
