"""Experiment configuration files.

A configuration is a JSON object. Recognised top-level keys::

    H, T, n, x0, drift, tube (or tube.lower / tube.upper), kernel,
    epsilons, bandwidth, replications, seed, eval_times,
    increment_convention

``drift`` is an expression in ``x`` or ``{"expr": ..., "lipschitz": L}``;
tube boundaries are expressions in ``t``. ``kernel`` is a family name or
``{"name": ..., "scale": s}``; ``bandwidth`` is ``"power"``,
``{"power": true}`` or ``{"fixed": h}``. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from pathlib import Path
from typing import Any

from .exceptions import ConfigError
from .experiments import BandwidthRule, ExperimentConfig
from .kernels import KernelSpec
from .reflect import TubeSpec
from .specdsl import DSLSyntaxError, FunctionSpec

__all__ = ["ALLOWED_KEYS", "load_config", "normalize_config", "build_experiment", "build_kernel", "config_hash"]

ALLOWED_KEYS = frozenset(
    {
        "H", "T", "n", "x0", "drift", "tube", "tube.lower", "tube.upper", "kernel",
        "epsilons", "bandwidth", "replications", "seed", "eval_times", "increment_convention",
    }
)
_REQUIRED = ("H", "n", "x0", "drift", "tube", "epsilons")


def load_config(path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return normalize_config(raw)


def normalize_config(raw: Any) -> dict[str, Any]:
    """Check key names and fold ``tube.lower``/``tube.upper`` into ``tube``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - ALLOWED_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = dict(raw)
    flat = {k: cfg.pop(k) for k in ("tube.lower", "tube.upper") if k in cfg}
    if flat:
        if "tube" in cfg:
            raise ConfigError("give either 'tube' or 'tube.lower'/'tube.upper', not both")
        cfg["tube"] = {k.split(".", 1)[1]: v for k, v in flat.items()}
    if "tube" in cfg:
        tube = cfg["tube"]
        if not isinstance(tube, dict):
            raise ConfigError("tube: expected an object with 'lower' and 'upper'")
        extra = sorted(set(tube) - {"lower", "upper"})
        if extra:
            raise ConfigError(f"unknown config key(s): {', '.join('tube.' + e for e in extra)}")
        for side in ("lower", "upper"):
            if side not in tube:
                raise ConfigError(f"missing config key: tube.{side}")
    return cfg


def config_hash(cfg: dict[str, Any]) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _number(cfg, key, kind=float, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing config key: {key}")
        return default
    value = cfg[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if kind is int and (not float(value).is_integer()):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return kind(value)


def _function(key: str, source: Any, variable: str, lipschitz=None) -> FunctionSpec:
    if not isinstance(source, str):
        raise ConfigError(f"{key}: expected an expression string, got {source!r}")
    try:
        return FunctionSpec(source, variable, lipschitz)
    except DSLSyntaxError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def build_kernel(entry: Any) -> KernelSpec:
    if entry is None:
        return KernelSpec("triangular")
    if isinstance(entry, str):
        return KernelSpec.named(entry)
    if isinstance(entry, dict):
        extra = sorted(set(entry) - {"name", "scale"})
        if extra or "name" not in entry:
            raise ConfigError(f"kernel: expected {{'name', 'scale'}}, got keys {sorted(entry)}")
        scale = entry.get("scale", 1.0)
        if isinstance(scale, bool) or not isinstance(scale, (int, float)):
            raise ConfigError(f"kernel.scale: expected a number, got {scale!r}")
        return KernelSpec.named(entry["name"], float(scale))
    raise ConfigError(f"kernel: expected a name or object, got {entry!r}")


def _bandwidth(entry: Any) -> BandwidthRule:
    if entry is None or entry == "power" or entry == {"power": True}:
        return BandwidthRule("power")
    if isinstance(entry, dict) and set(entry) == {"fixed"}:
        value = entry["fixed"]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"bandwidth.fixed: expected a number, got {value!r}")
        return BandwidthRule("fixed", float(value))
    raise ConfigError(f"bandwidth: expected 'power', {{'power': true}} or {{'fixed': h}}, got {entry!r}")


def build_experiment(cfg: dict[str, Any], seed: int | None = None) -> ExperimentConfig:
    """Validate a normalised config and build the experiment definition."""
    for key in _REQUIRED:
        if key not in cfg:
            raise ConfigError(f"missing config key: {key}")
    drift_spec = cfg["drift"]
    if isinstance(drift_spec, dict):
        extra = sorted(set(drift_spec) - {"expr", "lipschitz"})
        if extra or "expr" not in drift_spec:
            raise ConfigError(f"drift: expected {{'expr', 'lipschitz'}}, got keys {sorted(drift_spec)}")
        drift = _function("drift", drift_spec["expr"], "x", drift_spec.get("lipschitz"))
    else:
        drift = _function("drift", drift_spec, "x")
    tube_spec = cfg["tube"]
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        tube = TubeSpec(
            _function("tube.lower", tube_spec["lower"], "t"),
            _function("tube.upper", tube_spec["upper"], "t"),
        )
    eps = cfg["epsilons"]
    if not isinstance(eps, list) or not all(
        isinstance(e, (int, float)) and not isinstance(e, bool) for e in eps
    ):
        raise ConfigError("epsilons: expected a list of numbers")
    eval_times = cfg.get("eval_times")
    if eval_times is not None and not isinstance(eval_times, list):
        raise ConfigError("eval_times: expected null or a list of times")
    convention = cfg.get("increment_convention", "midpoint")
    if convention not in ("midpoint", "left"):
        raise ConfigError(f"increment_convention: expected 'midpoint' or 'left', got {convention!r}")
    master_seed = seed if seed is not None else _number(cfg, "seed", int, 0)
    if not 0 <= master_seed < 2**64:
        raise ConfigError("seed: expected a 64-bit unsigned integer")
    try:
        exp = ExperimentConfig(
            H=_number(cfg, "H"),
            T=_number(cfg, "T", float, 1.0),
            n=_number(cfg, "n", int),
            x0=_number(cfg, "x0"),
            drift=drift,
            tube=tube,
            kernel=build_kernel(cfg.get("kernel")),
            epsilons=tuple(eps),
            bandwidth=_bandwidth(cfg.get("bandwidth")),
            replications=_number(cfg, "replications", int, 100),
            master_seed=master_seed,
            eval_times=None if eval_times is None else tuple(eval_times),
            increment_convention=convention,
        )
    except ConfigError:
        raise
    except ValueError as exc:  # precondition failures on H etc. are configuration problems here
        raise ConfigError(str(exc)) from exc
    if drift.declared_lipschitz is not None:
        lo, hi = tube.bounds(exp.times)
        drift.check_lipschitz(float(lo.min()), float(hi.max()))
    return exp
