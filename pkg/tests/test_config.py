import json
import warnings

import pytest

from rfsde.config import ALLOWED_KEYS, build_experiment, build_kernel, config_hash, load_config, normalize_config
from rfsde.exceptions import ConfigError

BASE = {
    "H": 0.75, "T": 1.0, "n": 128, "x0": 1.0,
    "drift": {"expr": "-x", "lipschitz": 1.0},
    "tube": {"lower": "-2", "upper": "2"},
    "kernel": "triangular", "epsilons": [0.1, 0.05, 0.025],
    "bandwidth": "power", "replications": 4, "seed": 3,
}


def write(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_round_trip(tmp_path):
    exp = build_experiment(load_config(write(tmp_path, BASE)))
    assert exp.H == 0.75 and exp.n == 128 and exp.master_seed == 3
    assert exp.drift.source == "-x" and exp.drift.declared_lipschitz == 1.0
    assert exp.tube.upper(0.3) == 2.0
    assert exp.epsilons == (0.1, 0.05, 0.025)


def test_seed_override():
    assert build_experiment(normalize_config(BASE), seed=99).master_seed == 99


def test_flat_tube_keys():
    cfg = {k: v for k, v in BASE.items() if k != "tube"}
    cfg.update({"tube.lower": "t - 1", "tube.upper": "t + 1"})
    exp = build_experiment(normalize_config(cfg))
    assert exp.tube.lower(0.5) == -0.5
    assert {"tube.lower", "tube.upper"} <= ALLOWED_KEYS


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="nope.json"):
        load_config(tmp_path / "nope.json")


def test_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{ not json")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(p)


@pytest.mark.parametrize(
    "change, pattern",
    [({"epsilon": [0.1]}, "epsilon"),
     ({"tube": {"lower": "-1", "uper": "1"}}, "tube.uper"),
     ({"drift": "x +"}, "drift: .*offset 3"),
     ({"tube": {"lower": "-1 + y", "upper": "1"}}, "tube.lower: unknown identifier 'y'"),
     ({"H": "0.7"}, "H"),
     ({"n": 10.5}, "n"),
     ({"H": 1.2}, "Hurst"),
     ({"kernel": "gaussian"}, "gaussian"),
     ({"bandwidth": {"fixed": -1}}, "positive"),
     ({"bandwidth": "silverman"}, "bandwidth"),
     ({"increment_convention": "right"}, "increment_convention"),
     ({"epsilons": [0.1, 0.2]}, "decreasing"),
     ({"seed": -1}, "seed")],
)
def test_errors_name_the_key(change, pattern):
    cfg = dict(BASE)
    cfg.update(change)
    with pytest.raises(ConfigError, match=pattern):
        build_experiment(normalize_config(cfg))


def test_missing_required():
    cfg = {k: v for k, v in BASE.items() if k != "drift"}
    with pytest.raises(ConfigError, match="missing config key: drift"):
        build_experiment(normalize_config(cfg))


def test_both_tube_forms_rejected():
    cfg = dict(BASE, **{"tube.lower": "-1"})
    with pytest.raises(ConfigError):
        normalize_config(cfg)


def test_kernel_specs():
    assert build_kernel(None).family == "triangular"
    assert build_kernel({"name": "box", "scale": 2.0}).B == 2.0
    with pytest.raises(ConfigError):
        build_kernel({"family": "box"})


def test_lipschitz_warning():
    cfg = dict(BASE, drift={"expr": "-3*x", "lipschitz": 1.0})
    with pytest.warns(RuntimeWarning, match="exceeds declared"):
        build_experiment(normalize_config(cfg))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_experiment(normalize_config(BASE))


def test_config_hash_stable():
    assert config_hash(BASE) == config_hash(dict(reversed(list(BASE.items()))))
    assert config_hash(BASE) != config_hash(dict(BASE, seed=4))
