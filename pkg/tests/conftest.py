import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rfsde.experiments import BandwidthRule, ExperimentConfig  # noqa: E402
from rfsde.kernels import KernelSpec  # noqa: E402
from rfsde.reflect import TubeSpec  # noqa: E402
from rfsde.specdsl import FunctionSpec  # noqa: E402


def ou_scenario(**overrides) -> ExperimentConfig:
    """dX = -X dt + eps dB in [-2, 2] from 1: never touches the walls when eps is small."""
    base = dict(
        H=0.75, T=1.0, n=256, x0=1.0,
        drift=FunctionSpec("-x", "x", 1.0),
        tube=TubeSpec.from_sources("-2", "2"),
        kernel=KernelSpec.named("triangular"),
        epsilons=(2.0**-3, 2.0**-4, 2.0**-5),
        bandwidth=BandwidthRule(),
        replications=20,
        master_seed=11,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def floor_scenario(**overrides) -> ExperimentConfig:
    """No drift, tube [t - 1, t + 1] from -1: the state is swept along the rising floor."""
    base = dict(
        H=0.75, T=1.0, n=256, x0=-1.0,
        drift=FunctionSpec("0", "x", 1.0),
        tube=TubeSpec.from_sources("t - 1", "t + 1"),
        kernel=KernelSpec.named("triangular"),
        epsilons=(2.0**-3, 2.0**-4, 2.0**-5),
        bandwidth=BandwidthRule(),
        replications=20,
        master_seed=11,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture
def ou():
    return ou_scenario()


@pytest.fixture
def floor():
    return floor_scenario()
