import numpy as np
import pytest

from spectrum_demod.lineshape import LineShape, ResonanceParams
from spectrum_demod.simulator import SweepConfig

# Count rate at which the 10 ms phase estimate sits far above the no-lock threshold
BRIGHT_R0 = 5e7


@pytest.fixture
def params() -> ResonanceParams:
    """Line of the reference experiment, at baseband."""
    return ResonanceParams(f0=0.0, gamma=5e6, epsilon=0.15, r0=5e5)


@pytest.fixture
def bright_params(params) -> ResonanceParams:
    return ResonanceParams(f0=params.f0, gamma=params.gamma, epsilon=params.epsilon, r0=BRIGHT_R0)


@pytest.fixture
def sweep() -> SweepConfig:
    """30 MHz window at 1 kHz, alpha = 3 for the reference line."""
    return SweepConfig(f_c=0.0, delta_f_win=30e6, f_mod=1e3)


@pytest.fixture
def periodic() -> LineShape:
    return LineShape.PERIODIC_LORENTZIAN


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
