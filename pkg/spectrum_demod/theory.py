"""Closed-form reference values: harmonic coefficients, sensitivities and rate limits.

All sensitivities share the prefactor 2 gamma / (eps sqrt(R0)) and differ in
their dependence on the relative window size alpha = dfw / (2 gamma).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

import numpy as np

from .demod import HarmonicSet, reference_correction
from .lineshape import GYROMAGNETIC, ResonanceParams
from .simulator import SweepConfig, make_rng
from .util import MIN_SWEEP_PERIOD, ConfigError

logger = logging.getLogger(__name__)

AMPLITUDE_POINT_FACTOR = 0.77


class SensitivityMethod(Enum):
    DEMOD_PHASE = "demod_phase"
    AMPLITUDE_POINT = "amplitude_point"
    LSTSQ_FULL = "lstsq_full"
    LSTSQ_LARGEALPHA = "lstsq_largealpha"

    def __str__(self) -> str:
        return str(self.value)


def _demod_phase_factor(alpha):
    return alpha**2 * np.exp(np.pi / alpha) / (np.sqrt(2) * np.pi**2)


def _lstsq_full_factor(alpha):
    tails = (alpha**5 + 8 / 3 * alpha**3 - alpha) / (1 + alpha**2) ** 3
    return np.sqrt(alpha / (tails + np.arctan(alpha)))


def _lstsq_largealpha_factor(alpha):
    return np.sqrt(2 * alpha / np.pi)


def _amplitude_point_factor(alpha):
    return np.full(np.shape(alpha), AMPLITUDE_POINT_FACTOR)


_FACTORS = {
    SensitivityMethod.DEMOD_PHASE: _demod_phase_factor,
    SensitivityMethod.AMPLITUDE_POINT: _amplitude_point_factor,
    SensitivityMethod.LSTSQ_FULL: _lstsq_full_factor,
    SensitivityMethod.LSTSQ_LARGEALPHA: _lstsq_largealpha_factor,
}


@dataclass(frozen=True)
class SensitivityModel:
    """Sensitivity eta(p, alpha) of one detection method, in Hz sqrt(s)."""

    method: SensitivityMethod

    def factor(self, alpha):
        """Dimensionless alpha dependence multiplying the common prefactor."""
        alpha = np.asarray(alpha, dtype=float)
        if np.any(alpha <= 0):
            raise ConfigError("The relative window size must be positive.")
        return _FACTORS[self.method](alpha)

    def __call__(self, p: ResonanceParams, alpha):
        return prefactor(p) * self.factor(alpha)


def prefactor(p: ResonanceParams) -> float:
    """2 gamma / (eps sqrt(R0))."""
    if p.epsilon == 0:
        return np.inf
    return 2 * p.gamma / (p.epsilon * np.sqrt(p.r0))


def sensitivity(method, p: ResonanceParams, alpha):
    """eta of `method` in Hz sqrt(s)."""
    return SensitivityModel(SensitivityMethod(str(method)))(p, alpha)


def sensitivity_field(method, p: ResonanceParams, alpha):
    """eta of `method` in T sqrt(s)."""
    return GYROMAGNETIC.to_field(sensitivity(method, p, alpha))


def optimal_alpha() -> float:
    """alpha minimizing alpha^2 e^(pi/alpha), the phase-method optimum."""
    return np.pi / 2


def lstsq_information_gain(alpha, n_max: int = 3):
    """Expected std ratio of the harmonic least-squares over the phase method.

    Each harmonic j contributes j^2 |a_j|^2 of phase information and |a_j|
    decays as e^(-pi j / alpha).
    """
    orders = np.arange(1, n_max + 1)
    decay = np.exp(-2 * np.pi * (orders - 1) / np.asarray(alpha, dtype=float)[..., None])
    return 1 / np.sqrt(np.sum(orders**2 * decay, axis=-1))


def analytic_harmonics(
    p: ResonanceParams, sweep: SweepConfig, n_max: int = 3, t_int: float = 1.0
) -> HarmonicSet:
    """Expected a_0 ... a_n_max of an infinitely long noiseless trace.

    a_0 = R0 - pi R0 eps gamma / dfw and
    a_n = (pi R0 eps gamma / dfw) e^(-2 pi n gamma / dfw) e^(i n phi), with
    phi = 2 pi (f0 - f_c) / dfw, in the reference convention of `demodulate`.
    """
    alpha = sweep.alpha(p)
    if alpha < 1:
        logger.warning("alpha = %.3g < 1; the closed-form harmonics are unreliable.", alpha)
    dip_area = np.pi * p.r0 * p.epsilon * p.gamma / sweep.delta_f_win
    phi = 2 * np.pi * (p.f0 - sweep.f_c) / sweep.delta_f_win
    orders = np.arange(n_max + 1)
    a = dip_area * np.exp(-2 * np.pi * orders * p.gamma / sweep.delta_f_win)
    a = a * np.exp(1j * orders * phi)
    a[0] = p.r0 - dip_area
    return HarmonicSet(a=a, t_int=t_int, f_mod=sweep.f_mod)


def raw_analytic_harmonics(p: ResonanceParams, sweep: SweepConfig, n_max: int = 3):
    """Analytic coefficients without the reference-phase correction."""
    a = analytic_harmonics(p, sweep, n_max).a
    return a / reference_correction(np.arange(n_max + 1))


def random_phase_floor(sweep: SweepConfig) -> float:
    """Frequency std of a uniformly random phase: dfw / (2 sqrt(3)).

    A phase uniform on [-pi, pi) maps to an offset uniform over one window
    width dfw, whose std is dfw / sqrt(12). At t_int = 1 / snr_rate the
    shot-noise uncertainty of the phase method equals this floor.
    """
    return sweep.delta_f_win / (2 * np.sqrt(3))


@dataclass(frozen=True)
class RateLimit:
    """Upper bounds on the sample rate."""

    snr_rate: float
    "Rate at which the shot-noise uncertainty reaches the random-phase floor (1/s)"

    response_rate: float
    "Rate allowed by the NV response time, one sweep period of 100 us (1/s)"

    @property
    def rate(self) -> float:
        return min(self.snr_rate, self.response_rate)

    @property
    def binding(self) -> str:
        return "snr" if self.snr_rate <= self.response_rate else "nv_response"


def max_rate(p: ResonanceParams, sweep: SweepConfig) -> RateLimit:
    """1/t_int = eps^2 R0 pi^4 / (6 alpha^2 e^(2 pi/alpha)) and the NV response cap."""
    alpha = sweep.alpha(p)
    snr_rate = p.epsilon**2 * p.r0 * np.pi**4 / (6 * alpha**2 * np.exp(2 * np.pi / alpha))
    return RateLimit(snr_rate=float(snr_rate), response_rate=1 / MIN_SWEEP_PERIOD)


def linearized_lstsq_std(
    p: ResonanceParams,
    alpha: float,
    t_int: float = 10e-3,
    n_points: int = 2000,
    n_trials: int = 2000,
    seed: int = 0,
) -> float:
    """Monte-Carlo std of a single linear least-squares step in f0.

    The spectrum is sampled at n_points equally spaced frequencies across a
    window centered on the line, every point receiving t_int / n_points with
    Gaussian noise of variance R0 t_int / n_points. Linewidth, contrast and
    count rate are known; one linear step is taken from the true f0. This is
    the setting the closed-form least-squares sensitivity assumes, not a full
    nonlinear fit.
    """
    if alpha < 1:
        raise ConfigError(
            f"alpha = {alpha} < 1 is outside the range the closed form describes."
        )
    half = alpha * p.gamma
    f = p.f0 - half + 2 * half * (np.arange(n_points) + 0.5) / n_points
    x = (f - p.f0) / p.gamma
    # d/df0 of R0 (1 - eps / (1 + x^2))
    jacobian = -p.r0 * p.epsilon * 2 * x / (p.gamma * (1 + x**2) ** 2) * t_int / n_points
    sigma = np.sqrt(p.r0 * t_int / n_points)
    rng = make_rng(seed)
    noise = rng.normal(0.0, sigma, size=(n_trials, n_points))
    steps = noise @ jacobian / (jacobian @ jacobian)
    return float(np.std(steps))


def theory_table(
    p: ResonanceParams, sweep: SweepConfig, t_int: Optional[float] = None
) -> Dict[str, object]:
    """All closed-form figures for one parameter set, keyed by name."""
    alpha = sweep.alpha(p)
    table = {
        "alpha": alpha,
        "a0_cps": analytic_harmonics(p, sweep, 2).a0,
        "abs_a1_cps": float(abs(analytic_harmonics(p, sweep, 2).a[1])),
        "a2_over_a1": float(np.exp(-np.pi / alpha)),
        "prefactor_hz_rt_s": prefactor(p),
    }
    for method in SensitivityMethod:
        table[f"eta_{method}_hz_rt_s"] = float(sensitivity(method, p, alpha))
        table[f"eta_{method}_t_rt_s"] = float(sensitivity_field(method, p, alpha))
    limit = max_rate(p, sweep)
    table["max_rate_snr_hz"] = limit.snr_rate
    table["max_rate_nv_hz"] = limit.response_rate
    table["max_rate_binding"] = limit.binding
    table["random_phase_floor_hz"] = random_phase_floor(sweep)
    table["optimal_alpha_phase"] = optimal_alpha()
    if t_int is not None:
        table["df0_hz"] = float(sensitivity(SensitivityMethod.DEMOD_PHASE, p, alpha) / np.sqrt(t_int))
    return table
