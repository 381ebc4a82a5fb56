"""Resonance line model of the spin transition and the field/frequency conversion.

The Lorentzian dip
    R(f) = R0 * (1 - eps / (1 + (f - f0)^2 / gamma^2))
is the ground truth every simulated trace is drawn from. The evaluator is
dispatched on a `LineShape` so other profiles can be substituted; the phase
estimate does not depend on the detailed shape.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .util import GYROMAGNETIC_RATIO_HZ_PER_T, ConfigError


class LineShape(Enum):
    LORENTZIAN = "lorentzian"
    "Single line, cut off by the sweep window (what an instrument sees)"
    PERIODIC_LORENTZIAN = "periodic_lorentzian"
    "The line repeated every window span; the closed-form harmonics are exact for it"
    GAUSSIAN = "gaussian"
    "Gaussian dip with the same half width at half depth"

    def __str__(self) -> str:
        return str(self.value)

    def __eq__(self, __value: object) -> bool:
        if isinstance(__value, str):
            return self.value == __value
        return super().__eq__(__value)

    def __hash__(self) -> int:
        return hash(self.value)


@dataclass(frozen=True)
class GyromagneticConstant:
    """Linear conversion between resonance shift and magnetic field."""

    gamma_e_over_2pi: float = GYROMAGNETIC_RATIO_HZ_PER_T
    "Frequency per field in Hz/T (28 GHz/T)"

    @property
    def angular(self) -> float:
        """gamma_e in rad/(s T)."""
        return 2 * np.pi * self.gamma_e_over_2pi

    def to_frequency(self, field):
        return np.asarray(field) * self.gamma_e_over_2pi

    def to_field(self, frequency):
        return np.asarray(frequency) / self.gamma_e_over_2pi


GYROMAGNETIC = GyromagneticConstant()


@dataclass(frozen=True)
class ResonanceParams:
    """The physical line: center, half-linewidth, contrast and count rate."""

    f0: float
    "Resonance frequency in Hz (baseband offsets are fine)"

    gamma: float
    "Half-linewidth in Hz"

    epsilon: float
    "Fractional contrast of the dip (0 <= eps < 1)"

    r0: float
    "Off-resonant photon emission rate in counts/s"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError(f"The linewidth must be positive, got gamma={self.gamma}.")
        if not self.r0 > 0:
            raise ConfigError(f"The count rate must be positive, got r0={self.r0}.")
        if not 0 <= self.epsilon < 1:
            raise ConfigError(f"The contrast must lie in [0, 1), got {self.epsilon}.")

    def shifted(self, delta_f: float) -> "ResonanceParams":
        """The same line moved by delta_f in Hz."""
        return replace(self, f0=self.f0 + delta_f)

    def with_field(self, field: float) -> "ResonanceParams":
        """The line as seen under an additional field (T)."""
        return self.shifted(float(GYROMAGNETIC.to_frequency(field)))

    def alpha(self, delta_f_win: float) -> float:
        """Relative window size delta_f_win / (2 gamma)."""
        return delta_f_win / (2 * self.gamma)


def lorentzian_rate(f, p: ResonanceParams):
    """Return the emission rate R0 [1 - eps / (1 + (f-f0)^2/gamma^2)] at f."""
    detuning = (np.asarray(f, dtype=float) - p.f0) / p.gamma
    return p.r0 * (1.0 - p.epsilon / (1.0 + detuning**2))


def periodic_lorentzian_rate(f, p: ResonanceParams, period: float):
    """Lorentzian dip summed over all images spaced by `period`.

    Uses the closed lattice sum
        sum_m 1/(1 + ((x - m D)/g)^2) = (pi g/D) sinh(b) / (cosh(b) - cos(2 pi x/D))
    with b = 2 pi g / D.
    """
    beta = 2 * np.pi * p.gamma / period
    phase = 2 * np.pi * (np.asarray(f, dtype=float) - p.f0) / period
    # sinh/(cosh - cos) written in exp(-beta) so large beta stays finite
    e = np.exp(-beta)
    kernel = (1 - e**2) / (1 + e**2 - 2 * e * np.cos(phase))
    return p.r0 * (1.0 - p.epsilon * np.pi * p.gamma / period * kernel)


def gaussian_rate(f, p: ResonanceParams):
    """Gaussian dip with half width at half depth gamma."""
    detuning = (np.asarray(f, dtype=float) - p.f0) / p.gamma
    return p.r0 * (1.0 - p.epsilon * np.exp(-np.log(2) * detuning**2))


def line_rate(
    f,
    p: ResonanceParams,
    shape: LineShape = LineShape.LORENTZIAN,
    period: Optional[float] = None,
):
    """Evaluate the selected line shape at the drive frequency f.

    Returns
    -------
    ndarray
        Emission rate in counts/s, same shape as f.
    """
    shape = LineShape(shape)
    if shape == LineShape.LORENTZIAN:
        return lorentzian_rate(f, p)
    if shape == LineShape.GAUSSIAN:
        return gaussian_rate(f, p)
    if period is None or period <= 0:
        raise ConfigError("The periodic line shape needs the window span as period.")
    return periodic_lorentzian_rate(f, p, period)


def field_to_frequency(field, zero_field_freq: float = 0.0):
    """Resonance frequency f = zero_field_freq + (gamma_e/2pi) B."""
    return zero_field_freq + GYROMAGNETIC.to_frequency(field)


def frequency_to_field(frequency, zero_field_freq: float = 0.0):
    """Inverse of `field_to_frequency`."""
    return GYROMAGNETIC.to_field(np.asarray(frequency) - zero_field_freq)
