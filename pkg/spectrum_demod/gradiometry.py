"""Field gradient from the tuning-fork sidebands of the swept signal.

An oscillating tip sees the sweep phase modulated as phi(t) = dphi cos(2 pi f_tf t),
which puts sidebands at f_tf + k f_mod next to the carrier harmonics. In the
reference convention of `demod`:

    b_k  = -i J1(k dphi) / J0(k dphi) a_k
    b_-k = +i J1(k dphi) / J0(k dphi) conj(a_k)

with the measured a_k (which already carry the J0 factor). To first order the
ratio is -/+ i k dphi / 2.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import FrozenSet, Optional, Sequence

import numpy as np
import scipy.optimize
import scipy.special

from .demod import (
    HarmonicSet,
    check_period_grid,
    demodulate,
    is_locked,
    project_counts,
    reference_correction,
)
from .lineshape import GYROMAGNETIC
from .simulator import GradiometryConfig, PhotonTrace, SweepConfig
from .util import PERIOD_TOLERANCE, ConfigError, EstimateFlag, flags_to_str

logger = logging.getLogger(__name__)

DEFAULT_ORDERS = (1, 2)
# Relative difference of the exact and linear estimates above which the small-angle form is flagged
SMALL_ANGLE_TOLERANCE = 0.02


class GradientMethod(Enum):
    COHERENT = "coherent"
    MAGNITUDE = "magnitude"
    BESSEL = "bessel"

    def __str__(self) -> str:
        return str(self.value)


@dataclass
class SidebandSet:
    """Complex coefficients at f_tf + k f_mod for k = -n_max ... n_max."""

    b: np.ndarray
    "Coefficients indexed by k + n_max"

    f_tf: float
    carrier: HarmonicSet

    @property
    def n_max(self) -> int:
        return (self.b.size - 1) // 2

    def __getitem__(self, k: int) -> complex:
        if abs(k) > self.n_max:
            raise IndexError(f"Sideband order {k} beyond n_max = {self.n_max}.")
        return self.b[k + self.n_max]


def _check_sideband_grid(trace: PhotonTrace, f_mod: float, f_tf: float, n_max: int):
    check_period_grid(trace.n_bins, trace.dwell, f_mod, n_max)
    tf_periods = f_tf * trace.duration
    if abs(tf_periods - round(tf_periods)) > PERIOD_TOLERANCE * max(tf_periods, 1.0):
        raise ConfigError(
            f"f_tf = {f_tf} Hz is not commensurate with the {trace.duration} s record "
            f"({tf_periods:.6g} periods); the sidebands would leak."
        )
    highest = f_tf + n_max * f_mod
    if highest >= 1 / (2 * trace.dwell):
        raise ConfigError(
            f"Sideband at {highest} Hz is beyond the bin Nyquist rate {1 / (2 * trace.dwell)} Hz; "
            "use a shorter dwell."
        )


def demodulate_sidebands(
    trace: PhotonTrace, f_mod: float, f_tf: float, n_max: int = 2, carrier: Optional[HarmonicSet] = None
) -> SidebandSet:
    """Project the trace onto exp(+2 pi i (f_tf + k f_mod) t), k = -n_max ... n_max.

    `carrier` is demodulated from the same trace if not given.
    """
    _check_sideband_grid(trace, f_mod, f_tf, n_max)
    orders = np.arange(-n_max, n_max + 1)
    raw = project_counts(trace.counts, trace.dwell, f_tf + orders * f_mod, trace.t0)
    b = raw * reference_correction(np.abs(orders))
    if carrier is None:
        carrier = demodulate(trace, f_mod, n_max)
    return SidebandSet(b=b, f_tf=f_tf, carrier=carrier)


def _model_vectors(h: HarmonicSet, orders: Sequence[int]):
    """Signed first-order sideband per unit dphi, for +k and -k."""
    k = np.asarray(orders)
    a = h.a[k]
    return -0.5j * k * a, 0.5j * k * np.conj(a)


def _bessel_ratio(x):
    return scipy.special.j1(x) / scipy.special.j0(x)


def _bessel_ratio_slope(x):
    """d/dx J1(x)/J0(x) = 1 + r^2 - r/x, which tends to 1/2 at x = 0."""
    x = np.asarray(x, dtype=float)
    ratio = _bessel_ratio(x)
    safe = np.where(x == 0, 1.0, x)
    return np.where(x == 0, 0.5, 1 + ratio**2 - ratio / safe)


def _stacked_sidebands(s: SidebandSet, orders: Sequence[int]) -> np.ndarray:
    return np.concatenate([[s[k] for k in orders], [s[-k] for k in orders]])


def linear_phase_depth(s: SidebandSet, h: HarmonicSet, orders: Sequence[int] = DEFAULT_ORDERS):
    """Coherent least-squares dphi and its 1-sigma error."""
    plus, minus = _model_vectors(h, orders)
    m = np.concatenate([plus, minus])
    b = _stacked_sidebands(s, orders)
    weight = np.sum(np.abs(m) ** 2)
    if weight == 0:
        return np.nan, np.inf
    delta_phi = np.sum(np.real(np.conj(m) * b)) / weight
    return float(delta_phi), float(h.noise_floor / np.sqrt(weight))


def magnitude_phase_depth(s: SidebandSet, h: HarmonicSet, orders: Sequence[int] = DEFAULT_ORDERS):
    """Least-squares dphi from |b_k| against k |a_k| / 2 (sign-blind, biased up by noise)."""
    plus, minus = _model_vectors(h, orders)
    m = np.abs(np.concatenate([plus, minus]))
    b = np.abs(_stacked_sidebands(s, orders))
    weight = np.sum(m**2)
    if weight == 0:
        return np.nan, np.inf
    return float(np.sum(m * b) / weight), float(h.noise_floor / np.sqrt(weight))


def bessel_phase_depth(
    s: SidebandSet, h: HarmonicSet, orders: Sequence[int] = DEFAULT_ORDERS, x0: float = 0.0
):
    """dphi from the exact J1/J0 sideband model, started at x0."""
    k = np.asarray(orders)
    a = h.a[k]
    b = _stacked_sidebands(s, orders)
    # J0(k dphi) must stay positive
    limit = 0.99 * 2.404825557695773 / k.max()

    def residuals(x):
        ratio = _bessel_ratio(k * x[0])
        model = np.concatenate([-1j * ratio * a, 1j * ratio * np.conj(a)])
        diff = model - b
        return np.concatenate([diff.real, diff.imag])

    start = float(np.clip(x0, -0.9 * limit, 0.9 * limit))
    result = scipy.optimize.least_squares(residuals, [start], bounds=([-limit], [limit]), xtol=1e-12)
    if not result.success:
        logger.warning("Bessel sideband fit did not converge: %s", result.message)
    delta_phi = float(result.x[0])
    slope = k * _bessel_ratio_slope(k * delta_phi)
    information = 2 * np.sum(np.abs(a) ** 2 * slope**2)
    error = h.noise_floor / np.sqrt(information) if information > 0 else np.inf
    return delta_phi, float(error)


@dataclass
class GradientEstimate:
    """Phase depth and the field gradient it implies."""

    delta_phi: float
    d_delta_phi: float
    b1: float
    "AC field amplitude seen by the tip (T)"

    d_b1: float
    db_dx: float
    "Gradient (T/m)"

    d_db_dx: float
    method: GradientMethod = GradientMethod.COHERENT
    delta_phi_linear: float = np.nan
    delta_phi_bessel: float = np.nan
    flags: FrozenSet[EstimateFlag] = field(default_factory=frozenset)

    def as_row(self) -> dict:
        return {
            "delta_phi": self.delta_phi,
            "delta_phi_err": self.d_delta_phi,
            "b1_T": self.b1,
            "b1_err_T": self.d_b1,
            "db_dx_T_per_m": self.db_dx,
            "db_dx_err_T_per_m": self.d_db_dx,
            "method": str(self.method),
            "flags": flags_to_str(self.flags),
        }


def phase_depth_to_field(delta_phi: float, sweep: SweepConfig) -> float:
    """B1 = dphi delta_f_win / gamma_e with the angular gamma_e."""
    return delta_phi * sweep.delta_f_win / GYROMAGNETIC.angular


def estimate_gradient(
    s: SidebandSet,
    h: HarmonicSet,
    sweep: SweepConfig,
    grad: GradiometryConfig,
    method: GradientMethod = GradientMethod.COHERENT,
    orders: Sequence[int] = DEFAULT_ORDERS,
) -> GradientEstimate:
    """dphi, B1 and dB/dx from the sidebands and the carrier harmonics of one trace.

    An unlocked carrier gives NaN values flagged NO_LOCK.

    Raises
    ------
    ConfigError
        If the oscillation amplitude x0 is zero or the orders exceed the sideband set.
    """
    if grad.x0 == 0:
        raise ConfigError("The oscillation amplitude x0 is zero; dB/dx is undefined.")
    if max(orders) > min(s.n_max, h.n_max) or min(orders) < 1:
        raise ConfigError(f"Sideband orders {tuple(orders)} are not available.")
    method = GradientMethod(str(method))
    if not is_locked(h):
        logger.warning("No lock on the carrier; no gradient estimate.")
        nan = float("nan")
        return GradientEstimate(
            nan, nan, nan, nan, nan, nan, method, flags=frozenset({EstimateFlag.NO_LOCK})
        )
    linear, linear_error = linear_phase_depth(s, h, orders)
    exact, exact_error = bessel_phase_depth(s, h, orders, linear)
    if method == GradientMethod.COHERENT:
        delta_phi, error = linear, linear_error
    elif method == GradientMethod.MAGNITUDE:
        delta_phi, error = magnitude_phase_depth(s, h, orders)
    else:
        delta_phi, error = exact, exact_error
    flags = frozenset()
    if abs(exact - linear) > SMALL_ANGLE_TOLERANCE * max(abs(exact), 1e-12):
        logger.info("Phase depth %.3g beyond the small-angle range (exact %.3g).", linear, exact)
        flags = frozenset({EstimateFlag.BEYOND_SMALL_ANGLE})
    b1 = phase_depth_to_field(delta_phi, sweep)
    d_b1 = phase_depth_to_field(error, sweep)
    return GradientEstimate(
        delta_phi=delta_phi,
        d_delta_phi=error,
        b1=b1,
        d_b1=d_b1,
        db_dx=b1 / grad.x0,
        d_db_dx=d_b1 / abs(grad.x0),
        method=method,
        delta_phi_linear=linear,
        delta_phi_bessel=exact,
        flags=flags,
    )
