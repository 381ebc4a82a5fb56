"""Phase demodulation of swept photon traces.

The trace is projected onto exp(+2 pi i n f_mod t) with t the absolute bin
midpoint time. Because the sweep starts at t = 0 (mod T), a resonance at the
window center sits at mid-period and the raw projection of order n carries a
factor -(-1)^n (the dip sign times exp(i pi n)). `demodulate` removes it, so
that f0 = f_c gives arg(a_n) = 0 and a positive magnitude; a_0 is the mean
rate and is left as is.

With this convention a resonance offset d = f0 - f_c rotates a_n by
n 2 pi d / delta_f_win.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import FrozenSet, List, Optional

import numpy as np
import scipy.fft

from .lineshape import LineShape
from .simulator import PhotonTrace, SweepConfig
from .util import (
    PERIOD_TOLERANCE,
    ConfigError,
    EstimateFlag,
    EstimatorMethod,
    NumericalError,
    flags_to_str,
    wrap_phase,
)

logger = logging.getLogger(__name__)

NO_LOCK_SIGMA = 3.0


@dataclass
class HarmonicSet:
    """Complex demodulation coefficients a_0 ... a_n_max in counts/s."""

    a: np.ndarray
    "Coefficients, a[0] real and non-negative"

    t_int: float
    "Integration time the coefficients were computed over (s)"

    f_mod: float
    "Modulation rate (Hz)"

    t0: float = 0.0
    "Start time of the integration (s)"

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=complex)

    @property
    def n_max(self) -> int:
        return self.a.size - 1

    @property
    def a0(self) -> float:
        return float(self.a[0].real)

    @property
    def noise_floor(self) -> float:
        """1-sigma noise per quadrature, sqrt(a0 / (2 t_int))."""
        return float(np.sqrt(max(self.a0, 0.0) / (2 * self.t_int)))

    def scaled(self, gain: float) -> "HarmonicSet":
        return replace(self, a=self.a * gain)


@dataclass
class EstimateRecord:
    """Resonance parameters recovered from one HarmonicSet."""

    f0_hat: float
    "Resonance frequency estimate (Hz)"

    df0: float = np.nan
    "1-sigma uncertainty of f0_hat (Hz)"

    gamma_hat: float = np.nan
    dgamma: float = np.nan
    epsilon_hat: float = np.nan
    depsilon: float = np.nan
    r0_hat: float = np.nan
    dr0: float = np.nan

    phi: float = np.nan
    "Phase of a_1 in [-pi, pi)"

    method: EstimatorMethod = EstimatorMethod.PHASE
    flags: FrozenSet[EstimateFlag] = field(default_factory=frozenset)

    epsilon_hat_true_gamma: float = np.nan
    "Contrast recomputed with a supplied linewidth instead of gamma_hat"

    @property
    def locked(self) -> bool:
        return EstimateFlag.NO_LOCK not in self.flags

    def with_flags(self, *flags: EstimateFlag) -> "EstimateRecord":
        return replace(self, flags=self.flags | frozenset(flags))

    def as_row(self) -> dict:
        return {
            "f0_hz": self.f0_hat,
            "df0_hz": self.df0,
            "gamma_hz": self.gamma_hat,
            "epsilon": self.epsilon_hat,
            "r0_cps": self.r0_hat,
            "phi_rad": self.phi,
            "method": str(self.method),
            "flags": flags_to_str(self.flags),
        }


def check_period_grid(n_bins: int, dwell: float, f_mod: float, n_max: int) -> int:
    """Number of whole periods in the record, validated against Nyquist."""
    periods = n_bins * dwell * f_mod
    n_periods = int(round(periods))
    if n_periods < 1 or abs(periods - n_periods) > PERIOD_TOLERANCE * max(periods, 1.0):
        raise ConfigError(
            f"The trace spans {periods:.6g} modulation periods; demodulation needs a whole number."
        )
    if n_max < 0:
        raise ConfigError(f"n_max must be non-negative, got {n_max}.")
    if n_max * f_mod >= 1 / (2 * dwell):
        raise ConfigError(
            f"Harmonic {n_max} at {n_max * f_mod} Hz is beyond the bin Nyquist rate "
            f"{1 / (2 * dwell)} Hz."
        )
    return n_periods


def project_counts(counts, dwell: float, frequencies, t0: float = 0.0) -> np.ndarray:
    """Raw projections (1/N) sum_k R_k exp(+2 pi i f t_k) read off the FFT.

    Every frequency must fall on an FFT bin of the record (f * duration
    integer); the caller validates that.

    Returns
    -------
    ndarray
        Complex array of shape counts.shape[:-1] + (len(frequencies),).
    """
    counts = np.asarray(counts, dtype=float)
    n_bins = counts.shape[-1]
    duration = n_bins * dwell
    frequencies = np.asarray(frequencies, dtype=float)
    indices = np.rint(frequencies * duration).astype(int)
    spectrum = scipy.fft.fft(counts / dwell, axis=-1)
    # sum_k R_k e^{+i...} is the conjugate of the forward FFT bin for real R
    raw = np.conj(spectrum[..., indices % n_bins]) / n_bins
    return raw * np.exp(2j * np.pi * frequencies * (t0 + 0.5 * dwell))


def reference_correction(orders) -> np.ndarray:
    """Factor -(-1)^n for n >= 1 and 1 for n = 0."""
    orders = np.asarray(orders)
    return np.where(orders == 0, 1.0, -((-1.0) ** orders))


def demodulate_counts(counts, dwell: float, f_mod: float, n_max: int = 3, t0: float = 0.0):
    """Harmonic coefficients of one trace or a stack of traces (last axis = bins)."""
    counts = np.asarray(counts)
    check_period_grid(counts.shape[-1], dwell, f_mod, n_max)
    orders = np.arange(n_max + 1)
    raw = project_counts(counts, dwell, orders * f_mod, t0)
    coefficients = raw * reference_correction(orders)
    coefficients[..., 0] = coefficients[..., 0].real
    if not np.all(np.isfinite(coefficients)):
        raise NumericalError(
            "Demodulation produced non-finite coefficients; check the counts for NaN or inf."
        )
    return coefficients


def demodulate(trace: PhotonTrace, f_mod: float, n_max: int = 3) -> HarmonicSet:
    """Demodulate a period-aligned trace into a_0 ... a_n_max.

    Raises
    ------
    ConfigError
        If the trace does not span a whole number of periods or n_max is
        beyond the bin Nyquist rate.
    """
    a = demodulate_counts(trace.counts, trace.dwell, f_mod, n_max, trace.t0)
    return HarmonicSet(a=a, t_int=trace.duration, f_mod=f_mod, t0=trace.t0)


def demodulate_segments(
    trace: PhotonTrace, f_mod: float, n_max: int = 3, t_int: Optional[float] = None
) -> List[HarmonicSet]:
    """Demodulate back-to-back segments of duration t_int."""
    if t_int is None:
        return [demodulate(trace, f_mod, n_max)]
    return [demodulate(segment, f_mod, n_max) for segment in trace.segments(t_int)]


# Truncated-line phase model. A Lorentzian centred at offset u = d / delta_f_win
# with alpha = delta_f_win / (2 gamma), seen only inside one window, has
# harmonics proportional to
#     h_n(u) = int_{-1/2}^{1/2} exp(2 pi i n x) / (1 + (2 alpha (x - u))^2) dx.
# arg h_1 is monotone in u with slope 2 pi at u = 0 but bends over towards
# the window edges.
_QUADRATURE_ORDER = 512
_PHASE_TABLE_SIZE = 801
_JOINT_ALPHA_GRID = np.geomspace(1.0, 50.0, 97)


@lru_cache(maxsize=None)
def _quadrature_nodes():
    nodes, weights = np.polynomial.legendre.leggauss(_QUADRATURE_ORDER)
    return nodes / 2, weights / 2


def truncated_harmonics(u, alpha: float, orders) -> np.ndarray:
    """h_n(u) of a window-truncated Lorentzian for every offset u and order n.

    Returns
    -------
    ndarray
        Complex array of shape np.shape(u) + (len(orders),).
    """
    x, w = _quadrature_nodes()
    u = np.asarray(u, dtype=float)[..., None]
    weight = w / (1 + (2 * alpha * (x - u)) ** 2)
    kernel = np.exp(2j * np.pi * np.outer(x, np.asarray(orders)))
    return weight @ kernel


@lru_cache(maxsize=128)
def _truncated_phase_table(alpha: float):
    u_grid = np.linspace(-0.5, 0.5, _PHASE_TABLE_SIZE)
    h = truncated_harmonics(u_grid, alpha, [1, 2])
    theta = np.unwrap(np.angle(h[:, 0]))
    theta -= theta[_PHASE_TABLE_SIZE // 2]
    log_ratio = np.log(np.abs(h[:, 0]) / np.abs(h[:, 1]))
    return u_grid, theta, log_ratio


def truncated_offset(phi, alpha: float):
    """Invert arg h_1(u) = phi; phases beyond the window edges clip to +-1/2."""
    u_grid, theta, _ = _truncated_phase_table(float(alpha))
    return np.interp(phi, theta, u_grid)


def offset_from_phase(phi, sweep: SweepConfig, line_shape: LineShape, gamma: float):
    """Resonance offset f0 - f_c (Hz) implied by the phase of a_1.

    Only the Lorentzian line is corrected for the window truncation; the
    periodic and Gaussian lines use the linear map phi delta_f_win / (2 pi).
    """
    if line_shape != LineShape.LORENTZIAN:
        return np.asarray(phi) * sweep.delta_f_win / (2 * np.pi)
    alpha = sweep.delta_f_win / (2 * gamma)
    return truncated_offset(phi, alpha) * sweep.delta_f_win


def joint_offset(phi: float, a1_abs: float, a2_abs: float, sweep: SweepConfig) -> float:
    """Offset (Hz) with the linewidth unknown.

    For each alpha on a grid the phase is inverted and the model ratio
    ln|h_1/h_2| compared with the measured ln(|a_1|/|a_2|); the offset is
    interpolated at the last sign change. Without a crossing the linear map
    is kept.
    """
    linear = phi * sweep.delta_f_win / (2 * np.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        measured = np.log(a1_abs / a2_abs)
    if not np.isfinite(measured):
        return linear
    offsets = np.empty(_JOINT_ALPHA_GRID.size)
    residual = np.empty(_JOINT_ALPHA_GRID.size)
    for k, alpha in enumerate(_JOINT_ALPHA_GRID):
        u_grid, theta, log_ratio = _truncated_phase_table(float(alpha))
        offsets[k] = np.interp(phi, theta, u_grid)
        residual[k] = np.interp(offsets[k], u_grid, log_ratio) - measured
    crossings = np.flatnonzero((residual[:-1] > 0) & (residual[1:] <= 0))
    if crossings.size == 0:
        logger.debug("No linewidth matches ln|a1/a2| = %.3g, using the linear map.", measured)
        return linear
    k = crossings[-1]
    weight = residual[k] / (residual[k] - residual[k + 1])
    u = offsets[k] + weight * (offsets[k + 1] - offsets[k])
    return float(u * sweep.delta_f_win)


def lock_mask(coefficients, t_int: float, no_lock_sigma: float = NO_LOCK_SIGMA) -> np.ndarray:
    """Per-row lock test on stacked coefficients (last axis = order).

    A row is locked when a_0 > 0 and |a_1| clears no_lock_sigma times
    sqrt(a_0 / (2 t_int)). A dark row (a_0 = 0) is never locked.
    """
    coefficients = np.asarray(coefficients)
    a0 = coefficients[..., 0].real
    floor = np.sqrt(np.clip(a0, 0.0, None) / (2 * t_int))
    return (a0 > 0) & (np.abs(coefficients[..., 1]) >= no_lock_sigma * floor)


def is_locked(h: HarmonicSet, no_lock_sigma: float = NO_LOCK_SIGMA) -> bool:
    """|a_1| must clear no_lock_sigma times the per-quadrature noise floor."""
    return bool(lock_mask(h.a, h.t_int, no_lock_sigma))


def estimate_uncertainty(
    h: HarmonicSet, sweep: SweepConfig, t_int: Optional[float] = None
) -> float:
    """delta f0 = sqrt(a0 / (2 t_int)) / |a_1| * delta_f_win / (2 pi).

    A dark segment (a0 <= 0) or a vanishing a_1 carries no phase
    information and gives inf.
    """
    t_int = h.t_int if t_int is None else t_int
    magnitude = abs(h.a[1])
    if not h.a0 > 0 or magnitude == 0:
        return np.inf
    delta_phi = np.sqrt(h.a0 / (2 * t_int)) / magnitude
    return float(delta_phi * sweep.delta_f_win / (2 * np.pi))


def phase_to_frequency(
    h: HarmonicSet,
    sweep: SweepConfig,
    no_lock_sigma: float = NO_LOCK_SIGMA,
    line_shape: LineShape = LineShape.LORENTZIAN,
    gamma_true: Optional[float] = None,
) -> EstimateRecord:
    """f0 from the phase of a_1: f0 = f_c + phi delta_f_win / (2 pi).

    For the Lorentzian line the window cuts off the tails and arg(a_1) is no
    longer linear in the offset. Locked estimates are then mapped through the
    truncated-line phase curve, with the linewidth `gamma_true` when given and
    otherwise solved jointly from |a_1/a_2|. `phi` keeps the raw phase.
    """
    if h.n_max < 1:
        raise ConfigError("The phase method needs at least the first harmonic.")
    phi = float(wrap_phase(np.angle(h.a[1])))
    locked = is_locked(h, no_lock_sigma)
    flags = frozenset() if locked else frozenset({EstimateFlag.NO_LOCK})
    offset = phi * sweep.delta_f_win / (2 * np.pi)
    if not locked:
        logger.debug("|a1| = %.3g is below the no-lock threshold.", abs(h.a[1]))
    elif line_shape == LineShape.LORENTZIAN:
        if gamma_true is not None:
            offset = float(offset_from_phase(phi, sweep, line_shape, gamma_true))
        elif h.n_max >= 2:
            offset = joint_offset(phi, abs(h.a[1]), abs(h.a[2]), sweep)
        else:
            logger.debug("No linewidth for the truncation correction, using the linear map.")
    return EstimateRecord(
        f0_hat=sweep.f_c + offset,
        df0=estimate_uncertainty(h, sweep),
        phi=phi,
        method=EstimatorMethod.PHASE,
        flags=flags,
    )


def contrast_from_harmonics(a1_abs: float, r0: float, gamma: float, sweep: SweepConfig) -> float:
    """eps = (2 alpha/pi) e^(pi/alpha) |a_1| / R0 with alpha = dfw / (2 gamma)."""
    alpha = sweep.delta_f_win / (2 * gamma)
    return float(2 * alpha / np.pi * np.exp(np.pi / alpha) * a1_abs / r0)


def estimate_params(
    h: HarmonicSet,
    sweep: SweepConfig,
    gamma_true: Optional[float] = None,
    exact_dc: bool = True,
    no_lock_sigma: float = NO_LOCK_SIGMA,
    line_shape: LineShape = LineShape.LORENTZIAN,
) -> EstimateRecord:
    """Linewidth, contrast and count rate from |a_0|, |a_1|, |a_2|.

    gamma = (dfw / 2 pi) ln|a_1/a_2|. With `exact_dc` the count rate adds back
    the dip area contained in a_0, R0 = a_0 + |a_1| e^(pi/alpha); otherwise
    R0 = a_0. The record also carries the phase estimate of f0.
    """
    if h.n_max < 2:
        raise ConfigError("Linewidth and contrast need harmonics up to n = 2.")
    record = phase_to_frequency(h, sweep, no_lock_sigma, line_shape, gamma_true)
    a1, a2 = abs(h.a[1]), abs(h.a[2])
    if a2 == 0 or a1 <= a2:
        logger.debug("|a1| = %.3g does not exceed |a2| = %.3g.", a1, a2)
        return replace(record, r0_hat=h.a0).with_flags(EstimateFlag.ILL_CONDITIONED)
    gamma = sweep.delta_f_win / (2 * np.pi) * np.log(a1 / a2)
    alpha = sweep.delta_f_win / (2 * gamma)
    r0 = h.a0 + a1 * np.exp(np.pi / alpha) if exact_dc else h.a0
    epsilon = contrast_from_harmonics(a1, r0, gamma, sweep)
    epsilon_true_gamma = np.nan
    if gamma_true is not None:
        epsilon_true_gamma = contrast_from_harmonics(a1, r0, gamma_true, sweep)
    return replace(
        record,
        gamma_hat=float(gamma),
        epsilon_hat=float(epsilon),
        r0_hat=float(r0),
        epsilon_hat_true_gamma=float(epsilon_true_gamma),
    )


def harmonic_phase_estimates(h: HarmonicSet, sweep: SweepConfig) -> np.ndarray:
    """f0 implied by each harmonic order n = 1 ... n_max.

    arg(a_n) = n phi is only known modulo 2 pi, so each order is unwrapped
    against n times the first-order phase.
    """
    phi1 = np.angle(h.a[1])
    orders = np.arange(1, h.n_max + 1)
    residual = wrap_phase(np.angle(h.a[1:]) - orders * phi1)
    phi = wrap_phase(phi1 + residual / orders)
    return sweep.f_c + phi * sweep.delta_f_win / (2 * np.pi)
