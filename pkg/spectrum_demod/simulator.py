"""Synthesis of binned photon-count traces for a saw-tooth swept resonance.

The drive runs linearly from f_c - dfw/2 to f_c + dfw/2 once per period
T = 1/f_mod and flies back instantaneously. Each bin's expectation is the line
evaluated at the drive frequency of the bin midpoint, times the dwell; in shot
mode every bin is an independent Poisson draw with that mean.
"""

import logging
from dataclasses import dataclass, replace
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np

from .lineshape import GYROMAGNETIC, LineShape, ResonanceParams, line_rate
from .util import (
    MAX_DWELL_FRACTION,
    MIN_SWEEP_PERIOD,
    PERIOD_TOLERANCE,
    ConfigError,
    NoiseMode,
)
from .waveforms import FieldWaveform

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence]


@dataclass(frozen=True)
class SweepConfig:
    """The saw-tooth drive: window center, window span and repetition rate."""

    f_c: float
    "Window center in Hz"

    delta_f_win: float
    "Window span in Hz"

    f_mod: float = 1e3
    "Saw-tooth repetition rate in Hz"

    def __post_init__(self):
        if not self.delta_f_win > 0:
            raise ConfigError(f"The window span must be positive, got {self.delta_f_win}.")
        if not self.f_mod > 0:
            raise ConfigError(f"The modulation rate must be positive, got {self.f_mod}.")

    @property
    def period(self) -> float:
        return 1.0 / self.f_mod

    @property
    def sweep_rate(self) -> float:
        """v = f_mod * delta_f_win in Hz/s."""
        return self.f_mod * self.delta_f_win

    @property
    def window(self) -> Tuple[float, float]:
        return (self.f_c - self.delta_f_win / 2, self.f_c + self.delta_f_win / 2)

    def alpha(self, p: ResonanceParams) -> float:
        """Relative window size delta_f_win / (2 gamma)."""
        return p.alpha(self.delta_f_win)

    def recentered(self, f_c: float) -> "SweepConfig":
        return replace(self, f_c=f_c)

    def expanded(self, factor: float) -> "SweepConfig":
        return replace(self, delta_f_win=self.delta_f_win * factor)


@dataclass
class PhotonTrace:
    """Time-binned photon counts."""

    dwell: float
    "Bin duration in s"

    counts: np.ndarray
    "Counts per bin (integers in shot mode, expectations in noiseless mode)"

    t0: float = 0.0
    "Start time of the first bin in s"

    truncated: bool = False
    "Whether the requested duration was rounded down to whole periods"

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.dwell <= 0:
            raise ConfigError(f"The dwell must be positive, got {self.dwell}.")
        if self.counts.ndim != 1:
            raise ConfigError("A photon trace holds a one-dimensional count array.")
        if np.any(self.counts < 0):
            raise ConfigError("Photon counts cannot be negative.")

    @property
    def n_bins(self) -> int:
        return self.counts.size

    @property
    def duration(self) -> float:
        return self.n_bins * self.dwell

    @property
    def rates(self) -> np.ndarray:
        """Counts converted to rates (counts/s)."""
        return self.counts / self.dwell

    @property
    def times(self) -> np.ndarray:
        """Bin midpoints in s."""
        return self.t0 + (np.arange(self.n_bins) + 0.5) * self.dwell

    def n_periods(self, f_mod: float) -> float:
        return self.duration * f_mod

    def segments(self, t_int: float) -> Iterator["PhotonTrace"]:
        """Split into back-to-back traces of duration t_int; a partial tail is dropped."""
        bins_per_segment = int(round(t_int / self.dwell))
        if bins_per_segment < 1 or abs(bins_per_segment * self.dwell - t_int) > (
            PERIOD_TOLERANCE * t_int
        ):
            raise ConfigError(
                f"Segment length {t_int} s is not a whole number of {self.dwell} s bins."
            )
        for i in range(self.n_bins // bins_per_segment):
            start = i * bins_per_segment
            yield PhotonTrace(
                dwell=self.dwell,
                counts=self.counts[start : start + bins_per_segment],
                t0=self.t0 + start * self.dwell,
            )


@dataclass(frozen=True)
class GradiometryConfig:
    """Tip oscillation converting a field gradient into phase modulation."""

    f_tf: float = 32.5e3
    "Oscillation frequency of the tuning fork in Hz"

    x0: float = 10e-9
    "Oscillation amplitude in m"

    db_dx: float = 0.0
    "Field gradient along the oscillation axis in T/m"

    delta_phi: Optional[float] = None
    "Phase modulation depth in rad; derived from x0 * dB/dx if not given"

    @property
    def b1(self) -> float:
        """Amplitude of the AC field seen by the oscillating tip (T)."""
        return self.x0 * self.db_dx

    def phase_depth(self, sweep: SweepConfig) -> float:
        """delta_phi = gamma_e B1 / delta_f_win with the angular gamma_e."""
        if self.delta_phi is not None:
            return self.delta_phi
        return GYROMAGNETIC.angular * self.b1 / sweep.delta_f_win

    def validate(self, sweep: SweepConfig):
        if self.f_tf <= sweep.f_mod:
            raise ConfigError(
                f"f_tf={self.f_tf} Hz must exceed f_mod={sweep.f_mod} Hz, "
                "otherwise the sidebands alias onto the harmonics."
            )
        if self.f_tf < 10 * sweep.f_mod:
            raise ConfigError(
                f"f_tf={self.f_tf} Hz must be at least ten times f_mod={sweep.f_mod} Hz."
            )
        ratio = self.f_tf / sweep.f_mod
        if abs(ratio - round(ratio)) < PERIOD_TOLERANCE:
            logger.warning(
                "f_tf is the %d-th harmonic of f_mod; carrier harmonics overlap the sidebands.",
                round(ratio),
            )


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Counter-based generator for a seed or seed sequence."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: SeedLike, n: int) -> List[np.random.Generator]:
    """n independent streams; stream i depends only on (seed, i)."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return [make_rng(child) for child in seed.spawn(n)]


def spawn_seeds(seed: SeedLike, n: int) -> List[np.random.SeedSequence]:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return seed.spawn(n)


def instantaneous_drive_frequency(t, sweep: SweepConfig):
    """Drive frequency f_c - dfw/2 + v (t mod T) of the saw-tooth at time t."""
    cycle = np.mod(np.asarray(t, dtype=float) * sweep.f_mod, 1.0)
    return sweep.f_c + sweep.delta_f_win * (cycle - 0.5)


def acquisition_grid(sweep: SweepConfig, duration: float, dwell: float) -> Tuple[int, bool]:
    """Validate dwell/duration and return (number of bins, truncated flag).

    The duration is rounded down to a whole number of sweep periods.
    """
    if dwell <= 0:
        raise ConfigError(f"The dwell must be positive, got {dwell}.")
    if duration < 0:
        raise ConfigError(f"The duration cannot be negative, got {duration}.")
    if dwell > MAX_DWELL_FRACTION * sweep.period:
        raise ConfigError(
            f"Dwell {dwell} s undersamples the sweep; it must be at most "
            f"{MAX_DWELL_FRACTION} of the period {sweep.period} s."
        )
    bins_per_period = sweep.period / dwell
    if abs(bins_per_period - round(bins_per_period)) > PERIOD_TOLERANCE * bins_per_period:
        raise ConfigError(
            f"The sweep period {sweep.period} s is not a whole number of {dwell} s bins."
        )
    if sweep.period < MIN_SWEEP_PERIOD:
        logger.warning(
            "Sweep period %.3g s is close to the NV response time; the line will be distorted.",
            sweep.period,
        )
    periods = duration * sweep.f_mod
    n_periods = int(np.floor(periods + PERIOD_TOLERANCE))
    if n_periods < 1:
        raise ConfigError(f"Duration {duration} s is shorter than one sweep period.")
    truncated = periods - n_periods > PERIOD_TOLERANCE * max(periods, 1.0)
    if truncated:
        logger.warning(
            "Duration %.6g s rounded down to %d whole sweep periods.", duration, n_periods
        )
    return n_periods * int(round(bins_per_period)), truncated


def expected_counts(
    p: ResonanceParams,
    sweep: SweepConfig,
    field: Optional[FieldWaveform] = None,
    duration: float = 10e-3,
    dwell: float = 20e-6,
    t0: float = 0.0,
    line_shape: LineShape = LineShape.LORENTZIAN,
    time_shift: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, bool]:
    """Noiseless expectation per bin, evaluated at the bin midpoints.

    `time_shift` displaces the sweep argument (phase modulation); the field
    is always evaluated at the true bin time.

    Returns
    -------
    (ndarray, bool)
        Expected counts per bin and the truncation flag.
    """
    n_bins, truncated = acquisition_grid(sweep, duration, dwell)
    t = t0 + (np.arange(n_bins) + 0.5) * dwell
    drive_time = t if time_shift is None else t + time_shift(t)
    drive = instantaneous_drive_frequency(drive_time, sweep)
    if field is not None:
        # A field shift of the line is a shift of the drive the other way
        drive = drive - GYROMAGNETIC.to_frequency(field(t))
    rate = line_rate(drive, p, line_shape, period=sweep.delta_f_win)
    return rate * dwell, truncated


def _draw(means: np.ndarray, noise: NoiseMode, rng: np.random.Generator) -> np.ndarray:
    if NoiseMode(str(noise)) == NoiseMode.NONE:
        return means
    return rng.poisson(means)


def synthesize_trace(
    p: ResonanceParams,
    sweep: SweepConfig,
    field: Optional[FieldWaveform] = None,
    duration: float = 10e-3,
    dwell: float = 20e-6,
    noise: NoiseMode = NoiseMode.SHOT,
    seed: SeedLike = 0,
    t0: float = 0.0,
    line_shape: LineShape = LineShape.LORENTZIAN,
    rng: Optional[np.random.Generator] = None,
) -> PhotonTrace:
    """Simulate one photon trace of the swept resonance under a field waveform."""
    means, truncated = expected_counts(p, sweep, field, duration, dwell, t0, line_shape)
    rng = make_rng(seed) if rng is None else rng
    counts = _draw(means, noise, rng)
    return PhotonTrace(dwell=dwell, counts=counts, t0=t0, truncated=truncated)


def apply_gradient_modulation(
    p: ResonanceParams,
    sweep: SweepConfig,
    grad: GradiometryConfig,
    field: Optional[FieldWaveform] = None,
    duration: float = 10e-3,
    dwell: float = 20e-6,
    noise: NoiseMode = NoiseMode.SHOT,
    seed: SeedLike = 0,
    t0: float = 0.0,
    line_shape: LineShape = LineShape.LORENTZIAN,
    rng: Optional[np.random.Generator] = None,
) -> PhotonTrace:
    """Simulate a trace of a tip oscillating in a field gradient.

    The periodic signal is evaluated at t + dphi/(2 pi f_mod) cos(2 pi f_tf t),
    i.e. with the exact phase modulation.
    """
    grad.validate(sweep)
    delta_phi = grad.phase_depth(sweep)
    amplitude = delta_phi / (2 * np.pi * sweep.f_mod)

    def shift(t):
        return amplitude * np.cos(2 * np.pi * grad.f_tf * t)

    means, truncated = expected_counts(
        p, sweep, field, duration, dwell, t0, line_shape, time_shift=shift
    )
    rng = make_rng(seed) if rng is None else rng
    counts = _draw(means, noise, rng)
    return PhotonTrace(dwell=dwell, counts=counts, t0=t0, truncated=truncated)


def synthesize_batch(
    p: ResonanceParams,
    sweep: SweepConfig,
    offsets,
    duration: float = 10e-3,
    dwell: float = 20e-6,
    noise: NoiseMode = NoiseMode.SHOT,
    rng: Optional[np.random.Generator] = None,
    line_shape: LineShape = LineShape.LORENTZIAN,
    t0: float = 0.0,
) -> np.ndarray:
    """Counts for many traces at once, each under a static resonance offset.

    Returns
    -------
    ndarray
        Array of shape (len(offsets), n_bins).
    """
    offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
    n_bins, _ = acquisition_grid(sweep, duration, dwell)
    t = t0 + (np.arange(n_bins) + 0.5) * dwell
    drive = instantaneous_drive_frequency(t, sweep)
    rate = line_rate(drive[None, :] - offsets[:, None], p, line_shape, sweep.delta_f_win)
    rng = make_rng(0) if rng is None else rng
    return _draw(rate * dwell, noise, rng)
