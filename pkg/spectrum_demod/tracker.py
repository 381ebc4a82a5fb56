"""Closed-loop tracking: the sweep window follows the latest resonance estimate.

Samples of length t_int start every 1/rate. An estimate becomes available at
the end of its sample and is applied `latency` later; the window only changes
at sample boundaries, so an update due in the middle of a sample waits for the
next one.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, NamedTuple, Optional, Tuple

import numpy as np

from .demod import EstimateRecord, demodulate
from .estimators import estimate
from .lineshape import GYROMAGNETIC, LineShape, ResonanceParams
from .simulator import SeedLike, SweepConfig, make_rng, synthesize_trace
from .util import PERIOD_TOLERANCE, ConfigError, EstimateFlag, EstimatorMethod, NoiseMode
from .waveforms import FieldWaveform

logger = logging.getLogger(__name__)

# Tolerance on the apply time of a queued update (s)
TIME_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SlewRate:
    hz_per_s: float
    t_per_s: float


def slew_rate(sweep: SweepConfig, t_int: float) -> SlewRate:
    """Fastest trackable frequency ramp, SR = delta_f_win / (2 t_int)."""
    if not t_int > 0:
        raise ConfigError(f"The integration time must be positive, got {t_int}.")
    rate = sweep.delta_f_win / (2 * t_int)
    return SlewRate(hz_per_s=rate, t_per_s=float(GYROMAGNETIC.to_field(rate)))


@dataclass(frozen=True)
class TrackerConfig:
    latency: float = 10e-3
    "Dead time between the end of a sample and the window update (s)"

    is_tracking: bool = True
    "Whether the window follows the estimates at all"

    use_recovery: bool = False
    "Widen the window after a no-lock sample until the line is found again"

    max_expansion: float = 4.0
    "Largest window widening factor of the recovery"

    def __post_init__(self):
        if self.latency < 0:
            raise ConfigError(f"The feedback latency cannot be negative, got {self.latency}.")
        if self.max_expansion < 1:
            raise ConfigError(f"max_expansion must be at least 1, got {self.max_expansion}.")


class PendingUpdate(NamedTuple):
    apply_time: float
    f_c: float
    expansion: float


class HistoryRow(NamedTuple):
    t: float
    f0_hat: float
    f_c: float
    locked: bool


@dataclass
class TrackerState:
    """Mutable state of one control loop."""

    sweep: SweepConfig
    "Window currently applied to the drive"

    base_delta_f_win: Optional[float] = None
    "Window span without recovery widening (Hz)"

    expansion: float = 1.0
    locked: bool = True
    pending: Deque[PendingUpdate] = field(default_factory=deque)
    history: List[HistoryRow] = field(default_factory=list)

    def __post_init__(self):
        if self.base_delta_f_win is None:
            self.base_delta_f_win = self.sweep.delta_f_win

    @property
    def f_c(self) -> float:
        return self.sweep.f_c

    def apply_due(self, now: float):
        """Apply every queued update whose apply time has passed."""
        while self.pending and self.pending[0].apply_time <= now + TIME_TOLERANCE:
            update = self.pending.popleft()
            self.expansion = update.expansion
            self.sweep = SweepConfig(
                f_c=update.f_c,
                delta_f_win=self.base_delta_f_win * update.expansion,
                f_mod=self.sweep.f_mod,
            )


def tracker_step(
    state: TrackerState,
    record: EstimateRecord,
    now: float,
    config: TrackerConfig = TrackerConfig(),
) -> TrackerState:
    """Feed one estimate, available at time `now`, into the loop.

    A no-lock estimate leaves the center unchanged and clears the lock flag;
    with recovery enabled it queues a doubled window instead.
    """
    state.locked = record.locked
    if config.is_tracking:
        if record.locked:
            state.pending.append(PendingUpdate(now + config.latency, record.f0_hat, 1.0))
        elif config.use_recovery and state.expansion < config.max_expansion:
            expansion = min(state.expansion * 2, config.max_expansion)
            logger.info("No lock at t = %.4g s; widening the window %gx.", now, expansion)
            state.pending.append(PendingUpdate(now + config.latency, state.f_c, expansion))
    state.apply_due(now)
    state.history.append(HistoryRow(now, record.f0_hat, state.f_c, record.locked))
    return state


@dataclass
class ClosedLoopResult:
    """Per-sample time series of a closed-loop run."""

    t: np.ndarray
    "Sample start times (s)"

    b_true: np.ndarray
    "Field averaged over each sample (T)"

    b_est: np.ndarray
    "Estimated field (T)"

    f0_hat: np.ndarray
    f_c: np.ndarray
    "Window center the sample was acquired with (Hz)"

    window_low: np.ndarray
    window_high: np.ndarray
    lock: np.ndarray
    records: List[EstimateRecord] = field(default_factory=list, repr=False)

    @property
    def error(self) -> np.ndarray:
        return self.b_est - self.b_true

    @property
    def rms_error(self) -> float:
        """RMS field error over the locked samples (T)."""
        if not np.any(self.lock):
            return np.nan
        return float(np.sqrt(np.mean(self.error[self.lock] ** 2)))

    def cycle_slips(self, delta_f_win: Optional[float] = None) -> np.ndarray:
        """Samples whose error exceeds a quarter of the window."""
        if delta_f_win is None:
            delta_f_win = self.window_high - self.window_low
        return np.abs(GYROMAGNETIC.to_frequency(self.error)) > np.asarray(delta_f_win) / 4

    @property
    def lock_maintained(self) -> bool:
        """Every sample locked and none slipped."""
        return bool(np.all(self.lock) and not np.any(self.cycle_slips()))

    @property
    def first_loss(self) -> Optional[float]:
        lost = ~self.lock | self.cycle_slips()
        if not np.any(lost):
            return None
        return float(self.t[np.argmax(lost)])


def run_closed_loop(
    p: ResonanceParams,
    sweep: SweepConfig,
    field_waveform: Optional[FieldWaveform],
    t_int: float = 10e-3,
    rate: float = 50.0,
    latency: float = 10e-3,
    estimator: EstimatorMethod = EstimatorMethod.PHASE,
    duration: float = 2.0,
    dwell: float = 20e-6,
    noise: NoiseMode = NoiseMode.SHOT,
    seed: SeedLike = 0,
    is_tracking: bool = True,
    use_recovery: bool = False,
    line_shape: LineShape = LineShape.LORENTZIAN,
    n_max: int = 3,
    t_start: float = 0.0,
) -> ClosedLoopResult:
    """Simulate tracking of a field waveform sample by sample.

    `p.f0` is the zero-field resonance; the field shifts it by gamma_e B.
    Without tracking the window stays at `sweep` and fields beyond half the
    window wrap around.
    """
    if not rate > 0:
        raise ConfigError(f"The sample rate must be positive, got {rate}.")
    if rate * t_int > 1 + PERIOD_TOLERANCE:
        raise ConfigError(
            f"t_int = {t_int} s does not fit into the sample period {1 / rate} s; "
            "overlapping samples are not supported."
        )
    config = TrackerConfig(latency, is_tracking, use_recovery)
    n_samples = int(np.floor(duration * rate + PERIOD_TOLERANCE))
    if n_samples < 1:
        raise ConfigError(f"Duration {duration} s holds no sample at {rate} Hz.")
    rng = make_rng(seed)
    state = TrackerState(sweep)
    rows = []
    records = []
    for k in range(n_samples):
        t0 = t_start + k / rate
        state.apply_due(t0)
        current = state.sweep
        trace = synthesize_trace(
            p, current, field_waveform, t_int, dwell, noise, t0=t0, line_shape=line_shape, rng=rng
        )
        h = demodulate(trace, current.f_mod, n_max)
        record = estimate(h, current, estimator, n_max, gamma_true=p.gamma, line_shape=line_shape)
        if state.expansion > 1:
            record = record.with_flags(EstimateFlag.WINDOW_EXPANDED)
        if trace.truncated:
            record = record.with_flags(EstimateFlag.PERIODS_TRUNCATED)
        b_true = 0.0 if field_waveform is None else float(np.mean(field_waveform(trace.times)))
        rows.append(
            (
                t0,
                b_true,
                float(GYROMAGNETIC.to_field(record.f0_hat - p.f0)),
                record.f0_hat,
                current.f_c,
                *current.window,
                record.locked,
            )
        )
        records.append(record)
        tracker_step(state, record, t0 + trace.duration, config)
    columns: Tuple[np.ndarray, ...] = tuple(np.array(col) for col in zip(*rows))
    n_lost = int(np.sum(~columns[7]))
    if n_lost:
        logger.info("%d of %d samples without lock.", n_lost, n_samples)
    return ClosedLoopResult(*columns, records=records)
