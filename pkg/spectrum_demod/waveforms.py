"""Magnetic field sources B(t) and B(x, y) the simulator can be driven with.

A field waveform is any callable mapping a time array (s) to a field array (T).
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Protocol, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from .util import ConfigError

logger = logging.getLogger(__name__)


class FieldWaveform(Protocol):
    def __call__(self, t: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class ConstantField:
    """A static field."""

    b: float = 0.0
    "Field in T"

    def __call__(self, t):
        return np.full(np.shape(t), self.b, dtype=float)


@dataclass(frozen=True)
class FieldRamp:
    """Linear field ramp b(t) = offset + rate * (t - start) for t >= start."""

    rate: float
    "Ramp rate in T/s"

    start: float = 0.0
    "Time the ramp starts (s)"

    offset: float = 0.0
    "Field before the ramp (T)"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.offset + self.rate * np.clip(t - self.start, 0.0, None)


@dataclass(frozen=True)
class CoilWaveform:
    """Superposition of equal-amplitude sine tones switched on at `start`."""

    amplitude: float = 0.5e-3
    "Amplitude of each tone (T)"

    tones: Tuple[float, ...] = (0.8, 4.0)
    "Tone frequencies (Hz)"

    start: float = 0.0
    "Switch-on time (s); the field is zero before"

    def __call__(self, t):
        return coil_waveform(t, self.amplitude, self.tones, self.start)

    @property
    def peak(self) -> float:
        """Upper bound of |B|."""
        return abs(self.amplitude) * len(self.tones)


def coil_waveform(
    t,
    amplitude: float = 0.5e-3,
    tones: Tuple[float, ...] = (0.8, 4.0),
    start: float = 0.0,
):
    """Return A * sum_i sin(2 pi f_i t) for t >= start and 0 before."""
    t = np.asarray(t, dtype=float)
    b = np.zeros_like(t)
    for tone in tones:
        b = b + np.sin(2 * np.pi * tone * t)
    return np.where(t >= start, amplitude * b, 0.0)


@dataclass(frozen=True)
class FieldMap:
    """Synthetic domain pattern standing in for a scanned sample.

    Band-limited noise is thresholded into +/- domains and smoothed to the
    feature size; the result is rescaled to the requested peak-to-peak value
    and tiled periodically in x and y.
    """

    extent: Tuple[float, float] = (27e-6, 15.2e-6)
    "Size of one map tile (m)"

    domain_size: float = 2e-6
    "Correlation length of the domain pattern (m)"

    feature_size: float = 1e-6
    "Smoothing length of the domain walls (m)"

    peak_to_peak: float = 500e-6
    "Peak-to-peak field (T)"

    resolution: float = 50e-9
    "Grid step the pattern is generated on (m)"

    seed: int = 0
    "Seed of the pattern"

    offset: float = 0.0
    "Mean field added to the pattern (T)"

    def __post_init__(self):
        if self.resolution <= 0 or min(self.extent) <= 0:
            raise ConfigError(
                f"Field map extent {self.extent} and resolution {self.resolution} must be positive."
            )

    @cached_property
    def grid(self) -> np.ndarray:
        """The pattern on its generation grid, indexed [iy, ix]."""
        n_x = max(int(round(self.extent[0] / self.resolution)), 2)
        n_y = max(int(round(self.extent[1] / self.resolution)), 2)
        if self.peak_to_peak == 0:
            return np.zeros((n_y, n_x))
        rng = np.random.default_rng(self.seed)
        noise = rng.standard_normal((n_y, n_x))
        smooth = gaussian_filter(noise, self.domain_size / self.resolution, mode="wrap")
        domains = np.sign(smooth - np.median(smooth))
        walls = gaussian_filter(domains, self.feature_size / self.resolution, mode="wrap")
        lo, hi = walls.min(), walls.max()
        if hi == lo:
            logger.warning("Field map collapsed into a single domain; it is flat.")
            return np.zeros((n_y, n_x))
        return (walls - 0.5 * (lo + hi)) / (hi - lo) * self.peak_to_peak

    def sample_field_map(self, x, y):
        """Field (T) at positions x, y (m), bilinear on the periodic tile."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        n_y, n_x = self.grid.shape
        coords = np.stack(
            [
                (y / self.extent[1] * n_y) % n_y,
                (x / self.extent[0] * n_x) % n_x,
            ]
        ).reshape(2, -1)
        values = map_coordinates(self.grid, coords, order=1, mode="grid-wrap")
        return self.offset + values.reshape(x.shape)

    def sample_grid(self, xs, ys) -> np.ndarray:
        """Field on the outer product of xs and ys, indexed [iy, ix]."""
        xx, yy = np.meshgrid(xs, ys)
        return self.sample_field_map(xx, yy)


def sample_field_map(x, y, field_map: Optional[FieldMap] = None):
    """Field of `field_map` (default pattern if omitted) at x, y."""
    if field_map is None:
        field_map = FieldMap()
    return field_map.sample_field_map(x, y)
