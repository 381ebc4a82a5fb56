"""Raster scans of the sensor over a synthetic field map."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import matplotlib.pyplot as plt
import numpy as np
import yaml
from astropy.table import Table

from .demod import HarmonicSet, demodulate_counts, lock_mask, offset_from_phase
from .estimators import estimate
from .lineshape import GYROMAGNETIC, LineShape, ResonanceParams
from .simulator import SweepConfig, make_rng, spawn_seeds, synthesize_batch
from .tracker import TrackerConfig, TrackerState, tracker_step
from .util import ConfigError, EstimatorMethod, NoiseMode
from .waveforms import FieldMap

logger = logging.getLogger(__name__)

WALL_TIME_LABEL = "pure pixel time (no move/settle overhead)"
IMAGE_FORMATS = ("csv", "pgm16", "png")
PGM_MAX = 65535


@dataclass(frozen=True)
class ScanConfig:
    """Raster geometry and acquisition settings of one scan."""

    origin: Tuple[float, float] = (0.0, 0.0)
    "Position of the first pixel (m)"

    extent: Tuple[float, float] = (2e-6, 2e-6)
    "Scanned size in x and y (m)"

    pitch: float = 20e-9
    "Pixel spacing (m)"

    rate: float = 100.0
    "Pixel rate (Hz)"

    t_int: float = 10e-3
    "Integration time per pixel (s)"

    estimator: EstimatorMethod = EstimatorMethod.PHASE
    is_tracking: bool = False
    "Re-center the window on the previous pixel's estimate"

    latency: Optional[float] = None
    "Feedback latency when tracking (s); one pixel period if None"

    seed: int = 0
    bias: float = 2.75e-3
    "Bias field added to the map (T)"

    is_serpentine: bool = True
    "Reverse every other row when tracking"

    dwell: float = 20e-6
    n_max: int = 3
    workers: Optional[int] = None
    "Worker processes for untracked scans (None: all cores)"

    def __post_init__(self):
        if not self.rate > 0 or not self.pitch > 0:
            raise ConfigError(f"Pixel rate {self.rate} and pitch {self.pitch} must be positive.")
        if self.t_int > 1 / self.rate * (1 + 1e-9):
            raise ConfigError(
                f"t_int = {self.t_int} s exceeds the pixel period {1 / self.rate} s."
            )
        if self.n_x < 1 or self.n_y < 1:
            raise ConfigError(f"Extent {self.extent} holds no pixel at pitch {self.pitch}.")

    @property
    def n_x(self) -> int:
        return int(round(self.extent[0] / self.pitch))

    @property
    def n_y(self) -> int:
        return int(round(self.extent[1] / self.pitch))

    @property
    def n_pixels(self) -> int:
        return self.n_x * self.n_y

    @property
    def xs(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.n_x) * self.pitch

    @property
    def ys(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.n_y) * self.pitch

    @property
    def acquisition_time(self) -> float:
        """Simulated wall time, pixels / rate (s)."""
        return self.n_pixels / self.rate


@dataclass
class FieldImage:
    """Estimated field per pixel, indexed [iy, ix]."""

    b: np.ndarray
    "Field estimate relative to zero field (T)"

    db: np.ndarray
    "1-sigma uncertainty (T)"

    lock: np.ndarray
    config: ScanConfig
    b_true: Optional[np.ndarray] = field(default=None, repr=False)
    "Simulated truth, if known (T)"

    def __post_init__(self):
        expected = (self.config.n_y, self.config.n_x)
        for name in ("b", "db", "lock"):
            shape = np.shape(getattr(self, name))
            assert shape == expected, f"{name} has shape {shape}, expected {expected}"

    @property
    def shape(self) -> Tuple[int, int]:
        return self.b.shape

    @property
    def wall_time(self) -> float:
        return self.config.acquisition_time

    @property
    def n_unlocked(self) -> int:
        return int(np.sum(~self.lock))

    def rms_error(self, locked_only: bool = True) -> float:
        if self.b_true is None:
            return np.nan
        error = self.b - self.b_true
        if locked_only:
            error = error[self.lock]
        return float(np.sqrt(np.mean(error**2))) if error.size else np.nan


def _pixel_estimates(
    coefficients,
    sweep: SweepConfig,
    p: ResonanceParams,
    cfg: ScanConfig,
    line_shape: LineShape = LineShape.LORENTZIAN,
):
    """(b, db, lock) of a row of pixels demodulated with the same window."""
    if cfg.estimator == EstimatorMethod.PHASE:
        a0 = np.clip(coefficients[:, 0].real, 0, None)
        a1 = np.abs(coefficients[:, 1])
        phi = np.angle(coefficients[:, 1])
        lock = lock_mask(coefficients, cfg.t_int)
        offset = phi * sweep.delta_f_win / (2 * np.pi)
        offset[lock] = offset_from_phase(phi[lock], sweep, line_shape, p.gamma)
        f0 = sweep.f_c + offset
        floor = np.sqrt(a0 / (2 * cfg.t_int))
        with np.errstate(divide="ignore", invalid="ignore"):
            df0 = np.where(
                (a0 > 0) & (a1 > 0), floor / a1 * sweep.delta_f_win / (2 * np.pi), np.inf
            )
    else:
        records = [
            estimate(
                HarmonicSet(a, cfg.t_int, sweep.f_mod),
                sweep,
                cfg.estimator,
                cfg.n_max,
                gamma_true=p.gamma,
                line_shape=line_shape,
            )
            for a in coefficients
        ]
        f0 = np.array([r.f0_hat for r in records])
        df0 = np.array([r.df0 for r in records])
        lock = np.array([r.locked for r in records])
    return GYROMAGNETIC.to_field(f0 - p.f0), GYROMAGNETIC.to_field(df0), lock


def _scan_row(args) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    cfg, p, sweep, field_map, y, seed, noise, line_shape = args
    b_true = field_map.sample_field_map(cfg.xs, np.full(cfg.n_x, y)) + cfg.bias
    counts = synthesize_batch(
        p,
        sweep,
        GYROMAGNETIC.to_frequency(b_true),
        cfg.t_int,
        cfg.dwell,
        noise,
        make_rng(seed),
        line_shape,
    )
    coefficients = demodulate_counts(counts, cfg.dwell, sweep.f_mod, cfg.n_max)
    return (*_pixel_estimates(coefficients, sweep, p, cfg, line_shape), b_true)


def _run_untracked(cfg, p, sweep, field_map, noise, line_shape):
    seeds = spawn_seeds(cfg.seed, cfg.n_y)
    jobs = [
        (cfg, p, sweep, field_map, y, seed, noise, line_shape) for y, seed in zip(cfg.ys, seeds)
    ]
    if cfg.workers == 1 or cfg.n_y == 1:
        rows = [_scan_row(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as executor:
            rows = list(executor.map(_scan_row, jobs, chunksize=max(1, cfg.n_y // 64)))
    return [np.stack(col) for col in zip(*rows)]


def _run_tracked(cfg, p, sweep, field_map, noise, line_shape):
    """Sequential raster; the window of pixel k+1 follows the estimate of pixel k."""
    latency = 1 / cfg.rate if cfg.latency is None else cfg.latency
    tracker_config = TrackerConfig(latency=latency)
    state = TrackerState(sweep)
    rng = make_rng(cfg.seed)
    b_true = field_map.sample_grid(cfg.xs, cfg.ys) + cfg.bias
    b, db = np.empty_like(b_true), np.empty_like(b_true)
    lock = np.zeros(b_true.shape, dtype=bool)
    k = 0
    for iy in range(cfg.n_y):
        columns = range(cfg.n_x)
        if cfg.is_serpentine and iy % 2:
            columns = reversed(columns)
        for ix in columns:
            now = k / cfg.rate
            state.apply_due(now)
            current = state.sweep
            counts = synthesize_batch(
                p,
                current,
                [GYROMAGNETIC.to_frequency(b_true[iy, ix])],
                cfg.t_int,
                cfg.dwell,
                noise,
                rng,
                line_shape,
                t0=now,
            )
            coefficients = demodulate_counts(counts, cfg.dwell, current.f_mod, cfg.n_max, t0=now)
            h = HarmonicSet(coefficients[0], cfg.t_int, current.f_mod, t0=now)
            record = estimate(
                h, current, cfg.estimator, cfg.n_max, gamma_true=p.gamma, line_shape=line_shape
            )
            b[iy, ix] = GYROMAGNETIC.to_field(record.f0_hat - p.f0)
            db[iy, ix] = GYROMAGNETIC.to_field(record.df0)
            lock[iy, ix] = record.locked
            tracker_step(state, record, now + cfg.t_int, tracker_config)
            k += 1
    return b, db, lock, b_true


def run_scan(
    cfg: ScanConfig,
    p: ResonanceParams,
    sweep: SweepConfig,
    field_map: Optional[FieldMap] = None,
    noise: NoiseMode = NoiseMode.SHOT,
    line_shape: LineShape = LineShape.LORENTZIAN,
) -> FieldImage:
    """Simulate and estimate every pixel of a raster scan.

    `p.f0` is the zero-field resonance and `sweep` the initial window,
    normally centered on the resonance under the bias field. Without
    tracking the rows are independent and run in a process pool with one
    spawned seed per row; with tracking the raster runs in order.
    Out-of-lock pixels are flagged and the scan carries on.
    """
    field_map = FieldMap() if field_map is None else field_map
    logger.info(
        "Scanning %d x %d pixels (%s: %.4g s).",
        cfg.n_x,
        cfg.n_y,
        WALL_TIME_LABEL,
        cfg.acquisition_time,
    )
    run = _run_tracked if cfg.is_tracking else _run_untracked
    b, db, lock, b_true = run(cfg, p, sweep, field_map, noise, line_shape)
    image = FieldImage(b=b, db=db, lock=lock.astype(bool), config=cfg, b_true=b_true)
    if image.n_unlocked:
        logger.warning("%d of %d pixels without lock.", image.n_unlocked, cfg.n_pixels)
    return image


def wrap_mask(image: FieldImage, sweep: SweepConfig, reference: float) -> np.ndarray:
    """Pixels whose true field lies outside the window around `reference` (T)."""
    if image.b_true is None:
        raise ConfigError("The image carries no ground truth.")
    half_window = GYROMAGNETIC.to_field(sweep.delta_f_win / 2)
    return np.abs(image.b_true - reference) > half_window


def image_to_table(image: FieldImage) -> Table:
    cfg = image.config
    xx, yy = np.meshgrid(cfg.xs, cfg.ys)
    return Table(
        {
            "x_m": xx.ravel(),
            "y_m": yy.ravel(),
            "b_T": image.b.ravel(),
            "db_T": image.db.ravel(),
            "lock": image.lock.ravel().astype(int),
        }
    )


def _gray_levels(image: FieldImage):
    """Linear map of the locked pixels onto [0, 1]; unlocked pixels are 0."""
    values = image.b[image.lock] if np.any(image.lock) else image.b.ravel()
    lo, hi = float(np.min(values)), float(np.max(values))
    degenerate = hi == lo
    if degenerate:
        levels = np.full(image.shape, 0.5)
    else:
        levels = np.clip((image.b - lo) / (hi - lo), 0, 1)
    levels = np.where(image.lock, levels, 0.0)
    return levels, lo, hi, degenerate


def _write_pgm16(fpath: Path, levels: np.ndarray):
    pixels = np.rint(levels * PGM_MAX).astype(">u2")
    n_y, n_x = pixels.shape
    with open(fpath, "wb") as stream:
        stream.write(f"P5\n{n_x} {n_y}\n{PGM_MAX}\n".encode("ascii"))
        stream.write(pixels.tobytes())


def read_pgm16(fpath: Path) -> np.ndarray:
    """Pixel values of a binary 16-bit PGM written by `export_image`."""
    data = Path(fpath).read_bytes()
    fields = data.split(maxsplit=4)
    if fields[0] != b"P5":
        raise ConfigError(f"{fpath} is not a binary PGM file.")
    n_x, n_y, max_value = int(fields[1]), int(fields[2]), int(fields[3])
    assert max_value == PGM_MAX, f"Expected a 16-bit PGM, got maxval {max_value}"
    pixels = np.frombuffer(data[len(data) - 2 * n_x * n_y :], dtype=">u2")
    return pixels.reshape(n_y, n_x)


def scan_config_to_dict(cfg: ScanConfig) -> dict:
    """Plain YAML-safe mapping of a ScanConfig."""
    values = asdict(cfg)
    values["origin"] = [float(v) for v in cfg.origin]
    values["extent"] = [float(v) for v in cfg.extent]
    values["estimator"] = str(cfg.estimator)
    return values


def sidecar_path(fpath: Path) -> Path:
    return Path(fpath).with_suffix(Path(fpath).suffix + ".yaml")


def export_image(image: FieldImage, fpath: Path, image_format: str = "csv") -> Path:
    """Write the image as csv, pgm16 or png with a YAML sidecar describing it.

    Grey levels map the field range of the locked pixels linearly onto the
    full scale; a flat image (min == max) is written as uniform mid-grey.
    """
    if image_format not in IMAGE_FORMATS:
        raise ConfigError(f"Unknown image format {image_format!r}; use one of {IMAGE_FORMATS}.")
    fpath = Path(fpath)
    meta = {
        "format": image_format,
        "width": image.shape[1],
        "height": image.shape[0],
        "wall_time_s": image.wall_time,
        "wall_time_label": WALL_TIME_LABEL,
        "unlocked_pixels": image.n_unlocked,
        "scan": scan_config_to_dict(image.config),
    }
    try:
        if image_format == "csv":
            image_to_table(image).write(fpath, format="ascii.csv", overwrite=True)
        else:
            levels, lo, hi, degenerate = _gray_levels(image)
            meta.update(
                {
                    "mapping": "linear",
                    "b_min_T": lo,
                    "b_max_T": hi,
                    "degenerate_range": degenerate,
                    "unlocked_level": 0,
                }
            )
            if image_format == "pgm16":
                meta["max_level"] = PGM_MAX
                _write_pgm16(fpath, levels)
            else:
                meta["max_level"] = 255
                plt.imsave(fpath, levels, cmap="gray", vmin=0.0, vmax=1.0, origin="lower")
        with open(sidecar_path(fpath), "w") as stream:
            yaml.safe_dump(meta, stream, sort_keys=False)
    except OSError as error:
        raise ConfigError(f"Could not write image to {fpath}: {error}") from error
    logger.info("Image written to %s.", fpath)
    return fpath


def read_image_csv(fpath: Path, config: Optional[ScanConfig] = None) -> FieldImage:
    """Read an image written by `export_image(..., "csv")`.

    The scan geometry comes from `config` or, if omitted, from the sidecar.
    """
    fpath = Path(fpath)
    try:
        table = Table.read(fpath, format="ascii.csv")
        if config is None:
            with open(sidecar_path(fpath)) as stream:
                scan = yaml.safe_load(stream)["scan"]
            scan["origin"] = tuple(scan["origin"])
            scan["extent"] = tuple(scan["extent"])
            scan["estimator"] = EstimatorMethod(scan["estimator"])
            config = ScanConfig(**scan)
    except OSError as error:
        raise ConfigError(f"Could not read image from {fpath}: {error}") from error
    shape = (config.n_y, config.n_x)
    if len(table) != config.n_pixels:
        raise ConfigError(f"{fpath} holds {len(table)} pixels, expected {config.n_pixels}.")
    return FieldImage(
        b=np.asarray(table["b_T"], dtype=float).reshape(shape),
        db=np.asarray(table["db_T"], dtype=float).reshape(shape),
        lock=np.asarray(table["lock"]).astype(bool).reshape(shape),
        config=config,
    )
