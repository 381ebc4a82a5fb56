"""Contains the configuration object of the spectrum demodulation tools.

Values are resolved in three layers: the dataclass defaults, an optional YAML
file given with --config, and the command line flags. The object is only
built in `__main__`; library functions take explicit arguments."""
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import List, Optional, Tuple

import yaml
from astropy.table import Table
from matplotlib.figure import Figure

from ..gradiometry import GradientMethod
from ..lineshape import LineShape, ResonanceParams
from ..scan import ScanConfig
from ..simulator import GradiometryConfig, SweepConfig
from ..util import ZERO_FIELD_FREQUENCY, ConfigError, EstimatorMethod, NoiseMode, ask_overwrite
from ..waveforms import CoilWaveform, ConstantField, FieldMap, FieldRamp, FieldWaveform
from .argument_parsing import parse_args, parse_config_path

logger = logging.getLogger(__name__)

_ENUM_FIELDS = {
    "estimator": EstimatorMethod,
    "line_shape": LineShape,
    "noise": NoiseMode,
    "gradient_method": GradientMethod,
}
_TUPLE_FIELDS = ("coil_tones", "scan_extent", "image_formats", "alphas", "t_ints")
_INT_FIELDS = ("seed", "is_verbose", "n_max", "workers", "map_seed", "n_trials")
_FLOAT_FIELDS = (
    "r0",
    "epsilon",
    "gamma",
    "zero_field_frequency",
    "f0_offset",
    "delta_f_win",
    "f_mod",
    "dwell",
    "duration",
    "t_int",
    "no_lock_sigma",
    "track_rate",
    "latency",
    "track_duration",
    "coil_amplitude",
    "coil_start",
    "ramp_rate",
    "static_field",
    "scan_rate",
    "pitch",
    "bias",
    "map_peak_to_peak",
    "f_tf",
    "x0",
    "db_dx",
    "tf_dwell",
    "gradient_duration",
)
# Command line destinations that are not configuration values
_ARGS_SKIPPED = ("config",)


@dataclass
class SpectrumDemodConfig:
    """The configuration parameters of a spectrum demodulation run."""

    command: str = "theory"
    "The subcommand to run"

    config_file: Optional[str] = None
    "YAML file the values were read from"

    seed: int = 0
    "Seed of all random number generators (0)"

    out_dir: str = "output"
    "Directory all outputs are written to (output)"

    estimator: EstimatorMethod = EstimatorMethod.PHASE
    "Frequency estimator, phase or lstsq (phase)"

    is_verbose: int = 0
    "Logging verbosity, 1 for info and 2 for debug output (0)"

    show_plot: bool = False
    "Show the plot after running? (False)"

    overwrite_existing: bool = False
    "Automatically overwrite existing files? (False)"

    r0: float = 5e5
    "Off-resonant count rate in counts/s (5e5)"

    epsilon: float = 0.15
    "Fractional contrast of the dip (0.15)"

    gamma: float = 5e6
    "Half-linewidth in Hz (5 MHz)"

    zero_field_frequency: float = ZERO_FIELD_FREQUENCY
    "Resonance at zero field and initial window center in Hz (2.87 GHz)"

    f0_offset: float = 0.0
    "Offset of the simulated resonance from the window center in Hz (0)"

    line_shape: LineShape = LineShape.LORENTZIAN
    "Line shape the traces are drawn from (lorentzian)"

    delta_f_win: float = 30e6
    "Sweep window span in Hz (30 MHz)"

    f_mod: float = 1e3
    "Saw-tooth repetition rate in Hz (1 kHz)"

    dwell: float = 20e-6
    "Bin duration in s (20 us)"

    duration: float = 10e-3
    "Length of a simulated trace in s (10 ms)"

    t_int: float = 10e-3
    "Integration time per estimate in s (10 ms)"

    noise: NoiseMode = NoiseMode.SHOT
    "Shot noise or noiseless expectation values (shot)"

    trace_format: str = "csv"
    "Format of simulated trace files, csv or bin (csv)"

    trace_input_file: Optional[str] = None
    "Trace file read by the demod command"

    n_max: int = 3
    "Highest harmonic order demodulated (3)"

    no_lock_sigma: float = 3.0
    "Lock threshold on |a_1| in units of the noise floor (3)"

    track_rate: float = 50.0
    "Sample rate of the tracking loop in Hz (50)"

    latency: float = 10e-3
    "Feedback latency of the tracking loop in s (10 ms)"

    track_duration: float = 2.0
    "Length of a tracking run in s (2)"

    waveform: str = "coil"
    "Field applied during a tracking run: coil, ramp or constant (coil)"

    coil_amplitude: float = 0.5e-3
    "Amplitude of each coil tone in T (0.5 mT)"

    coil_tones: Tuple[float, ...] = (0.8, 4.0)
    "Coil tone frequencies in Hz (0.8, 4)"

    coil_start: float = 0.25
    "Time the coil is switched on in s (0.25)"

    ramp_rate: float = 10e-3
    "Field ramp rate of the ramp waveform in T/s (10 mT/s)"

    static_field: float = 0.0
    "Field of the constant waveform in T (0)"

    simulate_waveform: str = "none"
    "Field applied to a simulated trace: none, coil, ramp or constant (none)"

    is_tracking: bool = True
    "Re-center the window on each estimate while tracking? (True)"

    use_recovery: bool = False
    "Widen the window after a lost lock? (False)"

    scan_rate: float = 100.0
    "Pixel rate of a scan in Hz (100)"

    scan_extent: Tuple[float, float] = (2e-6, 2e-6)
    "Scanned size in x and y in m (2 um x 2 um)"

    pitch: float = 20e-9
    "Pixel spacing in m (20 nm)"

    bias: float = 2.75e-3
    "Bias field of a scan in T (2.75 mT)"

    is_scan_tracking: bool = False
    "Track the resonance from pixel to pixel during a scan? (False)"

    is_serpentine: bool = True
    "Reverse every other scan row when tracking? (True)"

    workers: Optional[int] = None
    "Worker processes, None for all cores"

    image_formats: Tuple[str, ...] = ("csv", "png")
    "Image files written by a scan (csv, png)"

    map_peak_to_peak: float = 500e-6
    "Peak-to-peak field of the synthetic domain map in T (0.5 mT)"

    map_seed: int = 0
    "Seed of the synthetic domain map (0)"

    alphas: Tuple[float, ...] = (1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)
    "Relative window sizes of the alpha sweep"

    t_ints: Tuple[float, ...] = (1e-3, 3e-3, 10e-3, 30e-3, 100e-3)
    "Integration times of the t_int sweep in s"

    n_trials: int = 200
    "Traces per benchmark cell (200)"

    f_tf: float = 32.5e3
    "Tuning-fork frequency in Hz (32.5 kHz)"

    x0: float = 10e-9
    "Tuning-fork oscillation amplitude in m (10 nm)"

    db_dx: float = 1e3
    "Simulated field gradient in T/m (1000)"

    tf_dwell: float = 5e-6
    "Bin duration of gradient traces in s (5 us)"

    gradient_duration: float = 100e-3
    "Length of a gradient trace in s (100 ms)"

    gradient_method: GradientMethod = GradientMethod.COHERENT
    "Phase depth estimator: coherent, magnitude or bessel (coherent)"

    def __post_init__(self):
        for name, enum in _ENUM_FIELDS.items():
            value = getattr(self, name)
            try:
                setattr(self, name, enum(str(value)))
            except ValueError as error:
                raise ConfigError(f"Unknown {name} {value!r}.") from error
        for name in _TUPLE_FIELDS:
            setattr(self, name, tuple(getattr(self, name)))
        if self.waveform not in ("coil", "ramp", "constant"):
            raise ConfigError(f"Unknown waveform {self.waveform!r}.")
        if self.simulate_waveform not in ("none", "coil", "ramp", "constant"):
            raise ConfigError(f"Unknown waveform {self.simulate_waveform!r}.")
        if self.trace_format not in ("csv", "bin"):
            raise ConfigError(f"Unknown trace format {self.trace_format!r}.")
        if self.n_max < 1:
            raise ConfigError(f"n_max must be at least 1, got {self.n_max}.")

    @property
    def _out_path(self) -> Path:
        return Path(self.out_dir)

    @property
    def _fpath_trace(self) -> Path:
        """The path a simulated trace is written to."""
        return self._out_path.joinpath(f"trace.{self.trace_format}")

    @property
    def _fpath_estimates(self) -> Path:
        return self._out_path.joinpath("estimates.csv")

    @property
    def _fpath_tracking(self) -> Path:
        return self._out_path.joinpath("tracking.csv")

    @property
    def _fpath_tracking_plot(self) -> Path:
        return self._out_path.joinpath("tracking.png")

    @property
    def _fpath_sensitivity(self) -> Path:
        return self._out_path.joinpath("sensitivity.csv")

    @property
    def _fpath_sensitivity_plot(self) -> Path:
        return self._out_path.joinpath("sensitivity.png")

    @property
    def _fpath_alpha_sweep(self) -> Path:
        return self._out_path.joinpath("alpha_sweep.csv")

    @property
    def _fpath_alpha_plot(self) -> Path:
        return self._out_path.joinpath("alpha_sweep.png")

    @property
    def _fpath_gradient(self) -> Path:
        return self._out_path.joinpath("gradient.csv")

    @property
    def _fpath_theory(self) -> Path:
        return self._out_path.joinpath("theory.yaml")

    @property
    def _fpath_resolved_config(self) -> Path:
        """The provenance echo written by every run."""
        return self._out_path.joinpath("resolved_config.yaml")

    def _fpath_image(self, image_format: str) -> Path:
        suffix = "pgm" if image_format == "pgm16" else image_format
        return self._out_path.joinpath(f"scan.{suffix}")

    def resonance_params(self, f0: Optional[float] = None) -> ResonanceParams:
        """The line; at the zero-field frequency unless `f0` is given."""
        f0 = self.zero_field_frequency if f0 is None else f0
        return ResonanceParams(f0=f0, gamma=self.gamma, epsilon=self.epsilon, r0=self.r0)

    def sweep(self, f_c: Optional[float] = None) -> SweepConfig:
        f_c = self.zero_field_frequency if f_c is None else f_c
        return SweepConfig(f_c=f_c, delta_f_win=self.delta_f_win, f_mod=self.f_mod)

    def field_waveform(self, kind: Optional[str] = None) -> Optional[FieldWaveform]:
        """The configured field; `kind` overrides the tracking waveform, "none" gives None."""
        kind = self.waveform if kind is None else kind
        if kind == "none":
            return None
        if kind == "coil":
            return CoilWaveform(self.coil_amplitude, self.coil_tones, self.coil_start)
        if kind == "ramp":
            return FieldRamp(rate=self.ramp_rate, start=self.coil_start)
        return ConstantField(self.static_field)

    def gradiometry_config(self) -> GradiometryConfig:
        return GradiometryConfig(f_tf=self.f_tf, x0=self.x0, db_dx=self.db_dx)

    def scan_config(self) -> ScanConfig:
        return ScanConfig(
            extent=self.scan_extent,
            pitch=self.pitch,
            rate=self.scan_rate,
            t_int=self.t_int,
            estimator=self.estimator,
            is_tracking=self.is_scan_tracking,
            seed=self.seed,
            bias=self.bias,
            is_serpentine=self.is_serpentine,
            dwell=self.dwell,
            n_max=self.n_max,
            workers=self.workers,
        )

    def field_map(self) -> FieldMap:
        return FieldMap(peak_to_peak=self.map_peak_to_peak, seed=self.map_seed)

    def to_dict(self) -> dict:
        """Plain YAML-safe mapping of all values."""
        values = asdict(self)
        for name in _ENUM_FIELDS:
            values[name] = str(values[name])
        for name in _TUPLE_FIELDS:
            values[name] = list(values[name])
        return values

    @classmethod
    def from_yaml(
        cls, fpath: Path, base: Optional["SpectrumDemodConfig"] = None
    ) -> "SpectrumDemodConfig":
        """Overlay the values of a YAML file onto `base` (the defaults if omitted)."""
        base = cls() if base is None else base
        return replace(base, config_file=str(fpath), **read_config_file(fpath))

    @classmethod
    def from_args(cls, argv: Optional[List[str]] = None) -> "SpectrumDemodConfig":
        """Create a SpectrumDemodConfig from the command line arguments."""
        config_path = parse_config_path(argv)
        config = cls() if config_path is None else cls.from_yaml(Path(config_path))
        args = parse_args(config, argv)
        known = {f.name for f in fields(cls)}
        values = {
            key: value
            for key, value in vars(args).items()
            if key in known and key not in _ARGS_SKIPPED
        }
        return replace(config, **values)

    def can_write(self, fpath: Path) -> bool:
        """Create the parent directory and check whether fpath may be (over)written."""
        fpath = Path(fpath)
        try:
            fpath.parent.mkdir(parents=True, exist_ok=True)
        except OSError as error:
            raise ConfigError(f"Could not create the directory of {fpath}: {error}") from error
        if self.overwrite_existing or ask_overwrite(fpath):
            return True
        logger.info("Output file '%s' not written.", fpath)
        return False

    def write_table(self, table: Table, fpath: Path):
        """Write a table as ascii CSV, asking before overwriting."""
        if not self.can_write(fpath):
            return
        try:
            table.write(fpath, format="ascii.csv", overwrite=True)
        except OSError as error:
            raise ConfigError(f"Could not write {fpath}: {error}") from error
        logger.info("Output file written to '%s'.", fpath)

    def write_yaml(self, values: dict, fpath: Path):
        if not self.can_write(fpath):
            return
        _dump_yaml(values, fpath)
        logger.info("Output file written to '%s'.", fpath)

    def write_resolved_config(self) -> Path:
        """Echo the resolved values into the output directory; always overwritten."""
        fpath = self._fpath_resolved_config
        try:
            fpath.parent.mkdir(parents=True, exist_ok=True)
        except OSError as error:
            raise ConfigError(f"Could not create {fpath.parent}: {error}") from error
        _dump_yaml(self.to_dict(), fpath)
        return fpath

    def save_plot(self, fig: Figure, fpath: Path):
        """Save the plot."""
        if self.can_write(fpath):
            fig.savefig(fpath, bbox_inches="tight", dpi=150)
            logger.info("Plot saved to '%s'.", fpath)


def _dump_yaml(values: dict, fpath: Path):
    try:
        with open(fpath, "w") as stream:
            yaml.safe_dump(values, stream, sort_keys=False)
    except OSError as error:
        raise ConfigError(f"Could not write {fpath}: {error}") from error


def read_config_file(fpath: Path) -> dict:
    """Read a YAML configuration file into a flat mapping of field values.

    Top-level mappings are treated as sections and flattened, so
    `resonance: {gamma: 5e6}` and `gamma: 5e6` are equivalent.
    """
    try:
        with open(fpath) as stream:
            content = yaml.safe_load(stream)
    except (OSError, yaml.YAMLError) as error:
        raise ConfigError(f"Could not read configuration file {fpath}: {error}") from error
    if content is None:
        return {}
    if not isinstance(content, dict):
        raise ConfigError(f"The configuration file {fpath} must hold a mapping.")
    values = {}
    for key, value in content.items():
        if isinstance(value, dict):
            values.update(value)
        else:
            values[key] = value
    known = {f.name for f in fields(SpectrumDemodConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown configuration keys in {fpath}: {', '.join(unknown)}.")
    return {key: _coerce(key, value) for key, value in values.items()}


def _coerce(name: str, value):
    """Cast a YAML value to the type of its field; PyYAML reads 5e6 as a string."""
    if value is None:
        return value
    try:
        if name in _FLOAT_FIELDS:
            return float(value)
        if name in _INT_FIELDS:
            return int(value)
        if name in _TUPLE_FIELDS and name != "image_formats":
            return tuple(float(v) for v in value)
    except (TypeError, ValueError) as error:
        raise ConfigError(f"Invalid value {value!r} for {name}.") from error
    return value
