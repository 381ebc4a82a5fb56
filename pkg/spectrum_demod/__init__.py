from .bench import estimator_comparison, run_alpha_sweep, run_sensitivity_sweep
from .demod import (
    EstimateRecord,
    HarmonicSet,
    demodulate,
    estimate_params,
    estimate_uncertainty,
    offset_from_phase,
    phase_to_frequency,
    truncated_harmonics,
)
from .estimators import estimate, harmonic_lstsq
from .gradiometry import GradientEstimate, GradientMethod, demodulate_sidebands, estimate_gradient
from .lineshape import GYROMAGNETIC, LineShape, ResonanceParams, line_rate, lorentzian_rate
from .scan import FieldImage, ScanConfig, export_image, read_image_csv, run_scan
from .simulator import (
    GradiometryConfig,
    PhotonTrace,
    SweepConfig,
    apply_gradient_modulation,
    synthesize_trace,
)
from .theory import SensitivityMethod, analytic_harmonics, max_rate, sensitivity, theory_table
from .tracker import ClosedLoopResult, TrackerState, run_closed_loop, slew_rate, tracker_step
from .util import ConfigError, EstimateFlag, EstimatorMethod, NoiseMode, NumericalError
from .waveforms import CoilWaveform, FieldMap, FieldRamp, coil_waveform, sample_field_map
