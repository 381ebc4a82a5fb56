"""Define how command line arguments are handled."""

import argparse
from typing import TYPE_CHECKING, List, Optional

if TYPE_CHECKING:
    from .config_setup import SpectrumDemodConfig


def parse_config_path(argv: Optional[List[str]] = None) -> Optional[str]:
    """Only look for --config, so the file can be read before the full parse."""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", type=str, default=None)
    args, _ = parser.parse_known_args(argv)
    return args.config


def _add_common_arguments(parser: argparse.ArgumentParser, config: "SpectrumDemodConfig"):
    parser.add_argument(
        "--config",
        type=str,
        default=config.config_file,
        help="YAML file with configuration values; command line flags take precedence (DEFAULT: None).",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=config.seed,
        help=f"Seed of the random number generators (DEFAULT: {config.seed}).",
    )
    parser.add_argument(
        "--out",
        dest="out_dir",
        type=str,
        default=config.out_dir,
        help=f"Output directory (DEFAULT: '{config.out_dir}').",
    )
    parser.add_argument(
        "--estimator",
        type=str,
        default=str(config.estimator),
        choices=["phase", "lstsq"],
        help=f"Frequency estimator (DEFAULT: {config.estimator}).",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        dest="is_verbose",
        action="count",
        default=config.is_verbose,
        help="Log progress; repeat for debug output (DEFAULT: 0).",
    )
    parser.add_argument(
        "-p",
        "--show_plot",
        action="store_true",
        default=config.show_plot,
        help=f"Whether to open the plot after running (DEFAULT: {config.show_plot}).",
    )
    parser.add_argument(
        "-o",
        "--overwrite",
        dest="overwrite_existing",
        action="store_true",
        default=config.overwrite_existing,
        help=f"Overwrite existing output files without asking (DEFAULT: {config.overwrite_existing}).",
    )


def _add_resonance_arguments(parser: argparse.ArgumentParser, config: "SpectrumDemodConfig"):
    parser.add_argument(
        "--r0",
        type=float,
        default=config.r0,
        help=f"Off-resonant count rate in counts/s (DEFAULT: {config.r0:g}).",
    )
    parser.add_argument(
        "--epsilon",
        type=float,
        default=config.epsilon,
        help=f"Fractional contrast of the dip (DEFAULT: {config.epsilon}).",
    )
    parser.add_argument(
        "--gamma",
        type=float,
        default=config.gamma,
        help=f"Half-linewidth in Hz (DEFAULT: {config.gamma:g}).",
    )
    parser.add_argument(
        "--delta_f_win",
        type=float,
        default=config.delta_f_win,
        help=f"Sweep window span in Hz (DEFAULT: {config.delta_f_win:g}).",
    )
    parser.add_argument(
        "--f_mod",
        type=float,
        default=config.f_mod,
        help=f"Saw-tooth repetition rate in Hz (DEFAULT: {config.f_mod:g}).",
    )
    parser.add_argument(
        "--line_shape",
        type=str,
        default=str(config.line_shape),
        choices=["lorentzian", "periodic_lorentzian", "gaussian"],
        help=f"Line shape the traces are drawn from (DEFAULT: {config.line_shape}).",
    )
    parser.add_argument(
        "--dwell",
        type=float,
        default=config.dwell,
        help=f"Bin duration in s (DEFAULT: {config.dwell:g}).",
    )
    parser.add_argument(
        "--t_int",
        type=float,
        default=config.t_int,
        help=f"Integration time per estimate in s (DEFAULT: {config.t_int:g}).",
    )
    parser.add_argument(
        "--n_max",
        type=int,
        default=config.n_max,
        help=f"Highest harmonic order demodulated (DEFAULT: {config.n_max}).",
    )
    parser.add_argument(
        "--noise",
        type=str,
        default=str(config.noise),
        choices=["shot", "none"],
        help=f"Shot noise or noiseless expectation values (DEFAULT: {config.noise}).",
    )


def _add_waveform_arguments(
    parser: argparse.ArgumentParser,
    config: "SpectrumDemodConfig",
    dest: str,
    choices: List[str],
    help_text: str,
):
    default = getattr(config, dest)
    parser.add_argument(
        "--waveform",
        dest=dest,
        type=str,
        default=default,
        choices=choices,
        help=f"{help_text} (DEFAULT: {default}).",
    )
    parser.add_argument(
        "--coil_amplitude",
        type=float,
        default=config.coil_amplitude,
        help=f"Amplitude of each coil tone in T (DEFAULT: {config.coil_amplitude:g}).",
    )
    parser.add_argument(
        "--ramp_rate",
        type=float,
        default=config.ramp_rate,
        help=f"Ramp rate in T/s for --waveform ramp (DEFAULT: {config.ramp_rate:g}).",
    )
    parser.add_argument(
        "--static_field",
        type=float,
        default=config.static_field,
        help=f"Field in T for --waveform constant (DEFAULT: {config.static_field:g}).",
    )


def parse_args(config: "SpectrumDemodConfig", argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments; `config` supplies the defaults.

    Returns
    -------
        argparse.Namespace
    """
    parser = argparse.ArgumentParser(
        prog="spectrum-demod",
        description="Spectrum demodulation for fast swept-resonance magnetometry",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    simulate = subparsers.add_parser("simulate", help="Synthesize a photon trace.")
    _add_common_arguments(simulate, config)
    _add_resonance_arguments(simulate, config)
    simulate.add_argument(
        "--f0_offset",
        type=float,
        default=config.f0_offset,
        help=f"Resonance offset from the window center in Hz (DEFAULT: {config.f0_offset:g}).",
    )
    simulate.add_argument(
        "--duration",
        type=float,
        default=config.duration,
        help=f"Trace duration in s (DEFAULT: {config.duration:g}).",
    )
    simulate.add_argument(
        "--trace_format",
        type=str,
        default=config.trace_format,
        choices=["csv", "bin"],
        help=f"Trace file format (DEFAULT: {config.trace_format}).",
    )
    _add_waveform_arguments(
        simulate,
        config,
        "simulate_waveform",
        ["none", "coil", "ramp", "constant"],
        "Field applied during the trace",
    )

    demod = subparsers.add_parser("demod", help="Estimate the resonance from a trace file.")
    _add_common_arguments(demod, config)
    _add_resonance_arguments(demod, config)
    demod.add_argument(
        "trace_input_file",
        type=str,
        help="Trace file (.csv with t_start_s, counts, or .bin).",
    )
    demod.add_argument(
        "--no_lock_sigma",
        type=float,
        default=config.no_lock_sigma,
        help=f"Lock threshold on |a_1| in units of the noise floor (DEFAULT: {config.no_lock_sigma}).",
    )

    track = subparsers.add_parser("track", help="Closed-loop tracking of a coil field.")
    _add_common_arguments(track, config)
    _add_resonance_arguments(track, config)
    track.add_argument(
        "--rate",
        dest="track_rate",
        type=float,
        default=config.track_rate,
        help=f"Sample rate in Hz (DEFAULT: {config.track_rate:g}).",
    )
    track.add_argument(
        "--latency",
        type=float,
        default=config.latency,
        help=f"Feedback latency in s (DEFAULT: {config.latency:g}).",
    )
    track.add_argument(
        "--track_duration",
        type=float,
        default=config.track_duration,
        help=f"Length of the run in s (DEFAULT: {config.track_duration:g}).",
    )
    _add_waveform_arguments(
        track, config, "waveform", ["coil", "ramp", "constant"], "Field applied during the run"
    )
    track.add_argument(
        "--no_tracking",
        dest="is_tracking",
        action="store_false",
        default=config.is_tracking,
        help="Keep the window fixed (DEFAULT: tracking on).",
    )
    track.add_argument(
        "--recovery",
        dest="use_recovery",
        action="store_true",
        default=config.use_recovery,
        help=f"Widen the window after a lost lock (DEFAULT: {config.use_recovery}).",
    )

    scan = subparsers.add_parser("scan", help="Raster scan over a synthetic field map.")
    _add_common_arguments(scan, config)
    _add_resonance_arguments(scan, config)
    scan.add_argument(
        "--rate",
        dest="scan_rate",
        type=float,
        default=config.scan_rate,
        help=f"Pixel rate in Hz (DEFAULT: {config.scan_rate:g}).",
    )
    scan.add_argument(
        "--extent",
        dest="scan_extent",
        type=float,
        nargs=2,
        default=list(config.scan_extent),
        help=f"Scanned size in x and y in m (DEFAULT: {config.scan_extent}).",
    )
    scan.add_argument(
        "--pitch",
        type=float,
        default=config.pitch,
        help=f"Pixel spacing in m (DEFAULT: {config.pitch:g}).",
    )
    scan.add_argument(
        "--bias",
        type=float,
        default=config.bias,
        help=f"Bias field in T (DEFAULT: {config.bias:g}).",
    )
    scan.add_argument(
        "--tracking",
        dest="is_scan_tracking",
        action="store_true",
        default=config.is_scan_tracking,
        help=f"Re-center the window on the previous pixel (DEFAULT: {config.is_scan_tracking}).",
    )
    scan.add_argument(
        "--workers",
        type=int,
        default=config.workers,
        help="Worker processes for untracked scans (DEFAULT: all cores).",
    )
    scan.add_argument(
        "--image_formats",
        type=str,
        nargs="+",
        default=list(config.image_formats),
        choices=["csv", "pgm16", "png"],
        help=f"Image files to write (DEFAULT: {' '.join(config.image_formats)}).",
    )

    bench = subparsers.add_parser("bench-sensitivity", help="Monte-Carlo sensitivity benchmark.")
    _add_common_arguments(bench, config)
    _add_resonance_arguments(bench, config)
    bench.add_argument(
        "--alphas",
        type=float,
        nargs="+",
        default=list(config.alphas),
        help=f"Relative window sizes of the alpha sweep (DEFAULT: {config.alphas}).",
    )
    bench.add_argument(
        "--t_ints",
        type=float,
        nargs="+",
        default=list(config.t_ints),
        help=f"Integration times of the t_int sweep in s (DEFAULT: {config.t_ints}).",
    )
    bench.add_argument(
        "--n_trials",
        type=int,
        default=config.n_trials,
        help=f"Traces per grid cell (DEFAULT: {config.n_trials}).",
    )
    bench.add_argument(
        "--workers",
        type=int,
        default=config.workers,
        help="Worker processes (DEFAULT: all cores).",
    )

    gradient = subparsers.add_parser("gradient", help="Gradient from tuning-fork sidebands.")
    _add_common_arguments(gradient, config)
    _add_resonance_arguments(gradient, config)
    gradient.add_argument(
        "--f_tf",
        type=float,
        default=config.f_tf,
        help=f"Tuning-fork frequency in Hz (DEFAULT: {config.f_tf:g}).",
    )
    gradient.add_argument(
        "--x0",
        type=float,
        default=config.x0,
        help=f"Oscillation amplitude in m (DEFAULT: {config.x0:g}).",
    )
    gradient.add_argument(
        "--db_dx",
        type=float,
        default=config.db_dx,
        help=f"Simulated field gradient in T/m (DEFAULT: {config.db_dx:g}).",
    )
    gradient.add_argument(
        "--gradient_duration",
        type=float,
        default=config.gradient_duration,
        help=f"Trace duration in s (DEFAULT: {config.gradient_duration:g}).",
    )
    gradient.add_argument(
        "--tf_dwell",
        type=float,
        default=config.tf_dwell,
        help=f"Bin duration of the gradient trace in s (DEFAULT: {config.tf_dwell:g}).",
    )
    gradient.add_argument(
        "--gradient_method",
        type=str,
        default=str(config.gradient_method),
        choices=["coherent", "magnitude", "bessel"],
        help=f"Phase depth estimator (DEFAULT: {config.gradient_method}).",
    )

    theory = subparsers.add_parser("theory", help="Print the closed-form figures.")
    _add_common_arguments(theory, config)
    _add_resonance_arguments(theory, config)

    return parser.parse_args(argv)
