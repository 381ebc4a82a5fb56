import logging
import sys
from typing import List, Optional

import matplotlib.pyplot as plt
import numpy as np
from astropy.table import Table

from .bench import run_alpha_sweep, run_sensitivity_sweep
from .config import (
    SpectrumDemodConfig,
    closed_loop_to_table,
    estimates_to_table,
    read_trace,
    write_trace,
)
from .demod import demodulate, demodulate_segments
from .estimators import estimate
from .gradiometry import demodulate_sidebands, estimate_gradient
from .lineshape import GYROMAGNETIC
from .plotting import (
    plot_alpha_sweep,
    plot_scan,
    plot_sensitivity_sweep,
    plot_tracking,
    setup_alpha_plot,
    setup_sensitivity_plot,
    setup_tracking_plot,
)
from .scan import export_image, run_scan
from .simulator import apply_gradient_modulation, synthesize_trace
from .theory import theory_table
from .tracker import run_closed_loop
from .util import ConfigError, NumericalError, configure_logging

logger = logging.getLogger(__name__)

EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3


def run_simulate(config: SpectrumDemodConfig):
    """Synthesize a trace with the line at f0_offset from the window center.

    With a simulate waveform other than "none" the field shifts the line on
    top of the offset.
    """
    sweep = config.sweep()
    p = config.resonance_params(sweep.f_c + config.f0_offset)
    trace = synthesize_trace(
        p,
        sweep,
        field=config.field_waveform(config.simulate_waveform),
        duration=config.duration,
        dwell=config.dwell,
        noise=config.noise,
        seed=config.seed,
        line_shape=config.line_shape,
    )
    if config.can_write(config._fpath_trace):
        write_trace(trace, config._fpath_trace)
        logger.info("Trace with %d bins written to '%s'.", trace.n_bins, config._fpath_trace)


def run_demod(config: SpectrumDemodConfig):
    """Estimate the resonance from a trace file, one row per t_int segment."""
    trace = read_trace(config.trace_input_file)
    sweep = config.sweep()
    t_int = config.t_int if trace.duration >= 2 * config.t_int else None
    harmonics = demodulate_segments(trace, config.f_mod, config.n_max, t_int)
    records = [
        estimate(
            h,
            sweep,
            config.estimator,
            config.n_max,
            gamma_true=config.gamma,
            no_lock_sigma=config.no_lock_sigma,
            line_shape=config.line_shape,
        )
        for h in harmonics
    ]
    table = estimates_to_table(records, t=[h.t0 for h in harmonics])
    config.write_table(table, config._fpath_estimates)


def run_track(config: SpectrumDemodConfig):
    result = run_closed_loop(
        config.resonance_params(),
        config.sweep(),
        config.field_waveform(),
        t_int=config.t_int,
        rate=config.track_rate,
        latency=config.latency,
        estimator=config.estimator,
        duration=config.track_duration,
        dwell=config.dwell,
        noise=config.noise,
        seed=config.seed,
        is_tracking=config.is_tracking,
        use_recovery=config.use_recovery,
        line_shape=config.line_shape,
        n_max=config.n_max,
    )
    logger.info("RMS error %.3g T, lock maintained: %s.", result.rms_error, result.lock_maintained)
    config.write_table(closed_loop_to_table(result), config._fpath_tracking)

    fig, ax = setup_tracking_plot()
    plot_tracking(ax, result, config.zero_field_frequency)
    config.save_plot(fig, config._fpath_tracking_plot)


def run_raster_scan(config: SpectrumDemodConfig):
    """Scan with the window centered on the resonance under the bias field."""
    f_bias = config.zero_field_frequency + float(GYROMAGNETIC.to_frequency(config.bias))
    image = run_scan(
        config.scan_config(),
        config.resonance_params(),
        config.sweep(f_bias),
        config.field_map(),
        config.noise,
        config.line_shape,
    )
    logger.info("RMS error of the locked pixels: %.3g T.", image.rms_error())
    for image_format in config.image_formats:
        fpath = config._fpath_image(image_format)
        if config.can_write(fpath):
            export_image(image, fpath, image_format)
    if config.show_plot:
        plot_scan(image)


def run_bench(config: SpectrumDemodConfig):
    p = config.resonance_params()
    windows = [2 * p.gamma * alpha for alpha in config.alphas]
    sweep_table = run_sensitivity_sweep(
        p,
        windows,
        config.t_ints,
        config.n_trials,
        config.seed,
        config.estimator,
        config.f_mod,
        config.dwell,
        config.line_shape,
        config.workers,
    )
    alpha_table = run_alpha_sweep(
        p,
        config.alphas,
        config.t_int,
        config.n_trials,
        config.seed,
        config.estimator,
        config.f_mod,
        config.dwell,
        config.line_shape,
        config.workers,
    )
    config.write_table(sweep_table, config._fpath_sensitivity)
    config.write_table(alpha_table, config._fpath_alpha_sweep)

    fig, ax = setup_sensitivity_plot()
    plot_sensitivity_sweep(ax, sweep_table)
    config.save_plot(fig, config._fpath_sensitivity_plot)
    fig, ax = setup_alpha_plot()
    plot_alpha_sweep(ax, alpha_table)
    config.save_plot(fig, config._fpath_alpha_plot)


def run_gradient(config: SpectrumDemodConfig):
    p = config.resonance_params()
    sweep = config.sweep()
    grad = config.gradiometry_config()
    trace = apply_gradient_modulation(
        p,
        sweep,
        grad,
        duration=config.gradient_duration,
        dwell=config.tf_dwell,
        noise=config.noise,
        seed=config.seed,
        line_shape=config.line_shape,
    )
    h = demodulate(trace, config.f_mod, config.n_max)
    sidebands = demodulate_sidebands(trace, config.f_mod, grad.f_tf, 2, h)
    result = estimate_gradient(sidebands, h, sweep, grad, config.gradient_method)
    logger.info("dB/dx = %.4g +/- %.2g T/m.", result.db_dx, result.d_db_dx)
    config.write_table(Table(rows=[result.as_row()]), config._fpath_gradient)


def run_theory(config: SpectrumDemodConfig):
    """Print every closed-form figure and keep a copy next to the other outputs."""
    figures = theory_table(config.resonance_params(), config.sweep(), config.t_int)
    figures = {
        key: float(value) if isinstance(value, (float, np.floating)) else value
        for key, value in figures.items()
    }
    table = Table(
        rows=[
            (key, f"{value:.6g}" if isinstance(value, float) else str(value))
            for key, value in figures.items()
        ],
        names=("quantity", "value"),
    )
    table.pprint_all()
    config.write_yaml(figures, config._fpath_theory)


COMMANDS = {
    "simulate": run_simulate,
    "demod": run_demod,
    "track": run_track,
    "scan": run_raster_scan,
    "bench-sensitivity": run_bench,
    "gradient": run_gradient,
    "theory": run_theory,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the application script"""
    try:
        config = SpectrumDemodConfig.from_args(argv)
        configure_logging(config.is_verbose)
        fpath = config.write_resolved_config()
        print(f"Resolved configuration written to '{fpath}'.")
        COMMANDS[config.command](config)
    except ConfigError as error:
        logger.error("%s", error)
        return EXIT_CONFIG_ERROR
    except NumericalError as error:
        logger.error("%s", error)
        return EXIT_NUMERICAL_ERROR
    if config.show_plot:
        plt.show()
    return 0


if __name__ == "__main__":
    sys.exit(main())
