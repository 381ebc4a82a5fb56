"""Monte-Carlo sensitivity benchmarks checked against the closed forms."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import List, Optional, Sequence

import numpy as np
from astropy.table import Table

from .demod import (
    HarmonicSet,
    demodulate_counts,
    estimate_uncertainty,
    lock_mask,
    offset_from_phase,
)
from .estimators import estimate
from .lineshape import GYROMAGNETIC, LineShape, ResonanceParams
from .simulator import SeedLike, SweepConfig, make_rng, spawn_seeds, synthesize_batch
from .theory import SensitivityMethod, analytic_harmonics, lstsq_information_gain, sensitivity
from .util import ConfigError, EstimatorMethod, NoiseMode, NumericalError

logger = logging.getLogger(__name__)

MIN_TRIALS = 100


@dataclass(frozen=True)
class BenchCell:
    """One (window, integration time) point of a benchmark grid."""

    p: ResonanceParams
    sweep: SweepConfig
    t_int: float
    n_trials: int
    seed: np.random.SeedSequence
    estimator: EstimatorMethod = EstimatorMethod.PHASE
    dwell: float = 20e-6
    line_shape: LineShape = LineShape.LORENTZIAN
    n_max: int = 3


def _trial_harmonics(cell: BenchCell) -> np.ndarray:
    """Harmonics of n_trials shot-noise traces with the line at the window center."""
    rng = make_rng(cell.seed)
    counts = synthesize_batch(
        cell.p.shifted(cell.sweep.f_c - cell.p.f0),
        cell.sweep,
        np.zeros(cell.n_trials),
        cell.t_int,
        cell.dwell,
        NoiseMode.SHOT,
        rng,
        cell.line_shape,
    )
    return demodulate_counts(counts, cell.dwell, cell.sweep.f_mod, cell.n_max)


def _estimates(cell: BenchCell, coefficients: np.ndarray, method: EstimatorMethod):
    """f0 estimates and lock flags of every trial."""
    if method == EstimatorMethod.PHASE:
        phi = np.angle(coefficients[:, 1])
        locked = lock_mask(coefficients, cell.t_int)
        offset = phi * cell.sweep.delta_f_win / (2 * np.pi)
        offset[locked] = offset_from_phase(
            phi[locked], cell.sweep, cell.line_shape, cell.p.gamma
        )
        return cell.sweep.f_c + offset, locked
    records = [
        estimate(
            HarmonicSet(a, cell.t_int, cell.sweep.f_mod),
            cell.sweep,
            method,
            cell.n_max,
            gamma_true=cell.p.gamma,
            line_shape=cell.line_shape,
        )
        for a in coefficients
    ]
    return np.array([r.f0_hat for r in records]), np.array([r.locked for r in records])


def run_cell(cell: BenchCell) -> dict:
    """Empirical frequency std of one grid cell next to its predictions."""
    coefficients = _trial_harmonics(cell)
    f0, locked = _estimates(cell, coefficients, cell.estimator)
    alpha = cell.sweep.alpha(cell.p)
    centered = cell.p.shifted(cell.sweep.f_c - cell.p.f0)
    expected = analytic_harmonics(centered, cell.sweep, 2, cell.t_int)
    std = float(np.std(f0, ddof=1))
    if not np.isfinite(std):
        raise NumericalError(f"Non-finite frequency spread in the cell at alpha = {alpha:.3g}.")
    return {
        "delta_f_win_hz": cell.sweep.delta_f_win,
        "alpha": alpha,
        "t_int_s": cell.t_int,
        "n_trials": cell.n_trials,
        "estimator": str(cell.estimator),
        "std_hz": std,
        "std_T": float(GYROMAGNETIC.to_field(std)),
        "mean_bias_hz": float(np.mean(f0) - cell.sweep.f_c),
        "eta_hz_rt_s": std * np.sqrt(cell.t_int),
        "predicted_hz": estimate_uncertainty(expected, cell.sweep, cell.t_int),
        "predicted_eta_hz_rt_s": float(sensitivity(SensitivityMethod.DEMOD_PHASE, cell.p, alpha)),
        "lock_fraction": float(np.mean(locked)),
    }


def _run_cells(cells: List[BenchCell], workers: Optional[int]) -> Table:
    if workers == 1 or len(cells) == 1:
        rows = [run_cell(cell) for cell in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(run_cell, cells))
    return Table(rows=rows)


def run_sensitivity_sweep(
    p: ResonanceParams,
    window_sizes: Sequence[float],
    t_ints: Sequence[float],
    n_trials: int = 200,
    seed: SeedLike = 0,
    estimator: EstimatorMethod = EstimatorMethod.PHASE,
    f_mod: float = 1e3,
    dwell: float = 20e-6,
    line_shape: LineShape = LineShape.LORENTZIAN,
    workers: Optional[int] = None,
) -> Table:
    """Frequency std against window size and integration time.

    Every cell simulates n_trials traces with the line at the window center
    and receives its own spawned seed, so results do not depend on the
    number of workers.

    Returns
    -------
    Table
        One row per (window, t_int) cell with the empirical std, the
        shot-noise prediction and the lock fraction.
    """
    if n_trials < MIN_TRIALS:
        raise ConfigError(f"At least {MIN_TRIALS} trials are needed, got {n_trials}.")
    grid = list(product(window_sizes, t_ints))
    seeds = spawn_seeds(seed, len(grid))
    cells = [
        BenchCell(
            p=p,
            sweep=SweepConfig(f_c=p.f0, delta_f_win=window, f_mod=f_mod),
            t_int=t_int,
            n_trials=n_trials,
            seed=cell_seed,
            estimator=EstimatorMethod(str(estimator)),
            dwell=dwell,
            line_shape=line_shape,
        )
        for (window, t_int), cell_seed in zip(grid, seeds)
    ]
    logger.info("Running %d benchmark cells with %d trials each.", len(cells), n_trials)
    return _run_cells(cells, workers)


def run_alpha_sweep(
    p: ResonanceParams,
    alphas: Sequence[float],
    t_int: float = 10e-3,
    n_trials: int = 200,
    seed: SeedLike = 0,
    estimator: EstimatorMethod = EstimatorMethod.PHASE,
    f_mod: float = 1e3,
    dwell: float = 20e-6,
    line_shape: LineShape = LineShape.LORENTZIAN,
    workers: Optional[int] = None,
) -> Table:
    """Sensitivity eta against alpha with every closed-form curve alongside."""
    windows = [2 * p.gamma * alpha for alpha in alphas]
    table = run_sensitivity_sweep(
        p, windows, [t_int], n_trials, seed, estimator, f_mod, dwell, line_shape, workers
    )
    for method in SensitivityMethod:
        table[f"eta_{method}_hz_rt_s"] = sensitivity(method, p, np.asarray(table["alpha"]))
    table["eta_T_rt_s"] = GYROMAGNETIC.to_field(np.asarray(table["eta_hz_rt_s"]))
    return table


def slope_per_decade(table: Table) -> float:
    """Slope of log std against log t_int."""
    t_int = np.asarray(table["t_int_s"], dtype=float)
    if np.unique(t_int).size < 2:
        raise ConfigError("The slope needs at least two integration times.")
    return float(np.polyfit(np.log(t_int), np.log(np.asarray(table["std_hz"])), 1)[0])


def estimator_comparison(
    p: ResonanceParams,
    alpha: float,
    t_int: float = 10e-3,
    n_trials: int = 200,
    seed: SeedLike = 0,
    f_mod: float = 1e3,
    dwell: float = 20e-6,
    line_shape: LineShape = LineShape.LORENTZIAN,
    n_max: int = 3,
) -> dict:
    """Phase method against the harmonic least-squares on identical traces."""
    sweep = SweepConfig(f_c=p.f0, delta_f_win=2 * p.gamma * alpha, f_mod=f_mod)
    cell = BenchCell(
        p,
        sweep,
        t_int,
        n_trials,
        spawn_seeds(seed, 1)[0],
        dwell=dwell,
        line_shape=line_shape,
        n_max=n_max,
    )
    coefficients = _trial_harmonics(cell)
    f_phase, lock_phase = _estimates(cell, coefficients, EstimatorMethod.PHASE)
    f_lstsq, lock_lstsq = _estimates(cell, coefficients, EstimatorMethod.LSTSQ)
    std_phase = float(np.std(f_phase, ddof=1))
    std_lstsq = float(np.std(f_lstsq, ddof=1))
    return {
        "alpha": alpha,
        "t_int_s": t_int,
        "n_trials": n_trials,
        "std_phase_hz": std_phase,
        "std_lstsq_hz": std_lstsq,
        "ratio": std_lstsq / std_phase,
        "expected_ratio": float(lstsq_information_gain(alpha, n_max)),
        "bias_phase_hz": float(np.mean(f_phase) - sweep.f_c),
        "bias_lstsq_hz": float(np.mean(f_lstsq) - sweep.f_c),
        "lock_fraction_phase": float(np.mean(lock_phase)),
        "lock_fraction_lstsq": float(np.mean(lock_lstsq)),
    }
