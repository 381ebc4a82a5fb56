import numpy as np
import pytest

from spectrum_demod.demod import EstimateRecord, HarmonicSet, demodulate, demodulate_counts
from spectrum_demod.estimators import (
    CoefficientModel,
    ModelParams,
    estimate,
    fit_harmonics,
    harmonic_lstsq,
    residual_and_jacobian,
)
from spectrum_demod.lineshape import ResonanceParams
from spectrum_demod.simulator import PhotonTrace, SweepConfig, synthesize_batch, synthesize_trace
from spectrum_demod.theory import analytic_harmonics, lstsq_information_gain
from spectrum_demod.util import ConfigError, EstimateFlag, EstimatorMethod, NoiseMode


def test_model_matches_closed_form(params, sweep):
    model = CoefficientModel(sweep, 3)
    p = params.shifted(4e6)
    a = model.coefficients(ModelParams(p.f0, p.epsilon, p.gamma, p.r0))
    np.testing.assert_allclose(a, analytic_harmonics(p, sweep, 3).a)


def test_jacobian_matches_finite_differences(params, sweep):
    model = CoefficientModel(sweep, 3)
    x = np.array([0.7, params.epsilon, params.gamma, params.r0])
    steps = [1e-6, 1e-7, 1.0, 1.0]
    jac = model.jacobian_phase(*x)
    for k, step in enumerate(steps):
        dx = np.zeros(4)
        dx[k] = step
        numeric = (model.coefficients_phase(*(x + dx)) - model.coefficients_phase(*(x - dx))) / (
            2 * step
        )
        np.testing.assert_allclose(jac[:, k], numeric, rtol=1e-5, atol=1e-6 * np.abs(numeric).max())


def test_residual_vanishes_at_truth(params, sweep):
    h = analytic_harmonics(params.shifted(2e6), sweep, 3)
    res, jac = residual_and_jacobian(ModelParams(2e6, params.epsilon, params.gamma, params.r0), h, sweep)
    assert res.shape == (8,)
    assert jac.shape == (8, 4)
    assert np.abs(res).max() < 1e-8 * params.r0


def test_fit_recovers_parameters(params, sweep):
    h = analytic_harmonics(params.shifted(3e6), sweep, 3, t_int=10e-3)
    init = EstimateRecord(
        f0_hat=3.2e6,
        phi=2 * np.pi * 3.2e6 / sweep.delta_f_win,
        gamma_hat=5.3e6,
        epsilon_hat=0.14,
        r0_hat=5.1e5,
    )
    record = harmonic_lstsq(h, sweep, init)
    assert record.method == EstimatorMethod.LSTSQ
    assert not record.flags
    assert record.f0_hat == pytest.approx(3e6, abs=1.0)
    assert record.gamma_hat == pytest.approx(params.gamma, rel=1e-6)
    assert record.epsilon_hat == pytest.approx(params.epsilon, rel=1e-6)
    assert record.r0_hat == pytest.approx(params.r0, rel=1e-6)
    assert np.isfinite([record.df0, record.dgamma, record.depsilon, record.dr0]).all()


def test_fit_cost_never_increases(params, sweep):
    h = analytic_harmonics(params.shifted(-5e6), sweep, 3, t_int=10e-3)
    fit = fit_harmonics(h, sweep, [-0.9, 0.1, 6e6, 4.9e5])
    assert fit.converged
    assert np.all(np.diff(fit.cost_history) <= 0)
    assert fit.cost_history[-1] < 1e-12 * fit.cost_history[0]


def test_unlocked_init_is_passed_through(sweep):
    h = HarmonicSet(a=[5e5, 10.0, 5.0, 1.0], t_int=10e-3, f_mod=1e3)
    init = EstimateRecord(f0_hat=1e6, flags=frozenset({EstimateFlag.NO_LOCK}))
    record = harmonic_lstsq(h, sweep, init)
    assert record.f0_hat == 1e6
    assert record.method == EstimatorMethod.LSTSQ
    assert not record.locked


def test_lstsq_needs_second_harmonic(params, sweep):
    h = analytic_harmonics(params, sweep, 1)
    with pytest.raises(ConfigError):
        harmonic_lstsq(h, sweep)
    with pytest.raises(ConfigError):
        estimate(h, sweep, "lstsq")
    assert estimate(h, sweep, "phase").method == EstimatorMethod.PHASE


@pytest.mark.parametrize("method", ["phase", "lstsq"])
def test_estimate_dispatch(bright_params, sweep, periodic, method):
    trace = synthesize_trace(bright_params.shifted(1.5e6), sweep, seed=4, line_shape=periodic)
    record = estimate(demodulate(trace, sweep.f_mod, 3), sweep, method, line_shape=periodic)
    assert record.method == EstimatorMethod(method)
    assert record.locked
    assert record.f0_hat == pytest.approx(1.5e6, abs=5 * record.df0)


def test_estimate_reports_true_gamma_contrast(params, sweep, periodic):
    trace = synthesize_trace(params, sweep, noise=NoiseMode.NONE, line_shape=periodic)
    record = estimate(
        demodulate(trace, sweep.f_mod, 3), sweep, gamma_true=params.gamma, line_shape=periodic
    )
    assert record.epsilon_hat_true_gamma == pytest.approx(params.epsilon, rel=1e-6)


@pytest.mark.slow
def test_lstsq_beats_phase_by_information_gain(periodic):
    p = ResonanceParams(f0=0.0, gamma=5e6, epsilon=0.15, r0=5e6)
    sweep = SweepConfig(f_c=0.0, delta_f_win=60e6, f_mod=1e3)
    counts = synthesize_batch(
        p, sweep, np.zeros(300), duration=0.1, rng=np.random.default_rng(5), line_shape=periodic
    )
    coefficients = demodulate_counts(counts, 20e-6, sweep.f_mod, 3)
    phase, lstsq = [], []
    for a in coefficients:
        h = HarmonicSet(a=a, t_int=0.1, f_mod=sweep.f_mod)
        phase.append(estimate(h, sweep, "phase", line_shape=periodic).f0_hat)
        lstsq.append(estimate(h, sweep, "lstsq").f0_hat)
    ratio = np.std(lstsq) / np.std(phase)
    assert ratio == pytest.approx(lstsq_information_gain(6.0, 3), rel=0.15)


@pytest.mark.parametrize("method", ["phase", "lstsq"])
def test_dark_trace_gives_no_lock_record(sweep, method):
    h = demodulate(PhotonTrace(20e-6, np.zeros(500)), sweep.f_mod, 3)
    record = estimate(h, sweep, method)
    assert record.method == EstimatorMethod(method)
    assert not record.locked
    assert record.df0 == np.inf


@pytest.mark.slow
def test_lstsq_matches_phase_for_narrow_windows(periodic):
    p = ResonanceParams(f0=0.0, gamma=5e6, epsilon=0.15, r0=5e6)
    sweep = SweepConfig(f_c=0.0, delta_f_win=15e6, f_mod=1e3)
    counts = synthesize_batch(
        p, sweep, np.zeros(400), duration=0.1, rng=np.random.default_rng(6), line_shape=periodic
    )
    coefficients = demodulate_counts(counts, 20e-6, sweep.f_mod, 3)
    phase, lstsq = [], []
    for a in coefficients:
        h = HarmonicSet(a=a, t_int=0.1, f_mod=sweep.f_mod)
        phase.append(estimate(h, sweep, "phase", line_shape=periodic).f0_hat)
        lstsq.append(estimate(h, sweep, "lstsq").f0_hat)
    assert np.std(lstsq) / np.std(phase) == pytest.approx(1.0, abs=0.1)
