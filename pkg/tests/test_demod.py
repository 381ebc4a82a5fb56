import numpy as np
import pytest

from spectrum_demod.demod import (
    EstimateRecord,
    HarmonicSet,
    check_period_grid,
    demodulate,
    demodulate_counts,
    demodulate_segments,
    estimate_params,
    estimate_uncertainty,
    harmonic_phase_estimates,
    is_locked,
    joint_offset,
    lock_mask,
    offset_from_phase,
    phase_to_frequency,
    reference_correction,
    truncated_harmonics,
    truncated_offset,
)
from spectrum_demod.lineshape import LineShape
from spectrum_demod.simulator import PhotonTrace, SweepConfig, synthesize_batch, synthesize_trace
from spectrum_demod.theory import SensitivityMethod, analytic_harmonics, sensitivity
from spectrum_demod.util import (
    ConfigError,
    EstimateFlag,
    NoiseMode,
    NumericalError,
    flags_from_str,
    wrap_phase,
)


def _noiseless(params, sweep, line_shape, offset=0.0, duration=10e-3):
    return synthesize_trace(
        params.shifted(offset), sweep, duration=duration, noise=NoiseMode.NONE, line_shape=line_shape
    )


def test_reference_correction():
    np.testing.assert_array_equal(reference_correction([0, 1, 2, 3]), [1.0, 1.0, -1.0, 1.0])


@pytest.mark.parametrize("offset", [0.0, 4e6, -6.5e6])
def test_periodic_line_matches_closed_form(params, sweep, periodic, offset):
    h = demodulate(_noiseless(params, sweep, periodic, offset), sweep.f_mod, 3)
    expected = analytic_harmonics(params.shifted(offset), sweep, 3)
    np.testing.assert_allclose(h.a, expected.a, rtol=1e-6, atol=1e-6 * params.r0)


def test_centered_line_has_zero_phase(params, sweep):
    h = demodulate(_noiseless(params, sweep, "lorentzian"), sweep.f_mod, 3)
    assert np.abs(np.angle(h.a[1:])).max() < 1e-8
    assert np.all(h.a[1:].real > 0)
    assert h.a0 == pytest.approx(np.mean(_noiseless(params, sweep, "lorentzian").rates))


@pytest.mark.parametrize("offset", [0.0, 2.5e6, -11e6])
def test_phase_to_frequency_recovers_offset(params, sweep, periodic, offset):
    h = demodulate(_noiseless(params, sweep, periodic, offset), sweep.f_mod, 3)
    record = phase_to_frequency(h, sweep, line_shape=periodic)
    assert record.f0_hat == pytest.approx(offset, abs=1e-6 * sweep.delta_f_win)
    assert record.locked
    assert record.phi == pytest.approx(2 * np.pi * offset / sweep.delta_f_win, abs=1e-6)


def test_phase_follows_window_center(params, sweep, periodic):
    moved = sweep.recentered(2.87e9)
    trace = synthesize_trace(
        params.shifted(2.87e9 + 3e6), moved, noise=NoiseMode.NONE, line_shape=periodic, t0=0.25
    )
    record = phase_to_frequency(demodulate(trace, moved.f_mod), moved, line_shape=periodic)
    assert record.f0_hat == pytest.approx(2.87e9 + 3e6, abs=30.0)


def test_estimate_params_is_exact_for_periodic_line(params, sweep, periodic):
    h = demodulate(_noiseless(params, sweep, periodic, 1e6), sweep.f_mod, 3)
    record = estimate_params(h, sweep, gamma_true=params.gamma, line_shape=periodic)
    assert record.gamma_hat == pytest.approx(params.gamma, rel=1e-6)
    assert record.r0_hat == pytest.approx(params.r0, rel=1e-6)
    assert record.epsilon_hat == pytest.approx(params.epsilon, rel=1e-6)
    assert record.epsilon_hat_true_gamma == pytest.approx(params.epsilon, rel=1e-6)
    uncorrected = estimate_params(h, sweep, exact_dc=False)
    assert uncorrected.r0_hat == pytest.approx(h.a0)


def test_estimate_params_needs_second_harmonic(params, sweep, periodic):
    h = demodulate(_noiseless(params, sweep, periodic), sweep.f_mod, 1)
    with pytest.raises(ConfigError):
        estimate_params(h, sweep)


def test_estimate_params_flags_flat_harmonics(sweep):
    h = HarmonicSet(a=[5e5, 100.0, 200.0, 50.0], t_int=10e-3, f_mod=1e3)
    record = estimate_params(h, sweep)
    assert EstimateFlag.ILL_CONDITIONED in record.flags
    assert record.r0_hat == pytest.approx(5e5)


def test_harmonic_phase_estimates_agree(params, sweep, periodic):
    h = demodulate(_noiseless(params, sweep, periodic, 5e6), sweep.f_mod, 3)
    np.testing.assert_allclose(harmonic_phase_estimates(h, sweep), 5e6, atol=1e-3 * sweep.delta_f_win)


WINDOW_FRACTIONS = [-0.4, -0.3, -0.2, -0.1, 0.1, 0.2, 0.3, 0.4]


@pytest.mark.parametrize("fraction", WINDOW_FRACTIONS)
def test_truncated_line_round_trip(bright_params, sweep, fraction):
    offset = fraction * sweep.delta_f_win
    h = demodulate(_noiseless(bright_params, sweep, LineShape.LORENTZIAN, offset), sweep.f_mod, 3)
    known = phase_to_frequency(h, sweep, gamma_true=bright_params.gamma)
    joint = phase_to_frequency(h, sweep)
    assert known.locked and joint.locked
    assert abs(known.f0_hat - offset) <= 0.01 * sweep.delta_f_win
    assert abs(joint.f0_hat - offset) <= 0.01 * sweep.delta_f_win
    assert known.phi == pytest.approx(np.angle(h.a[1]))


def test_linear_map_is_biased_on_truncated_line(bright_params, sweep):
    offset = 0.4 * sweep.delta_f_win
    h = demodulate(_noiseless(bright_params, sweep, LineShape.LORENTZIAN, offset), sweep.f_mod, 3)
    linear = phase_to_frequency(h, sweep, line_shape=LineShape.PERIODIC_LORENTZIAN)
    bias = (offset - linear.f0_hat) / sweep.delta_f_win
    assert bias == pytest.approx(0.068, abs=0.003)


@pytest.mark.parametrize("alpha", [2.0, 3.0])
def test_truncated_harmonics_match_trace(bright_params, alpha):
    sweep = SweepConfig(f_c=0.0, delta_f_win=2 * alpha * bright_params.gamma, f_mod=1e3)
    u = 0.2
    trace = _noiseless(bright_params, sweep, LineShape.LORENTZIAN, u * sweep.delta_f_win)
    h = demodulate(trace, sweep.f_mod, 3)
    expected = bright_params.epsilon * bright_params.r0 * truncated_harmonics(u, alpha, [1, 2, 3])
    np.testing.assert_allclose(h.a[1:], expected, atol=1e-3 * abs(expected[0]))


def test_truncated_offset_clips_at_window_edges():
    assert truncated_offset(0.0, 3.0) == pytest.approx(0.0, abs=1e-12)
    assert truncated_offset(3.0, 3.0) == pytest.approx(0.5)
    assert truncated_offset(-3.0, 3.0) == pytest.approx(-0.5)
    phases = np.linspace(-2.0, 2.0, 9)
    assert np.all(np.diff(truncated_offset(phases, 3.0)) > 0)


def test_offset_from_phase_is_linear_off_the_truncated_line(sweep, periodic):
    phases = np.array([-1.0, 0.5, 2.0])
    for line_shape in (periodic, LineShape.GAUSSIAN):
        np.testing.assert_allclose(
            offset_from_phase(phases, sweep, line_shape, 5e6), phases * 30e6 / (2 * np.pi)
        )


@pytest.mark.parametrize("a1_abs, a2_abs", [(1.0, 0.0), (1.0, 2.0)])
def test_joint_offset_without_crossing_keeps_linear_map(sweep, a1_abs, a2_abs):
    assert joint_offset(1.0, a1_abs, a2_abs, sweep) == pytest.approx(30e6 / (2 * np.pi))


@pytest.mark.parametrize("alpha", [2.0, 3.0, 4.0, 8.0])
@pytest.mark.parametrize("fraction", [0.0, 0.1, -0.3])
def test_periodic_harmonics_decay_and_rotate(params, periodic, alpha, fraction):
    sweep = SweepConfig(f_c=0.0, delta_f_win=2 * alpha * params.gamma, f_mod=1e3)
    h = demodulate(
        _noiseless(params, sweep, periodic, fraction * sweep.delta_f_win), sweep.f_mod, 2
    )
    assert abs(h.a[2]) / abs(h.a[1]) == pytest.approx(np.exp(-np.pi / alpha), rel=1e-4)
    assert abs(wrap_phase(np.angle(h.a[2]) - 2 * np.angle(h.a[1]))) < 1e-4


@pytest.mark.parametrize("alpha", [6.0, 8.0])
@pytest.mark.parametrize("fraction", [0.0, 0.1, -0.1])
def test_truncated_harmonics_decay_and_rotate_for_wide_windows(params, alpha, fraction):
    sweep = SweepConfig(f_c=0.0, delta_f_win=2 * alpha * params.gamma, f_mod=1e3)
    h = demodulate(
        _noiseless(params, sweep, LineShape.LORENTZIAN, fraction * sweep.delta_f_win),
        sweep.f_mod,
        2,
    )
    assert abs(h.a[2]) / abs(h.a[1]) == pytest.approx(np.exp(-np.pi / alpha), rel=0.05)
    assert abs(wrap_phase(np.angle(h.a[2]) - 2 * np.angle(h.a[1]))) < 0.02


def test_truncated_decay_is_steeper_for_narrow_windows(params, sweep):
    h = demodulate(_noiseless(params, sweep, LineShape.LORENTZIAN), sweep.f_mod, 2)
    ratio = abs(h.a[2]) / abs(h.a[1]) / np.exp(-np.pi / 3)
    assert ratio == pytest.approx(0.886, abs=0.005)


def test_uncertainty_matches_sensitivity(params, sweep):
    h = analytic_harmonics(params, sweep, 2, t_int=0.1)
    eta = sensitivity(SensitivityMethod.DEMOD_PHASE, params, sweep.alpha(params))
    expected = eta * np.sqrt(h.a0 / params.r0) / np.sqrt(0.1)
    assert estimate_uncertainty(h, sweep) == pytest.approx(expected, rel=1e-9)
    assert estimate_uncertainty(h, sweep, t_int=0.4) == pytest.approx(expected / 2, rel=1e-9)


def test_dark_segment_has_no_uncertainty(sweep):
    assert estimate_uncertainty(HarmonicSet(a=[0.0, 1.0], t_int=1e-2, f_mod=1e3), sweep) == np.inf
    assert not is_locked(HarmonicSet(a=[0.0, 1.0], t_int=1e-2, f_mod=1e3))


def test_dark_trace_is_flagged_not_raised(sweep):
    h = demodulate(PhotonTrace(20e-6, np.zeros(500)), sweep.f_mod, 3)
    record = phase_to_frequency(h, sweep)
    assert record.flags == {EstimateFlag.NO_LOCK}
    assert record.df0 == np.inf
    assert record.f0_hat == sweep.f_c

    params_record = estimate_params(h, sweep)
    assert params_record.flags == {EstimateFlag.NO_LOCK, EstimateFlag.ILL_CONDITIONED}
    assert params_record.df0 == np.inf
    assert params_record.r0_hat == 0.0


def test_flat_trace_is_not_locked(sweep):
    trace = PhotonTrace(dwell=20e-6, counts=np.full(500, 10))
    h = demodulate(trace, sweep.f_mod, 3)
    assert not is_locked(h)
    record = phase_to_frequency(h, sweep)
    assert not record.locked
    assert flags_from_str(record.as_row()["flags"]) == {EstimateFlag.NO_LOCK}


def test_noise_floor(sweep):
    h = HarmonicSet(a=[5e5, 1e4], t_int=10e-3, f_mod=1e3)
    assert h.noise_floor == pytest.approx(np.sqrt(5e5 / 0.02))
    assert is_locked(h)
    assert not is_locked(h, no_lock_sigma=3 * 1e4 / h.noise_floor)


@pytest.mark.parametrize(
    "n_bins, dwell, n_max",
    [
        (525, 20e-6, 3),  # 10.5 periods
        (500, 20e-6, 30),  # beyond the bin Nyquist rate
        (500, 20e-6, -1),
    ],
)
def test_period_grid_rejects(n_bins, dwell, n_max):
    with pytest.raises(ConfigError):
        check_period_grid(n_bins, dwell, 1e3, n_max)


def test_demodulate_rejects_partial_periods(sweep):
    with pytest.raises(ConfigError):
        demodulate(PhotonTrace(dwell=20e-6, counts=np.ones(525)), sweep.f_mod)


def test_demodulate_rejects_non_finite_counts(sweep):
    counts = np.ones(500)
    counts[7] = np.nan
    with pytest.raises(NumericalError):
        demodulate_counts(counts, 20e-6, sweep.f_mod)


def test_batch_demodulation_matches_single(params, sweep, periodic, rng):
    counts = synthesize_batch(params, sweep, [0.0, 3e6], rng=rng, line_shape=periodic)
    batch = demodulate_counts(counts, 20e-6, sweep.f_mod, 3)
    assert batch.shape == (2, 4)
    single = demodulate(PhotonTrace(dwell=20e-6, counts=counts[1]), sweep.f_mod, 3)
    np.testing.assert_allclose(batch[1], single.a)


def test_segments(params, sweep, periodic):
    trace = _noiseless(params, sweep, periodic, 2e6, duration=50e-3)
    harmonics = demodulate_segments(trace, sweep.f_mod, 3, t_int=10e-3)
    assert len(harmonics) == 5
    assert harmonics[2].t0 == pytest.approx(20e-3)
    for h in harmonics:
        record = phase_to_frequency(h, sweep, line_shape=periodic)
        assert record.f0_hat == pytest.approx(2e6, abs=30.0)
    assert len(demodulate_segments(trace, sweep.f_mod, 3)) == 1


def test_record_flags_are_additive():
    record = EstimateRecord(f0_hat=1.0, flags=frozenset({EstimateFlag.NO_LOCK}))
    flagged = record.with_flags(EstimateFlag.PERIODS_TRUNCATED)
    assert flagged.flags == {EstimateFlag.NO_LOCK, EstimateFlag.PERIODS_TRUNCATED}
    assert record.flags == {EstimateFlag.NO_LOCK}
    assert flagged.as_row()["flags"] == "no_lock|periods_truncated"


@pytest.mark.slow
def test_phase_estimate_unbiased_with_predicted_spread(bright_params, sweep, periodic):
    counts = synthesize_batch(
        bright_params, sweep, np.zeros(400), rng=np.random.default_rng(11), line_shape=periodic
    )
    a = demodulate_counts(counts, 20e-6, sweep.f_mod, 1)
    f0 = np.angle(a[:, 1]) * sweep.delta_f_win / (2 * np.pi)
    predicted = estimate_uncertainty(analytic_harmonics(bright_params, sweep, 1, t_int=10e-3), sweep)
    assert np.std(f0, ddof=1) == pytest.approx(predicted, rel=0.12)
    assert abs(np.mean(f0)) < 4 * predicted / np.sqrt(400)


@pytest.mark.slow
def test_quadratures_carry_equal_shot_noise(params, sweep, periodic):
    counts = synthesize_batch(
        params, sweep, np.zeros(400), rng=np.random.default_rng(17), line_shape=periodic
    )
    a = demodulate_counts(counts, 20e-6, sweep.f_mod, 1)
    expected = np.mean(a[:, 0].real) / (2 * 10e-3)
    assert np.var(a[:, 1].real, ddof=1) == pytest.approx(expected, rel=0.2)
    assert np.var(a[:, 1].imag, ddof=1) == pytest.approx(expected, rel=0.2)


@pytest.mark.slow
def test_line_outside_window_is_not_locked(params, sweep):
    counts = synthesize_batch(
        params, sweep, np.full(500, 0.8 * sweep.delta_f_win), rng=np.random.default_rng(23)
    )
    locked = lock_mask(demodulate_counts(counts, 20e-6, sweep.f_mod, 1), 10e-3)
    assert np.mean(~locked) >= 0.95


def test_lock_mask_matches_is_locked(params, sweep, rng):
    counts = synthesize_batch(params, sweep, np.zeros(50), rng=rng)
    coefficients = demodulate_counts(counts, 20e-6, sweep.f_mod, 2)
    expected = [is_locked(HarmonicSet(a, 10e-3, sweep.f_mod)) for a in coefficients]
    np.testing.assert_array_equal(lock_mask(coefficients, 10e-3), expected)
