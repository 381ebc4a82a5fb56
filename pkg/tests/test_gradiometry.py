from dataclasses import replace

import numpy as np
import pytest

from spectrum_demod.demod import demodulate
from spectrum_demod.estimators import estimate
from spectrum_demod.gradiometry import (
    GradientMethod,
    demodulate_sidebands,
    estimate_gradient,
    phase_depth_to_field,
)
from spectrum_demod.lineshape import GYROMAGNETIC
from spectrum_demod.simulator import GradiometryConfig, PhotonTrace, apply_gradient_modulation
from spectrum_demod.util import ConfigError, EstimateFlag, NoiseMode

TF_DWELL = 5e-6


def _gradient_trace(p, sweep, grad, line_shape, noise=NoiseMode.NONE, duration=10e-3, dwell=TF_DWELL):
    return apply_gradient_modulation(
        p, sweep, grad, duration=duration, dwell=dwell, noise=noise, seed=8, line_shape=line_shape
    )


def _estimate(trace, sweep, grad, method=GradientMethod.COHERENT, n_max=2):
    h = demodulate(trace, sweep.f_mod, n_max)
    s = demodulate_sidebands(trace, sweep.f_mod, grad.f_tf, n_max, h)
    return estimate_gradient(s, h, sweep, grad, method)


@pytest.mark.parametrize("method", list(GradientMethod))
def test_small_phase_depth(bright_params, sweep, periodic, method):
    grad = GradiometryConfig(delta_phi=0.02, x0=10e-9)
    trace = _gradient_trace(bright_params, sweep, grad, periodic)
    result = _estimate(trace, sweep, grad, method)
    assert result.delta_phi == pytest.approx(0.02, rel=1e-3)
    assert result.method == method
    assert not result.flags
    assert result.db_dx == pytest.approx(result.b1 / 10e-9)


def test_sidebands_follow_carrier(bright_params, sweep, periodic):
    grad = GradiometryConfig(delta_phi=0.02)
    trace = _gradient_trace(bright_params, sweep, grad, periodic)
    h = demodulate(trace, sweep.f_mod, 2)
    s = demodulate_sidebands(trace, sweep.f_mod, grad.f_tf, 2)
    for k in (1, 2):
        assert s[k] == pytest.approx(-0.5j * k * 0.02 * h.a[k], rel=1e-3)
        assert s[-k] == pytest.approx(0.5j * k * 0.02 * np.conj(h.a[k]), rel=1e-3)
    with pytest.raises(IndexError):
        s[3]


def test_large_phase_depth_needs_bessel_model(bright_params, sweep, periodic):
    grad = GradiometryConfig(delta_phi=0.4)
    trace = _gradient_trace(bright_params, sweep, grad, periodic)
    result = _estimate(trace, sweep, grad, GradientMethod.BESSEL)
    assert EstimateFlag.BEYOND_SMALL_ANGLE in result.flags
    assert result.delta_phi == pytest.approx(0.4, rel=1e-3)
    assert result.delta_phi_linear > result.delta_phi_bessel * 1.02


def test_gradient_in_tesla_per_metre(bright_params, sweep, periodic):
    grad = GradiometryConfig(x0=10e-9, db_dx=1e3)
    assert grad.phase_depth(sweep) == pytest.approx(GYROMAGNETIC.angular * 1e-5 / sweep.delta_f_win)
    trace = _gradient_trace(bright_params, sweep, grad, periodic)
    result = _estimate(trace, sweep, grad, GradientMethod.BESSEL)
    assert result.db_dx == pytest.approx(1e3, rel=1e-4)
    assert result.b1 == pytest.approx(1e-5, rel=1e-4)
    assert result.as_row()["method"] == "bessel"


def test_sign_of_gradient(bright_params, sweep, periodic):
    grad = GradiometryConfig(delta_phi=-0.02)
    trace = _gradient_trace(bright_params, sweep, grad, periodic)
    assert _estimate(trace, sweep, grad).delta_phi == pytest.approx(-0.02, rel=1e-3)
    assert _estimate(trace, sweep, grad, GradientMethod.MAGNITUDE).delta_phi == pytest.approx(
        0.02, rel=1e-3
    )


def test_phase_depth_to_field(sweep):
    assert phase_depth_to_field(0.02, sweep) == pytest.approx(0.02 * 30e6 / (2 * np.pi * 28e9))


def test_shot_noise_estimate(bright_params, sweep, periodic):
    grad = GradiometryConfig(delta_phi=0.1)
    trace = _gradient_trace(bright_params, sweep, grad, periodic, noise=NoiseMode.SHOT, duration=0.1)
    result = _estimate(trace, sweep, grad)
    assert 0 < result.d_delta_phi < 0.02
    assert result.delta_phi == pytest.approx(0.1, abs=5 * result.d_delta_phi)


def test_zero_amplitude_rejected(bright_params, sweep, periodic):
    grad = GradiometryConfig(delta_phi=0.02)
    trace = _gradient_trace(bright_params, sweep, grad, periodic)
    with pytest.raises(ConfigError):
        _estimate(trace, sweep, replace(grad, x0=0.0))


def test_unavailable_orders_rejected(bright_params, sweep, periodic):
    grad = GradiometryConfig(delta_phi=0.02)
    trace = _gradient_trace(bright_params, sweep, grad, periodic)
    h = demodulate(trace, sweep.f_mod, 2)
    s = demodulate_sidebands(trace, sweep.f_mod, grad.f_tf, 2, h)
    with pytest.raises(ConfigError):
        estimate_gradient(s, h, sweep, grad, orders=(1, 3))


def test_incommensurate_oscillation_rejected(bright_params, sweep, periodic):
    trace = _gradient_trace(bright_params, sweep, GradiometryConfig(delta_phi=0.02), periodic)
    with pytest.raises(ConfigError):
        demodulate_sidebands(trace, sweep.f_mod, 32.45e3, 2)


def test_sideband_beyond_nyquist_rejected(bright_params, sweep, periodic):
    grad = GradiometryConfig(delta_phi=0.02)
    trace = _gradient_trace(bright_params, sweep, grad, periodic, dwell=20e-6)
    with pytest.raises(ConfigError):
        demodulate_sidebands(trace, sweep.f_mod, grad.f_tf, 2)


def test_unlocked_carrier_gives_nan(sweep):
    trace = PhotonTrace(dwell=TF_DWELL, counts=np.full(2000, 3))
    result = _estimate(trace, sweep, GradiometryConfig())
    assert np.isnan(result.db_dx)
    assert result.flags == {EstimateFlag.NO_LOCK}


@pytest.mark.parametrize("delta_phi", [0.01, 0.05, 0.1, 0.2])
def test_phase_depth_recovered_across_range(bright_params, sweep, periodic, delta_phi):
    grad = GradiometryConfig(delta_phi=delta_phi)
    trace = _gradient_trace(bright_params, sweep, grad, periodic)
    assert _estimate(trace, sweep, grad).delta_phi == pytest.approx(delta_phi, rel=0.02)


def test_gradient_leaves_carrier_estimate_unchanged(bright_params, sweep):
    grad = GradiometryConfig(delta_phi=0.05)
    trace = _gradient_trace(
        bright_params.shifted(2e6), sweep, grad, "lorentzian", noise=NoiseMode.SHOT
    )
    h = demodulate(trace, sweep.f_mod, 2)
    coefficients = h.a.copy()
    carrier = estimate(h, sweep, gamma_true=bright_params.gamma)
    s = demodulate_sidebands(trace, sweep.f_mod, grad.f_tf, 2, h)
    estimate_gradient(s, h, sweep, grad)
    np.testing.assert_array_equal(h.a, coefficients)
    again = estimate(demodulate(trace, sweep.f_mod, 2), sweep, gamma_true=bright_params.gamma)
    assert again.f0_hat == carrier.f0_hat
    assert again.df0 == carrier.df0
