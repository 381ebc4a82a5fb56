"""Least-squares fit of the analytic harmonic model to measured coefficients.

All a_j share the same complex Gaussian noise, so the maximum-likelihood
estimate minimizes sum_j |a~_j - a_j|^2 with real and imaginary parts stacked
as separate residuals. The solver is a damped Gauss-Newton (Levenberg-Marquardt)
iteration over (phi, eps, gamma, R0), with phi = 2 pi (f0 - f_c) / dfw.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .demod import (
    NO_LOCK_SIGMA,
    EstimateRecord,
    HarmonicSet,
    estimate_params,
    phase_to_frequency,
)
from .lineshape import LineShape
from .simulator import SweepConfig
from .util import ConfigError, EstimateFlag, EstimatorMethod, wrap_phase

logger = logging.getLogger(__name__)

DEFAULT_N_MAX = 3
MAX_ITERATIONS = 50
STEP_TOLERANCE = 1e-9


class ModelParams(NamedTuple):
    f0: float
    epsilon: float
    gamma: float
    r0: float


@dataclass(frozen=True)
class CoefficientModel:
    """Expected coefficients a~_j(f0, eps, gamma, R0) for j = 0 ... n_max.

    a~_0 = R0 - pi R0 eps gamma / dfw (the exact DC term) and
    a~_j = (pi R0 eps gamma / dfw) e^(-2 pi j gamma / dfw) e^(i j phi).
    """

    sweep: SweepConfig
    n_max: int = DEFAULT_N_MAX

    @property
    def orders(self) -> np.ndarray:
        return np.arange(self.n_max + 1)

    def phase(self, f0: float) -> float:
        return 2 * np.pi * (f0 - self.sweep.f_c) / self.sweep.delta_f_win

    def _basis(self, phi: float, gamma: float) -> np.ndarray:
        """e^(-2 pi j gamma / dfw) e^(i j phi)."""
        j = self.orders
        return np.exp(-2 * np.pi * j * gamma / self.sweep.delta_f_win + 1j * j * phi)

    def coefficients_phase(self, phi: float, epsilon: float, gamma: float, r0: float):
        scale = np.pi * r0 * epsilon * gamma / self.sweep.delta_f_win
        a = scale * self._basis(phi, gamma)
        a[0] = r0 - scale
        return a

    def coefficients(self, params: ModelParams) -> np.ndarray:
        f0, epsilon, gamma, r0 = params
        return self.coefficients_phase(self.phase(f0), epsilon, gamma, r0)

    def jacobian_phase(self, phi: float, epsilon: float, gamma: float, r0: float):
        """Complex derivatives of a~_j with respect to (phi, eps, gamma, R0)."""
        dfw = self.sweep.delta_f_win
        j = self.orders
        basis = self._basis(phi, gamma)
        scale = np.pi * r0 * epsilon * gamma / dfw
        jac = np.empty((j.size, 4), dtype=complex)
        jac[:, 0] = 1j * j * scale * basis
        jac[:, 1] = np.pi * r0 * gamma / dfw * basis
        jac[:, 2] = np.pi * r0 * epsilon / dfw * basis - scale * 2 * np.pi * j / dfw * basis
        jac[:, 3] = np.pi * epsilon * gamma / dfw * basis
        # the DC term has the opposite sign of the dip and the bare R0
        jac[0, :] = [
            0.0,
            -np.pi * r0 * gamma / dfw,
            -np.pi * r0 * epsilon / dfw,
            1 - np.pi * epsilon * gamma / dfw,
        ]
        return jac

    def jacobian(self, params: ModelParams) -> np.ndarray:
        """Complex derivatives with respect to (f0, eps, gamma, R0)."""
        f0, epsilon, gamma, r0 = params
        jac = self.jacobian_phase(self.phase(f0), epsilon, gamma, r0)
        jac[:, 0] *= 2 * np.pi / self.sweep.delta_f_win
        return jac


def _stack(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag], axis=0)


def _check_params(epsilon: float, gamma: float, r0: float) -> bool:
    return 0 < epsilon < 1 and gamma > 0 and r0 > 0


def residual_and_jacobian(
    params: ModelParams, h: HarmonicSet, sweep: SweepConfig, n_max: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Stacked real/imaginary residuals a~_j - a_j and their real Jacobian.

    Returns
    -------
    (ndarray, ndarray)
        Residuals of length 2 (n_max + 1) and the Jacobian of shape
        (2 (n_max + 1), 4) with respect to (f0, eps, gamma, R0).
    """
    n_max = h.n_max if n_max is None else n_max
    model = CoefficientModel(sweep, n_max)
    residual = model.coefficients(ModelParams(*params)) - h.a[: n_max + 1]
    return _stack(residual), _stack(model.jacobian(ModelParams(*params)))


@dataclass
class HarmonicFit:
    """Outcome of the damped Gauss-Newton iteration."""

    x: np.ndarray
    "Solution (phi, eps, gamma, R0)"

    converged: bool
    n_iter: int
    cost_history: List[float] = field(default_factory=list)
    "Objective after every accepted step, starting with the initial point"

    jacobian: Optional[np.ndarray] = None
    singular: bool = False


def fit_harmonics(
    h: HarmonicSet,
    sweep: SweepConfig,
    x0,
    n_max: int = DEFAULT_N_MAX,
    max_iter: int = MAX_ITERATIONS,
    xtol: float = STEP_TOLERANCE,
) -> HarmonicFit:
    """Levenberg-Marquardt iteration from x0 = (phi, eps, gamma, R0)."""
    model = CoefficientModel(sweep, n_max)
    data = h.a[: n_max + 1]

    def evaluate(x):
        res = _stack(model.coefficients_phase(*x) - data)
        return res, _stack(model.jacobian_phase(*x))

    x = np.asarray(x0, dtype=float)
    scale = np.maximum(np.abs(x), [1.0, 1e-3, 1e-3 * sweep.delta_f_win, 1.0])
    res, jac = evaluate(x)
    cost = 0.5 * res @ res
    history = [cost]
    damping = 1e-3
    for n_iter in range(1, max_iter + 1):
        hessian = jac.T @ jac
        gradient = jac.T @ res
        diag = np.diag(np.diag(hessian))
        try:
            step = np.linalg.solve(hessian + damping * diag, -gradient)
        except np.linalg.LinAlgError:
            logger.debug("Singular normal equations at iteration %d.", n_iter)
            return HarmonicFit(x, False, n_iter, history, jac, singular=True)
        if not np.all(np.isfinite(step)):
            return HarmonicFit(x, False, n_iter, history, jac, singular=True)
        candidate = x + step
        if _check_params(*candidate[1:]):
            new_res, new_jac = evaluate(candidate)
            new_cost = 0.5 * new_res @ new_res
            if new_cost <= cost:
                x, res, jac, cost = candidate, new_res, new_jac, new_cost
                history.append(cost)
                damping = max(damping / 10, 1e-15)
                if np.all(np.abs(step) <= xtol * scale):
                    return HarmonicFit(x, True, n_iter, history, jac)
                continue
        damping *= 10
        if damping > 1e12:
            # no step decreases the objective: x is a minimum to working precision
            return HarmonicFit(x, True, n_iter, history, jac)
    return HarmonicFit(x, False, max_iter, history, jac)


def _initial_guess(h: HarmonicSet, sweep: SweepConfig, init: EstimateRecord) -> np.ndarray:
    phi = init.phi if np.isfinite(init.phi) else float(np.angle(h.a[1]))
    gamma, epsilon, r0 = init.gamma_hat, init.epsilon_hat, init.r0_hat
    if not _check_params(epsilon, gamma, r0):
        guess = estimate_params(h, sweep) if h.n_max >= 2 else init
        gamma, epsilon, r0 = guess.gamma_hat, guess.epsilon_hat, guess.r0_hat
    if not _check_params(epsilon, gamma, r0):
        # fall back to a window three half-linewidths wide on each side
        gamma = sweep.delta_f_win / 6
        r0 = h.a0
        alpha = 3.0
        epsilon = 2 * alpha / np.pi * np.exp(np.pi / alpha) * abs(h.a[1]) / r0
        epsilon = float(np.clip(epsilon, 1e-3, 0.9))
    return np.array([phi, epsilon, gamma, r0])


def harmonic_lstsq(
    h: HarmonicSet,
    sweep: SweepConfig,
    init: Optional[EstimateRecord] = None,
    n_max: int = DEFAULT_N_MAX,
    max_iter: int = MAX_ITERATIONS,
    xtol: float = STEP_TOLERANCE,
) -> EstimateRecord:
    """Fit (f0, eps, gamma, R0) to a_0 ... a_n_max, warm-started from `init`.

    A no-lock `init` is returned unchanged (with the method tag of this
    estimator). If the iteration does not converge or the normal equations
    are singular the initial estimate is returned with a flag.
    """
    n_max = min(n_max, h.n_max)
    if n_max < 2:
        raise ConfigError("The harmonic least-squares needs harmonics up to n >= 2.")
    if init is None:
        init = estimate_params(h, sweep)
    if not init.locked:
        return replace(init, method=EstimatorMethod.LSTSQ)
    x0 = _initial_guess(h, sweep, init)
    fit = fit_harmonics(h, sweep, x0, n_max, max_iter, xtol)
    if fit.singular or not fit.converged:
        flag = EstimateFlag.SINGULAR if fit.singular else EstimateFlag.NOT_CONVERGED
        logger.warning("Harmonic least-squares fell back to the initial estimate (%s).", flag)
        return replace(init, method=EstimatorMethod.LSTSQ).with_flags(flag)

    phi, epsilon, gamma, r0 = fit.x
    sigma2 = h.noise_floor**2
    try:
        covariance = sigma2 * np.linalg.inv(fit.jacobian.T @ fit.jacobian)
    except np.linalg.LinAlgError:
        covariance = sigma2 * np.linalg.pinv(fit.jacobian.T @ fit.jacobian)
    errors = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    to_hz = sweep.delta_f_win / (2 * np.pi)
    phi = float(wrap_phase(phi))
    return EstimateRecord(
        f0_hat=sweep.f_c + phi * to_hz,
        df0=float(errors[0] * to_hz),
        gamma_hat=float(gamma),
        dgamma=float(errors[2]),
        epsilon_hat=float(epsilon),
        depsilon=float(errors[1]),
        r0_hat=float(r0),
        dr0=float(errors[3]),
        phi=phi,
        method=EstimatorMethod.LSTSQ,
        flags=init.flags,
    )


def estimate(
    h: HarmonicSet,
    sweep: SweepConfig,
    method: EstimatorMethod = EstimatorMethod.PHASE,
    n_max: int = DEFAULT_N_MAX,
    gamma_true: Optional[float] = None,
    no_lock_sigma: float = NO_LOCK_SIGMA,
    line_shape: LineShape = LineShape.LORENTZIAN,
) -> EstimateRecord:
    """Estimate with the phase method or the harmonic least-squares.

    `line_shape` and `gamma_true` select the truncation correction of the
    phase estimate; the least-squares always fits the periodic model.
    """
    method = EstimatorMethod(str(method))
    if h.n_max < 2:
        if method == EstimatorMethod.LSTSQ:
            raise ConfigError("The harmonic least-squares needs harmonics up to n >= 2.")
        return phase_to_frequency(h, sweep, no_lock_sigma, line_shape, gamma_true)
    record = estimate_params(
        h, sweep, gamma_true=gamma_true, no_lock_sigma=no_lock_sigma, line_shape=line_shape
    )
    if method == EstimatorMethod.LSTSQ:
        return harmonic_lstsq(h, sweep, record, n_max)
    return record
