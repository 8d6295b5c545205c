"""Minimum weighted L2 estimation.

The estimator minimises an unbiased estimate of the weighted integrated
squared error between the model density and the data density,

    Q_n(theta) = int w f_theta^2 dx - (2/n) sum_i w(x_i) f_theta(x_i),

equivalently solves ``V_n(theta) = 0`` with ``V_n = -dQ_n/dtheta / 2``.
"""

import numpy as np

from .asymptotics import empirical_sandwich
from .errors import DegenerateDataError, InvalidInputError, SolverError
from .model import NormalModel, NormalParams
from .numerics import GAUSS_HERMITE, SolverConfig, mad_scale, median, newton_solve
from .result import FitResult
from .weights import WeightFunction, weighted_integral


def _sample(data):
    x = np.asarray(data, dtype=float).reshape(-1)
    if x.size == 0:
        raise InvalidInputError("data must be non-empty")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("data contain non-finite values")
    return x


def _wf(x, theta, w, model):
    return np.exp(w.log_value(x) + model.log_density(x, theta))


def q_objective(theta, data, w=None, model=None, quad=GAUSS_HERMITE):
    """Estimated weighted integrated squared error, up to a theta-free term."""
    model, w = model or NormalModel(), w or WeightFunction.constant()
    x = _sample(data)
    w = w.bind(x)
    integral = weighted_integral(None, theta, model, w, 2, quad=quad)
    return float(integral - 2.0 * np.mean(_wf(x, theta, w, model)))


def v_score(theta, data, w=None, model=None, quad=GAUSS_HERMITE):
    """L2 estimating function ``int w f_theta u_theta (dF_n - f_theta dx)``."""
    model, w = model or NormalModel(), w or WeightFunction.constant()
    x = _sample(data)
    w = w.bind(x)
    emp = np.mean(_wf(x, theta, w, model)[:, None] * model.score(x, theta), axis=0)
    return emp - weighted_integral(lambda t: model.score(t, theta), theta, model, w, 2, quad=quad)


def v_jacobian(theta, data, w=None, model=None, quad=GAUSS_HERMITE):
    """Derivative of :func:`v_score` in theta; minus this is the plug-in ``J``."""
    model, w = model or NormalModel(), w or WeightFunction.constant()
    x = _sample(data)
    w = w.bind(x)

    def curv(t):
        u = model.score(t, theta)
        return u[:, :, None] * u[:, None, :] + model.score_deriv(t, theta)

    emp = np.mean(_wf(x, theta, w, model)[:, None, None] * curv(x), axis=0)

    def integrand(t):
        u = model.score(t, theta)
        return curv(t) + u[:, :, None] * u[:, None, :]

    return emp - weighted_integral(integrand, theta, model, w, 2, quad=quad)


def _normal_coordinates(loc, scale):
    """Map between (mu, sigma) and standardized (u, log(sigma/scale))."""

    def to_theta(phi):
        return np.array([loc + scale * phi[0], scale * np.exp(phi[1])])

    def to_phi(theta):
        return np.array([(theta[0] - loc) / scale, np.log(theta[1] / scale)])

    def dtheta(phi):
        return np.diag([scale, scale * np.exp(phi[1])])

    return to_theta, to_phi, dtheta


def fit_min_l2(data, model=None, w=None, init=None, cfg=SolverConfig(), quad=GAUSS_HERMITE):
    """Fit ``model`` by minimum weighted L2.

    For the normal model the default start is (median, MAD) and the
    iteration runs in standardized ``(mu, log sigma)`` coordinates so
    the fit is affine equivariant. Other models need ``init``.

    An ``exp_delta`` weight without preliminary estimates is bound to
    the data's median and MAD before fitting; its sandwich treats the
    weight as fixed at those values.
    """
    model, w = model or NormalModel(), w or WeightFunction.constant()
    x = _sample(data)
    if x.size < model.param_dim + 1:
        raise InvalidInputError(f"need at least {model.param_dim + 1} observations, got {x.size}")
    w = w.bind(x)

    if isinstance(model, NormalModel):
        loc, scale = median(x), mad_scale(x)
        if scale <= 0:
            raise DegenerateDataError("robust scale (MAD) of the data is zero; cannot fit a normal")
        to_theta, to_phi, dtheta = _normal_coordinates(loc, scale)
        eq_scale = scale**2 / w.scale  # makes the estimating function scale-free
    else:
        if init is None:
            raise InvalidInputError("init is required for non-normal models")
        to_theta, to_phi = (lambda p: p), (lambda t: np.asarray(t, float))
        dtheta = lambda p: np.eye(len(p))  # noqa: E731
        eq_scale = 1.0 / w.scale

    theta_init = np.array([loc, scale]) if init is None else np.asarray(init, dtype=float)

    def g(phi):
        return eq_scale * v_score(to_theta(phi), x, w, model, quad)

    def jac(phi):
        return eq_scale * v_jacobian(to_theta(phi), x, w, model, quad) @ dtheta(phi)

    sol = newton_solve(g, jac, to_phi(theta_init), cfg)
    theta = to_theta(sol.theta)
    if not np.all(np.isfinite(theta)):
        raise SolverError("L2 iteration diverged", theta)

    J = -v_jacobian(theta, x, w, model, quad)
    psi = _wf(x, theta, w, model)[:, None] * model.score(x, theta)
    M, cov = empirical_sandwich(J, psi)
    params = NormalParams.from_array(theta) if isinstance(model, NormalModel) else theta
    extra = {"weight": w.variant}
    if w.variant == "exp_delta":
        extra.update(delta=w.delta, mu_tilde=w.mu_tilde, sigma_tilde=w.sigma_tilde)
    elif w.variant == "kernel_local":
        extra.update(x0=w.x0, h=w.kernel.h)
    return FitResult(
        method="l2", theta=theta, params=params, n=x.size,
        iterations=sol.iterations, converged=sol.converged, grad_norm=sol.grad_norm,
        J=J, M=M, covariance=cov,
        param_names=("mu", "sigma") if isinstance(model, NormalModel) else tuple(f"theta{i}" for i in range(len(theta))),
        extra=extra,
    )
