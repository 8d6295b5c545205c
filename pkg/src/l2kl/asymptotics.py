"""Influence functions and asymptotic covariances of the two estimators.

Quantities come in two flavours that are meant to be checked against
each other:

* quadrature-based ``J``/``M`` matrices for any :class:`ParametricModel`
  and weight, and
* closed forms for the normal model (constant or exponential-delta
  weight for the L2 method, normal kernel for the local likelihood
  method).

Everything is expressed per observation: the covariance of
``sqrt(n) (theta_hat - theta_0)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .model import NormalModel
from .numerics import GAUSS_HERMITE, safe_inverse
from .weights import KernelSpec, WeightFunction, weighted_integral


@dataclass
class AsymptoticReport:
    theta0: np.ndarray
    J: np.ndarray
    M: np.ndarray
    sandwich: np.ndarray
    fisher: np.ndarray
    efficiency: np.ndarray


def sandwich(J, M):
    """``J^{-1} M J^{-1}``, symmetrized."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    Jinv = safe_inverse(J, "J")
    out = Jinv @ M @ Jinv.T
    return 0.5 * (out + out.T)


def empirical_sandwich(J, contributions):
    """Plug-in sandwich from an estimated ``J`` and per-observation
    estimating-function contributions (rows)."""
    psi = np.atleast_2d(np.asarray(contributions, dtype=float))
    centered = psi - psi.mean(axis=0)
    M = centered.T @ centered / psi.shape[0]
    return M, sandwich(J, M)


def fisher_information(theta, model=None, quad=GAUSS_HERMITE):
    """``int f u u' dx`` by quadrature."""
    model = model or NormalModel()
    return weighted_integral(lambda x: _outer(model.score(x, theta)), theta, model, None, 1, quad=quad)


def _outer(u):
    return u[:, :, None] * u[:, None, :]


def _weight(w):
    return WeightFunction.constant() if w is None else w


# ---------------------------------------------------------------- minimum L2

def l2_xi(theta, w=None, model=None, f=None, quad=GAUSS_HERMITE):
    """Mean of ``w f_theta u_theta`` under ``f`` (the model when ``f`` is None)."""
    model, w = model or NormalModel(), _weight(w)
    if f is None:
        return weighted_integral(lambda x: model.score(x, theta), theta, model, w, 2, quad=quad)
    return weighted_integral(lambda x: model.score(x, theta) * f(x)[:, None], theta, model, w, 1, quad=quad)


def l2_J(theta, w=None, model=None, f=None, quad=GAUSS_HERMITE):
    """Limit of minus the derivative of the L2 estimating function.

    With ``f`` given (a vectorized true density) the off-model
    correction ``- int w (f_theta u u' + f_theta u*) (f - f_theta) dx``
    is included.
    """
    model, w = model or NormalModel(), _weight(w)
    J = weighted_integral(lambda x: _outer(model.score(x, theta)), theta, model, w, 2, quad=quad)
    if f is not None:
        def corr(x):
            u = model.score(x, theta)
            diff = f(x) - model.density(x, theta)
            return (_outer(u) + model.score_deriv(x, theta)) * diff[:, None, None]

        J = J - weighted_integral(corr, theta, model, w, 1, quad=quad)
    return 0.5 * (J + J.T)


def l2_M(theta, w=None, model=None, f=None, quad=GAUSS_HERMITE):
    """Variance of ``w(X) f_theta(X) u_theta(X)`` under ``f``."""
    model, w = model or NormalModel(), _weight(w)
    xi = l2_xi(theta, w, model, f, quad)
    if f is None:
        second = weighted_integral(lambda x: _outer(model.score(x, theta)), theta, model, w, 3, 2, quad)
    else:
        second = weighted_integral(lambda x: _outer(model.score(x, theta)) * f(x)[:, None, None],
                                   theta, model, w, 2, 2, quad)
    M = second - np.outer(xi, xi)
    return 0.5 * (M + M.T)


def l2_influence(x, theta0, w=None, model=None, f=None, quad=GAUSS_HERMITE):
    """Influence function ``J^{-1} (w(x) f(x, theta0) u(x, theta0) - xi0)``.

    Scalar ``x`` gives a vector, an array gives one row per point.
    """
    model, w = model or NormalModel(), _weight(w)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    Jinv = safe_inverse(l2_J(theta0, w, model, f, quad), "J")
    xi = l2_xi(theta0, w, model, f, quad)
    wf = np.exp(w.log_value(xs) + model.log_density(xs, theta0))
    out = (wf[:, None] * model.score(xs, theta0) - xi) @ Jinv.T
    return out[0] if np.ndim(x) == 0 else out


def l2_report(theta, w=None, model=None, f=None, quad=GAUSS_HERMITE):
    model = model or NormalModel()
    J = l2_J(theta, w, model, f, quad)
    M = l2_M(theta, w, model, f, quad)
    return _report(theta, J, M, model, quad)


# ------------------------------------------------------------- local likelihood

def _kernel_weight(x0, h):
    return WeightFunction.kernel_local(x0, KernelSpec(h))


def kl_xi(theta, x0, h, model=None, quad=GAUSS_HERMITE):
    model = model or NormalModel()
    return weighted_integral(lambda x: model.score(x, theta), theta, model, _kernel_weight(x0, h), 1, quad=quad)


def kl_jh_mh(theta, x0, h, model=None, quad=GAUSS_HERMITE):
    """``(J_h, M_h)`` of the local likelihood estimator under model conditions."""
    model = model or NormalModel()
    kw = _kernel_weight(x0, h)
    uu = lambda x: _outer(model.score(x, theta))  # noqa: E731
    Jh = weighted_integral(uu, theta, model, kw, 1, 1, quad)
    xi = kl_xi(theta, x0, h, model, quad)
    Mh = weighted_integral(uu, theta, model, kw, 1, 2, quad) - np.outer(xi, xi)
    return 0.5 * (Jh + Jh.T), 0.5 * (Mh + Mh.T)


def kl_influence(x, theta, x0, h, model=None, quad=GAUSS_HERMITE):
    """Influence function ``J_h^{-1} (K_h(x - x0) u(x, theta) - xi0)``."""
    model = model or NormalModel()
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    Jh, _ = kl_jh_mh(theta, x0, h, model, quad)
    Jinv = safe_inverse(Jh, "J_h")
    xi = kl_xi(theta, x0, h, model, quad)
    k = KernelSpec(h)(xs - x0)
    out = (k[:, None] * model.score(xs, theta) - xi) @ Jinv.T
    return out[0] if np.ndim(x) == 0 else out


def kl_report(theta, x0, h, model=None, quad=GAUSS_HERMITE):
    model = model or NormalModel()
    Jh, Mh = kl_jh_mh(theta, x0, h, model, quad)
    return _report(theta, Jh, Mh, model, quad)


def _report(theta, J, M, model, quad):
    S = sandwich(J, M)
    try:
        fisher = model.fisher_information(theta)
    except NotImplementedError:
        fisher = fisher_information(theta, model, quad)
    bound = np.diag(np.linalg.inv(fisher))
    return AsymptoticReport(np.asarray(theta, float), J, M, S, fisher, bound / np.diag(S))


# ----------------------------------------------------- normal-model closed forms

def _check_sigma(sigma):
    if not np.isfinite(sigma) or sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")


def normal_l2_matrices(sigma=1.0, delta=0.0):
    """Closed-form diagonal ``(J, M)`` for the L2 method at the normal.

    The weight is ``exp(delta (x - mu)^2 / (2 sigma^2))`` with the
    preliminary estimates at their limits; ``delta = 0`` is the
    constant weight.
    """
    _check_sigma(sigma)
    if not 0 <= delta < 1:
        raise InvalidInputError(f"delta must lie in [0, 1), got {delta}")
    a = 2.0 - delta
    b = 3.0 - 2.0 * delta
    cj = 1.0 / (sigma**3 * np.sqrt(2 * np.pi))
    cm = 1.0 / (sigma**4 * 2 * np.pi)
    J = cj * np.diag([a**-1.5, a**-0.5 * (1 - 2 / a + 3 / a**2)])
    M = cm * np.diag([b**-1.5, b**-0.5 * (1 - 2 / b + 3 / b**2) - (1 - delta)**2 / a**3])
    return J, M


def normal_l2_variances(sigma=1.0, delta=None):
    """Asymptotic variances ``(var_mu, var_sigma)`` of the L2 estimator at the normal."""
    J, M = normal_l2_matrices(sigma, 0.0 if delta is None else delta)
    return tuple(np.diag(M) / np.diag(J) ** 2)


def normal_kl_matrices(sigma=1.0, k=2.0, corrected=True):
    """Closed-form diagonal ``(J_h, M_h)`` for the local likelihood method
    with a normal kernel centred at ``mu`` and bandwidth ``h = k sigma``.

    ``corrected=False`` drops the ``1/R`` factor of the sigma entry of
    ``J_h``; that variant does not match quadrature and exists only so
    the discrepancy can be demonstrated.
    """
    _check_sigma(sigma)
    if not np.isfinite(k) or k <= 0:
        raise InvalidInputError(f"k must be positive, got {k}")
    h = k * sigma
    R = np.sqrt(1 + sigma**2 / h**2)
    S = np.sqrt(1 + 2 * sigma**2 / h**2)
    cj = 1.0 / (sigma**2 * np.sqrt(2 * np.pi) * h)
    cm = 1.0 / (sigma**2 * 2 * np.pi * h**2)
    j_sigma = cj * (1 - 2 / R**2 + 3 / R**4)
    if corrected:
        j_sigma /= R
    J = np.diag([cj / R**3, j_sigma])
    M = np.diag([cm / S**3,
                 cm * ((1 / S) * (1 - 2 / S**2 + 3 / S**4) - (1 / R**2) * (1 - 1 / R**2) ** 2)])
    return J, M


def normal_kl_variances(sigma=1.0, k=2.0, corrected=True):
    """``(kappa_mu^2, kappa_sigma^2)`` for bandwidth ``h = k sigma``."""
    J, M = normal_kl_matrices(sigma, k, corrected)
    return tuple(np.diag(M) / np.diag(J) ** 2)


def kappa_mu_sq(sigma, k):
    """Location variance written directly in ``k``."""
    return sigma**2 * (1 + 1 / k**2) ** 3 / (1 + 2 / k**2) ** 1.5


def kappa_sigma_sq(sigma, k):
    """Scale variance written directly in ``k``; agrees with
    ``normal_kl_variances`` (the ``1/R``-corrected form)."""
    a, b = 1 + 1 / k**2, 1 + 2 / k**2
    return sigma**2 * a**2 / b**2.5 * (a**3 * (2 + 4 / k**4) - b**2.5 / k**4) / (2 + 1 / k**4) ** 2


def normal_ml_variances(sigma=1.0):
    _check_sigma(sigma)
    return sigma**2, sigma**2 / 2


def quadrature_l2_variances(sigma=1.0, delta=0.0, quad=GAUSS_HERMITE):
    """Sandwich diagonal for the L2 method at ``N(0, sigma^2)`` by quadrature."""
    theta = np.array([0.0, sigma])
    w = WeightFunction.constant() if delta == 0 else WeightFunction.exp_delta(delta, 0.0, sigma)
    S = sandwich(l2_J(theta, w, quad=quad), l2_M(theta, w, quad=quad))
    return tuple(np.diag(S))


def quadrature_kl_variances(sigma=1.0, k=2.0, quad=GAUSS_HERMITE):
    """Sandwich diagonal for the local likelihood method at ``N(0, sigma^2)`` by quadrature."""
    theta = np.array([0.0, sigma])
    S = sandwich(*kl_jh_mh(theta, 0.0, k * sigma, quad=quad))
    return tuple(np.diag(S))
