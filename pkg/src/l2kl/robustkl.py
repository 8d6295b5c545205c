"""Robust Kullback-Leibler fitting via local (kernel-smoothed) likelihood.

A normal kernel centred at a robust location estimate, with bandwidth a
multiple ``k`` of a robust scale estimate, turns maximum likelihood
into a bounded-influence estimator. ``k -> infinity`` recovers ordinary
maximum likelihood.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import cho_factor, cho_solve

from .asymptotics import empirical_sandwich
from .errors import DegenerateDataError, InvalidInputError, SolverError
from .ml import mvn_param_names
from .model import LOG_2PI, MvnModel, MvnParams, NormalModel, NormalParams
from .numerics import (
    GAUSS_HERMITE, SolverConfig, finite_difference_jacobian, mad_scale, median, newton_solve,
)
from .result import FitResult
from .weights import KernelSpec, WeightFunction, weighted_integral


@dataclass(frozen=True)
class LocalFitSpec:
    """Tuning of a robust KL fit.

    ``k`` is the bandwidth multiple: ``h = k * sigma_tilde`` in one
    dimension, kernel covariance ``k^2 * Sigma_tilde`` for the MVN.
    ``x0`` defaults to the preliminary location; ``prelim`` to
    (median, MAD) or, for the MVN, (coordinatewise median,
    ``diag(MAD^2)``).
    """

    k: float = 2.0
    x0: float | np.ndarray | None = None
    prelim: tuple | None = None

    def __post_init__(self):
        if not np.isfinite(self.k) or self.k <= 0:
            raise InvalidInputError(f"bandwidth multiple k must be positive, got {self.k}")


def _sample(data):
    x = np.asarray(data, dtype=float).reshape(-1)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise InvalidInputError("data must be non-empty and finite")
    return x


# ------------------------------------------------------------- general model

def local_log_likelihood(theta, x0, h, data, model=None, quad=GAUSS_HERMITE):
    """Kernel-smoothed log likelihood around ``x0``:

        sum_i K_h(x_i - x0) log f(x_i, theta) - n int K_h(t - x0) f(t, theta) dt
    """
    model = model or NormalModel()
    x = _sample(data)
    kern = KernelSpec(h)
    local_mass = weighted_integral(None, theta, model, WeightFunction.kernel_local(x0, kern), 1, quad=quad)
    return float(np.sum(kern(x - x0) * model.log_density(x, theta)) - x.size * local_mass)


def localized_kl_distance(f, theta, x0, h, model=None, rel_tol=1e-12, abs_tol=1e-14):
    """Kernel-localized KL divergence from density ``f`` to ``f_theta``:

        int K_h(t - x0) [f log(f / f_theta) - (f - f_theta)] dt

    ``f`` must be vectorized. Where ``f`` vanishes, ``f log(f/f_theta)``
    is taken as its limit 0.
    """
    model = model or NormalModel()
    kern = KernelSpec(h)

    def integrand(t):
        t = np.atleast_1d(t)
        ft = np.asarray(f(t), dtype=float)
        log_ftheta = model.log_density(t, theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(ft > 0, ft * (np.log(ft) - log_ftheta), 0.0)
        return kern(t - x0) * (term - ft + np.exp(log_ftheta))

    center, spread = model.scale_hint(theta)
    lo, hi = x0 - 12 * h, x0 + 12 * h
    lo, hi = max(lo, center - 40 * spread), min(hi, center + 40 * spread)
    if hi <= lo:
        return 0.0
    points = [p for p in (center - 5 * spread, center, center + 5 * spread, x0) if lo < p < hi]
    val, _ = quad_vec(lambda t: integrand(t)[0], lo, hi, epsrel=rel_tol, epsabs=abs_tol,
                      points=sorted(points) or None, limit=2000)
    return float(val)


# ------------------------------------------------------- normal fast path

def kernel_weights(data, x0, h):
    """``phi((x_i - x0)/h) / h`` for each observation."""
    return KernelSpec(h)(_sample(data) - x0)


def normal_local_criterion(mu, sigma, x0, h, data):
    """Robust KL criterion for the normal model with a normal kernel:

        (1/n) sum_i phi((x_i - x0)/h)/h {log sigma + (x_i - mu)^2 / (2 sigma^2)}
            + phi((x0 - mu)/s) / s,   s = sqrt(sigma^2 + h^2).

    Equal to ``-local_log_likelihood / n`` plus a term free of (mu, sigma).
    """
    if not sigma > 0 or not h > 0:
        raise InvalidInputError("sigma and h must be positive")
    x = _sample(data)
    c = kernel_weights(x, x0, h)
    fit_term = np.mean(c * (np.log(sigma) + 0.5 * ((x - mu) / sigma) ** 2))
    s = np.sqrt(sigma**2 + h**2)
    return float(fit_term + np.exp(-0.5 * ((x0 - mu) / s) ** 2 - 0.5 * LOG_2PI) / s)


def normal_local_gradient(mu, sigma, x0, h, data):
    """Gradient of :func:`normal_local_criterion` in ``(mu, sigma)``."""
    x = _sample(data)
    c = kernel_weights(x, x0, h)
    r = x - mu
    g_mu = -np.mean(c * r) / sigma**2
    g_sigma = np.mean(c) / sigma - np.mean(c * r * r) / sigma**3
    s2 = sigma**2 + h**2
    d = x0 - mu
    mass = np.exp(-0.5 * d * d / s2 - 0.5 * LOG_2PI) / np.sqrt(s2)
    g_mu += mass * d / s2
    g_sigma += mass * (d * d / s2**2 - 1.0 / s2) * sigma
    return np.array([g_mu, g_sigma])


def _normal_prelim(x, spec):
    if spec.prelim is not None:
        mu_t, sig_t = map(float, spec.prelim)
    else:
        mu_t, sig_t = median(x), mad_scale(x)
    if not sig_t > 0:
        raise DegenerateDataError("robust scale (MAD) of the data is zero")
    return mu_t, sig_t


def fit_robust_kl(data, spec=LocalFitSpec(), cfg=SolverConfig()):
    """Robust KL fit of a normal: minimize the local criterion with
    ``x0 = median`` and ``h = k * MAD`` (or the values in ``spec``)."""
    x = _sample(data)
    if x.size < 3:
        raise InvalidInputError(f"need at least 3 observations, got {x.size}")
    mu_t, sig_t = _normal_prelim(x, spec)
    x0 = mu_t if spec.x0 is None else float(spec.x0)
    h = spec.k * sig_t
    cbar = float(np.mean(kernel_weights(x, x0, h)))
    if not cbar > 0:
        raise DegenerateDataError("no observation carries kernel weight around x0")

    # standardized coordinates: u = (mu - mu_t)/sig_t, eta = log(sigma/sig_t)
    def to_theta(phi):
        return mu_t + sig_t * phi[0], sig_t * np.exp(phi[1])

    def objective(phi):
        mu, sigma = to_theta(phi)
        return normal_local_criterion(mu, sigma, x0, h, x) / cbar

    def grad(phi):
        mu, sigma = to_theta(phi)
        g = normal_local_gradient(mu, sigma, x0, h, x) / cbar
        return np.array([g[0] * sig_t, g[1] * sigma])

    def hess(phi):
        H = finite_difference_jacobian(grad, phi)
        return 0.5 * (H + H.T)

    sol = newton_solve(grad, hess, np.zeros(2), cfg, objective=objective)
    mu, sigma = to_theta(sol.theta)
    theta = np.array([mu, sigma])
    if not np.all(np.isfinite(theta)):
        raise SolverError("robust KL iteration diverged", theta)

    J = finite_difference_jacobian(lambda t: normal_local_gradient(t[0], t[1], x0, h, x), theta)
    J = 0.5 * (J + J.T)
    psi = kernel_weights(x, x0, h)[:, None] * NormalModel().score(x, theta)
    M, cov = empirical_sandwich(J, psi)
    return FitResult(
        method="kl", theta=theta, params=NormalParams(mu, sigma), n=x.size,
        iterations=sol.iterations, converged=sol.converged, grad_norm=sol.grad_norm,
        J=J, M=M, covariance=cov, param_names=("mu", "sigma"),
        extra={"k": spec.k, "x0": x0, "h": h, "mu_tilde": mu_t, "sigma_tilde": sig_t},
    )


# ------------------------------------------------------------- multivariate

def _as_matrix_data(data, p=None):
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if p in (None, 1) else x.reshape(1, -1)
    if x.ndim != 2 or x.shape[0] == 0 or not np.all(np.isfinite(x)):
        raise InvalidInputError("data must be a non-empty finite n x p array")
    if p is not None and x.shape[1] != p:
        raise InvalidInputError(f"data have {x.shape[1]} columns, expected {p}")
    return x


def mvn_kernel_weights(data, mu_tilde, sigma_tilde, h):
    """``exp(-q_i / (2 h^2)) / (h^p |Sigma_tilde|^{1/2})`` with ``q_i`` the
    Mahalanobis distance of ``x_i`` under ``(mu_tilde, Sigma_tilde)``."""
    mu_tilde = np.atleast_1d(np.asarray(mu_tilde, dtype=float))
    sigma_tilde = np.atleast_2d(np.asarray(sigma_tilde, dtype=float))
    x = _as_matrix_data(data, mu_tilde.size)
    p = mu_tilde.size
    cf = cho_factor(sigma_tilde, lower=True)
    r = x - mu_tilde
    q = np.sum(r * cho_solve(cf, r.T).T, axis=1)
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    return np.exp(-0.5 * q / h**2 - p * np.log(h) - 0.5 * logdet)


def mvn_local_criterion(mu, sigma_matrix, data, mu_tilde, sigma_tilde, h):
    """Multivariate robust KL criterion (no ``2 pi`` normalizers):

        (1/n) sum_i c_i {log|Sigma|/2 + (x_i - mu)' Sigma^{-1} (x_i - mu)/2}
            + exp{-(mu - mu_tilde)' A^{-1} (mu - mu_tilde)/2} / |A|^{1/2},

    ``A = h^2 Sigma_tilde + Sigma`` and ``c_i`` from :func:`mvn_kernel_weights`.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    x = _as_matrix_data(data, mu.size)
    c = mvn_kernel_weights(x, mu_tilde, sigma_tilde, h)
    params = MvnParams.from_matrix(mu, sigma_matrix)
    return _mvn_value(params, x, c, np.atleast_1d(mu_tilde), np.atleast_2d(sigma_tilde), h)


def _mvn_value(params, x, c, mu_tilde, sigma_tilde, h):
    L = params.chol
    y = np.linalg.solve(L, (x - params.mu).T).T
    neg_loglik = np.sum(np.log(np.diag(L))) + 0.5 * np.sum(y * y, axis=1)
    A = h**2 * sigma_tilde + params.sigma_matrix
    cf = cho_factor(A, lower=True)
    d = params.mu - mu_tilde
    quad_form = d @ cho_solve(cf, d)
    logdet_a = 2.0 * np.sum(np.log(np.diag(cf[0])))
    return float(np.mean(c * neg_loglik) + np.exp(-0.5 * quad_form - 0.5 * logdet_a))


def _mvn_gradient(theta, model, x, c, mu_tilde, sigma_tilde, h):
    """Gradient of the MVN criterion in ``(mu, log-Cholesky)`` coordinates."""
    p = model.p
    params = model.params(theta)
    g = -np.mean(c[:, None] * model.score(x, theta), axis=0)

    A = h**2 * sigma_tilde + params.sigma_matrix
    Ainv = np.linalg.inv(A)
    d = params.mu - mu_tilde
    ad = Ainv @ d
    mass = np.exp(-0.5 * d @ ad - 0.5 * np.linalg.slogdet(A)[1])
    g[:p] += -mass * ad
    G = 0.5 * mass * (np.outer(ad, ad) - Ainv)  # d mass / d Sigma
    gl = 2.0 * G @ params.chol
    rows, cols = np.tril_indices(p)
    gchol = gl[rows, cols]
    diag = rows == cols
    gchol[diag] *= np.diag(params.chol)
    g[p:] += gchol
    return g


def _mvn_prelim(x, spec):
    if spec.prelim is not None:
        mu_t = np.atleast_1d(np.asarray(spec.prelim[0], dtype=float))
        sig_t = np.atleast_2d(np.asarray(spec.prelim[1], dtype=float))
        try:
            np.linalg.cholesky(sig_t)
        except np.linalg.LinAlgError as exc:
            raise InvalidInputError("preliminary scatter matrix is not positive definite") from exc
        return mu_t, sig_t
    mu_t = np.median(x, axis=0)
    mads = np.array([mad_scale(col) for col in x.T])
    if np.any(mads <= 0):
        raise DegenerateDataError("a coordinate has zero robust scale (MAD)")
    return mu_t, np.diag(mads**2)


def fit_mvn_robust(data, spec=LocalFitSpec(), cfg=SolverConfig()):
    """Robust KL fit of a p-variate normal with a Gaussian kernel of
    covariance ``k^2 Sigma_tilde`` centred at ``mu_tilde``."""
    x = _as_matrix_data(data)
    n, p = x.shape
    model = MvnModel(p)
    if n < model.param_dim + 1:
        raise InvalidInputError(f"need at least {model.param_dim + 1} observations, got {n}")
    mu_t, sig_t = _mvn_prelim(x, spec)
    h = spec.k
    c = mvn_kernel_weights(x, mu_t, sig_t, h)
    cbar = float(np.mean(c))
    if not cbar > 0:
        raise DegenerateDataError("no observation carries kernel weight")

    def objective(theta):
        return _mvn_value(model.params(theta), x, c, mu_t, sig_t, h) / cbar

    def grad(theta):
        return _mvn_gradient(theta, model, x, c, mu_t, sig_t, h) / cbar

    def hess(theta):
        H = finite_difference_jacobian(grad, theta)
        return 0.5 * (H + H.T)

    init = MvnParams.from_matrix(mu_t, sig_t).to_vector()
    sol = newton_solve(grad, hess, init, cfg, objective=objective)
    theta = sol.theta
    if not np.all(np.isfinite(theta)):
        raise SolverError("MVN robust KL iteration diverged", theta)

    J = hess(theta) * cbar
    M, cov = empirical_sandwich(J, c[:, None] * model.score(x, theta))
    params = model.params(theta)
    return FitResult(
        method="mvn_kl", theta=theta, params=params, n=n,
        iterations=sol.iterations, converged=sol.converged, grad_norm=sol.grad_norm,
        J=J, M=M, covariance=cov, param_names=mvn_param_names(p),
        extra={"h": h, "mu_tilde": mu_t.tolist(), "sigma_tilde": sig_t.tolist()},
    )
