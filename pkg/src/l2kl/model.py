"""Parametric density families with analytic scores.

Every model works on a flat parameter vector ``theta`` and on arrays of
observations, so integrands and estimating equations can be evaluated
on whole samples (or quadrature grids) at once.

Conventions
-----------
* Univariate normal: ``theta = (mu, sigma)``; ``sigma`` itself, not the
  variance, is the scale parameter.
* Multivariate normal: ``theta = (mu_1..mu_p, l_1..l_q)`` where the
  ``l`` block lists the lower-triangular Cholesky factor of the
  covariance row by row, with diagonal entries stored as logarithms.
  That makes every real vector a valid parameter.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidInputError

LOG_2PI = np.log(2.0 * np.pi)


def _finite_array(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class NormalParams:
    """Location and scale of a univariate normal."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma)):
            raise InvalidInputError("normal parameters must be finite")
        if self.sigma <= 0:
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")

    def to_array(self):
        return np.array([self.mu, self.sigma], dtype=float)

    @classmethod
    def from_array(cls, theta):
        return cls(float(theta[0]), float(theta[1]))


@dataclass(frozen=True)
class MvnParams:
    """Mean vector and covariance of a p-variate normal.

    The covariance is held through its lower Cholesky factor ``chol``;
    use :meth:`from_matrix` to build one from a covariance matrix.
    """

    mu: np.ndarray
    chol: np.ndarray = field(repr=False)

    def __post_init__(self):
        mu = _finite_array(self.mu, "mu").reshape(-1)
        chol = _finite_array(self.chol, "chol")
        p = mu.size
        if chol.shape != (p, p):
            raise InvalidInputError(f"Cholesky factor must be {p}x{p}, got {chol.shape}")
        if np.any(np.triu(chol, 1) != 0):
            raise InvalidInputError("Cholesky factor must be lower triangular")
        if np.any(np.diag(chol) <= 0):
            raise InvalidInputError("Cholesky factor needs a strictly positive diagonal")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "chol", chol)

    @property
    def p(self):
        return self.mu.size

    @property
    def sigma_matrix(self):
        return self.chol @ self.chol.T

    @classmethod
    def from_matrix(cls, mu, sigma_matrix):
        sigma_matrix = _finite_array(sigma_matrix, "sigma_matrix")
        sigma_matrix = np.atleast_2d(sigma_matrix)
        if not np.allclose(sigma_matrix, sigma_matrix.T, rtol=1e-10, atol=1e-12):
            raise InvalidInputError("covariance matrix must be symmetric")
        try:
            chol = np.linalg.cholesky(sigma_matrix)
        except np.linalg.LinAlgError as exc:
            raise InvalidInputError("covariance matrix is not positive definite") from exc
        return cls(np.atleast_1d(mu), chol)

    def to_vector(self):
        rows, cols = np.tril_indices(self.p)
        entries = self.chol[rows, cols].copy()
        diag = rows == cols
        entries[diag] = np.log(entries[diag])
        return np.concatenate([self.mu, entries])

    @classmethod
    def from_vector(cls, theta, p):
        theta = np.asarray(theta, dtype=float)
        rows, cols = np.tril_indices(p)
        entries = theta[p:].copy()
        diag = rows == cols
        entries[diag] = np.exp(entries[diag])
        chol = np.zeros((p, p))
        chol[rows, cols] = entries
        return cls(theta[:p].copy(), chol)


class ParametricModel(ABC):
    """A regular parametric family ``f(x, theta)``.

    Subclasses supply the log density and its first two derivatives in
    ``theta``. All methods accept a batch of observations and return one
    leading row per observation.
    """

    param_dim: int
    #: number of coordinates of one observation (1 for univariate models)
    data_dim: int = 1

    @abstractmethod
    def log_density(self, x, theta):
        """Log density at each observation, shape ``(m,)``."""

    def density(self, x, theta):
        return np.exp(self.log_density(x, theta))

    @abstractmethod
    def score(self, x, theta):
        """Gradient of the log density in ``theta``, shape ``(m, d)``."""

    @abstractmethod
    def score_deriv(self, x, theta):
        """Hessian of the log density in ``theta``, shape ``(m, d, d)``."""

    def scale_hint(self, theta):
        """(center, spread) used to place quadrature over the real line."""
        raise NotImplementedError

    def gaussian_factor(self, theta):
        """Return ``(center, precision)`` if the density is exactly a
        polynomial-free Gaussian in ``x``; otherwise ``None``.

        Quadrature uses this to pick Gauss-Hermite nodes that integrate
        products of densities exactly.
        """
        return None

    def fisher_information(self, theta):
        raise NotImplementedError


class NormalModel(ParametricModel):
    """Univariate normal family parametrized by ``(mu, sigma)``."""

    param_dim = 2
    data_dim = 1

    @staticmethod
    def _split(theta):
        theta = _finite_array(theta, "theta")
        mu, sigma = float(theta[0]), float(theta[1])
        if sigma <= 0:
            raise InvalidInputError(f"sigma must be positive, got {sigma}")
        return mu, sigma

    def log_density(self, x, theta):
        mu, sigma = self._split(theta)
        z = (np.asarray(x, dtype=float) - mu) / sigma
        return -np.log(sigma) - 0.5 * z * z - 0.5 * LOG_2PI

    def score(self, x, theta):
        mu, sigma = self._split(theta)
        z = (np.asarray(x, dtype=float) - mu) / sigma
        return np.stack([z / sigma, (z * z - 1.0) / sigma], axis=-1)

    def score_deriv(self, x, theta):
        mu, sigma = self._split(theta)
        z = (np.asarray(x, dtype=float) - mu) / sigma
        s2 = sigma * sigma
        d_mumu = np.full_like(z, -1.0 / s2)
        d_musig = -2.0 * z / s2
        d_sigsig = (1.0 - 3.0 * z * z) / s2
        row0 = np.stack([d_mumu, d_musig], axis=-1)
        row1 = np.stack([d_musig, d_sigsig], axis=-1)
        return np.stack([row0, row1], axis=-2)

    def scale_hint(self, theta):
        return self._split(theta)

    def gaussian_factor(self, theta):
        mu, sigma = self._split(theta)
        return mu, 1.0 / sigma**2

    def fisher_information(self, theta):
        _, sigma = self._split(theta)
        return np.diag([1.0, 2.0]) / sigma**2


def normal_log_density(x, params):
    return NormalModel().log_density(_finite_array(x), params.to_array())


def normal_score(x, params):
    """Score ``(d/dmu, d/dsigma)`` of the normal log density.

    A scalar ``x`` gives a length-2 vector; an array gives shape ``(m, 2)``.
    """
    x = _finite_array(x)
    return NormalModel().score(x, params.to_array())


def normal_score_deriv(x, params):
    """Symmetric 2x2 matrix of second derivatives of the normal log density."""
    x = _finite_array(x)
    return NormalModel().score_deriv(x, params.to_array())


class MvnModel(ParametricModel):
    """p-variate normal in the ``(mu, log-Cholesky)`` parametrization."""

    def __init__(self, p):
        if int(p) < 1:
            raise InvalidInputError("dimension must be at least 1")
        self.p = int(p)
        self.data_dim = self.p
        self.param_dim = self.p + self.p * (self.p + 1) // 2
        self._rows, self._cols = np.tril_indices(self.p)
        self._diag = self._rows == self._cols

    def params(self, theta):
        return MvnParams.from_vector(_finite_array(theta, "theta"), self.p)

    def _prepare(self, x, theta):
        x = _finite_array(x)
        x = x.reshape(-1, self.p) if x.ndim < 2 else x
        if x.shape[-1] != self.p:
            raise InvalidInputError(f"observations must have {self.p} coordinates, got {x.shape[-1]}")
        par = self.params(theta)
        y = solve_triangular(par.chol, (x - par.mu).T, lower=True).T
        return par, y

    def log_density(self, x, theta):
        par, y = self._prepare(x, theta)
        logdet = 2.0 * np.sum(np.log(np.diag(par.chol)))
        return -0.5 * logdet - 0.5 * np.sum(y * y, axis=1) - 0.5 * self.p * LOG_2PI

    def score(self, x, theta):
        par, y = self._prepare(x, theta)
        linv = solve_triangular(par.chol, np.eye(self.p), lower=True)
        b = y @ linv  # Sigma^{-1}(x - mu)
        g_chol = b[:, self._rows] * y[:, self._cols]
        g_chol[:, self._diag] -= 1.0 / np.diag(par.chol)
        # chain rule through the log-diagonal
        g_chol[:, self._diag] *= np.diag(par.chol)
        return np.concatenate([b, g_chol], axis=1)

    def score_deriv(self, x, theta):
        par, y = self._prepare(x, theta)
        p, d = self.p, self.param_dim
        m = y.shape[0]
        L = par.chol
        linv = solve_triangular(L, np.eye(p), lower=True)
        b = y @ linv
        rows, cols = self._rows, self._cols

        # a_k = L^{-1}(dL_k y + dmu_k) for each coordinate direction k
        a = np.empty((m, d, p))
        a[:, :p, :] = linv.T[None, :, :]
        a[:, p:, :] = y[:, cols, None] * linv[:, rows].T[None, :, :]

        # beta[l, k] = b' dL_l a_k
        beta = np.zeros((m, d, d))
        beta[:, p:, :] = b[:, rows, None] * np.swapaxes(a[:, :, cols], 1, 2)

        hess = -np.einsum("mkp,mlp->mkl", a, a) - beta - np.swapaxes(beta, 1, 2)
        diag_idx = p + np.flatnonzero(self._diag)
        ldiag = np.diag(L)
        hess[:, diag_idx, diag_idx] += 1.0 / ldiag**2

        grad_l = b[:, rows] * y[:, cols]
        grad_l[:, self._diag] -= 1.0 / ldiag

        scale = np.ones(d)
        scale[diag_idx] = ldiag
        hess = hess * scale[None, :, None] * scale[None, None, :]
        hess[:, diag_idx, diag_idx] += grad_l[:, self._diag] * ldiag
        return hess

    def fisher_information(self, theta):
        raise NotImplementedError("use quadrature or Monte Carlo for the MVN information")


def mvn_log_density(x, params):
    """Log density of ``N(params.mu, params.sigma_matrix)`` at ``x``.

    A single observation (1-d ``x``) returns a float.
    """
    x = _finite_array(x)
    model = MvnModel(params.p)
    if x.ndim <= 1:
        if x.size != params.p:
            raise InvalidInputError(f"expected {params.p} coordinates, got {x.size}")
        return float(model.log_density(x.reshape(1, -1), params.to_vector())[0])
    return model.log_density(x, params.to_vector())
