"""Quadrature on the real line, a damped Newton solver and robust
preliminary estimates of location and scale."""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import quad_vec

from .errors import InvalidInputError, QuadratureError, SingularMatrixError, SolverError

logger = logging.getLogger(__name__)

#: normal-consistency constant for the median absolute deviation
MAD_SCALE = 1.4826


@dataclass(frozen=True)
class QuadratureSpec:
    """How to evaluate integrals over the real line.

    ``gauss_hermite`` is exact for polynomial times Gaussian integrands
    whose Gaussian part matches the scale hint; ``adaptive_truncated``
    runs adaptive Gauss-Kronrod over ``center +- truncation_radius * spread``.
    """

    method: str = "gauss_hermite"
    node_count: int = 80
    abs_tol: float = 1e-14
    rel_tol: float = 1e-10
    truncation_radius: float = 12.0

    def __post_init__(self):
        if self.method not in ("gauss_hermite", "adaptive_truncated"):
            raise InvalidInputError(f"unknown quadrature method {self.method!r}")
        if self.method == "gauss_hermite" and self.node_count < 20:
            raise InvalidInputError("Gauss-Hermite needs at least 20 nodes")
        if self.abs_tol <= 0 or self.rel_tol <= 0 or self.truncation_radius <= 0:
            raise InvalidInputError("quadrature tolerances and radius must be positive")


GAUSS_HERMITE = QuadratureSpec()
ADAPTIVE = QuadratureSpec(method="adaptive_truncated")


@lru_cache(maxsize=16)
def _hermite_rule(n):
    t, w = hermgauss(n)
    # fold the e^{t^2} factor into the weights once
    return t, np.exp(np.log(w) + t * t)


def integrate(f, scale_hint=(0.0, 1.0), spec=GAUSS_HERMITE):
    """Integrate ``f`` over the real line.

    Parameters
    ----------
    f : callable
        Vectorized integrand. Called with a 1-d array of abscissae, it
        must return an array whose first axis matches; trailing axes
        (vector or matrix integrands) are integrated elementwise.
    scale_hint : (float, float)
        Center and spread of the bulk of the integrand.
    spec : QuadratureSpec

    Returns
    -------
    float or ndarray
    """
    center, spread = float(scale_hint[0]), float(scale_hint[1])
    if not (np.isfinite(center) and np.isfinite(spread)) or spread <= 0:
        raise InvalidInputError(f"bad scale hint {scale_hint}")

    if spec.method == "gauss_hermite":
        t, w = _hermite_rule(spec.node_count)
        x = center + np.sqrt(2.0) * spread * t
        vals = np.asarray(f(x), dtype=float)
        out = np.tensordot(w, vals, axes=(0, 0)) * (np.sqrt(2.0) * spread)
        return float(out) if np.ndim(out) == 0 else out

    r = spec.truncation_radius * spread

    def scalar_f(s):
        return np.asarray(f(np.array([s])), dtype=float)[0]

    val, err, info = quad_vec(
        scalar_f, center - r, center + r,
        epsabs=spec.abs_tol, epsrel=spec.rel_tol, full_output=True, limit=2000,
    )
    if not info.success:
        raise QuadratureError(f"adaptive quadrature did not converge (error {np.max(err):.3g})", val)
    return float(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class SolverConfig:
    grad_tol: float = 1e-8
    max_iter: int = 200
    damping: float = 0.5
    #: number of step halvings before a line search is declared failed
    max_halvings: int = 60

    def __post_init__(self):
        if self.grad_tol <= 0 or self.max_iter < 1:
            raise InvalidInputError("grad_tol and max_iter must be positive")
        if not 0 < self.damping < 1:
            raise InvalidInputError("damping must lie in (0, 1)")


@dataclass
class SolveResult:
    theta: np.ndarray
    iterations: int
    converged: bool
    grad_norm: float


def _safe_eval(fn, theta):
    try:
        with np.errstate(all="ignore"):
            val = np.atleast_1d(np.asarray(fn(theta), dtype=float))
    except (ArithmeticError, ValueError):
        return None
    return val if np.all(np.isfinite(val)) else None


def newton_solve(g, g_jacobian, init, cfg=SolverConfig(), objective=None):
    """Find a root of ``g`` by damped Newton iteration.

    Each step is halved (factor ``cfg.damping``) until the merit
    improves. The merit is ``max|g|`` unless ``objective`` is given, in
    which case ``g`` is taken to be the gradient of ``objective`` and
    the step must decrease it; non-descent Newton directions are then
    replaced by steepest descent.

    A singular Jacobian triggers a gradient step on ``0.5*|g|^2``; two
    singular Jacobians in a row with no progress raise ``SolverError``.
    """
    theta = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    gval = _safe_eval(g, theta)
    if gval is None:
        raise SolverError("estimating function is not finite at the starting point", theta)
    fval = None
    if objective is not None:
        fval = _safe_eval(objective, theta)
        if fval is None:
            raise SolverError("objective is not finite at the starting point", theta)
        fval = float(fval[0])

    singular_streak = 0
    for it in range(cfg.max_iter):
        gnorm = float(np.max(np.abs(gval)))
        if gnorm < cfg.grad_tol:
            return SolveResult(theta, it, True, gnorm)

        jac = np.atleast_2d(np.asarray(g_jacobian(theta), dtype=float))
        step = None
        if np.all(np.isfinite(jac)):
            try:
                step = -np.linalg.solve(jac, gval)
                if not np.all(np.isfinite(step)) or np.linalg.cond(jac) > 1e14:
                    step = None
            except np.linalg.LinAlgError:
                step = None
        if step is None:
            singular_streak += 1
            if singular_streak > 2:
                raise SolverError("Jacobian is persistently singular", theta)
            direction = gval if objective is not None else jac.T @ gval if np.all(np.isfinite(jac)) else gval
            step = -direction / max(np.linalg.norm(direction), 1e-300)
        else:
            singular_streak = 0
        if objective is not None and float(step @ gval) >= 0:
            step = -gval

        scale = 1.0
        accepted = False
        for _ in range(cfg.max_halvings):
            trial = theta + scale * step
            gtrial = _safe_eval(g, trial)
            if gtrial is not None:
                if objective is None:
                    accepted = np.max(np.abs(gtrial)) < gnorm
                else:
                    ftrial = _safe_eval(objective, trial)
                    if ftrial is not None:
                        ftrial = float(ftrial[0])
                        accepted = ftrial <= fval + 1e-4 * scale * float(step @ gval)
                        # near the optimum the objective stalls at round-off; accept a
                        # gradient reduction instead
                        if not accepted and abs(ftrial - fval) <= 1e-14 * max(1.0, abs(fval)):
                            accepted = np.max(np.abs(gtrial)) < gnorm
            if accepted:
                break
            scale *= cfg.damping
        if not accepted:
            logger.debug("line search failed at iteration %d (|g|=%g)", it, gnorm)
            return SolveResult(theta, it, False, gnorm)
        theta, gval = trial, gtrial
        if objective is not None:
            fval = ftrial

    gnorm = float(np.max(np.abs(gval)))
    return SolveResult(theta, cfg.max_iter, gnorm < cfg.grad_tol, gnorm)


def finite_difference_jacobian(fn, theta, rel_step=1e-6):
    """Central-difference Jacobian of a vector function."""
    theta = np.asarray(theta, dtype=float)
    base = np.atleast_1d(fn(theta))
    jac = np.empty((base.size, theta.size))
    for i in range(theta.size):
        h = rel_step * (1.0 + abs(theta[i]))
        e = np.zeros_like(theta)
        e[i] = h
        jac[:, i] = (np.atleast_1d(fn(theta + e)) - np.atleast_1d(fn(theta - e))) / (2 * h)
    return jac


def _as_sample(data, min_size=1):
    x = np.asarray(data, dtype=float).reshape(-1)
    if x.size < min_size:
        raise InvalidInputError(f"need at least {min_size} data point(s), got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("data contain non-finite values")
    return x


def median(data):
    """Sample median; even lengths give the midpoint of the two central values."""
    return float(np.median(_as_sample(data)))


def mad_scale(data):
    """Median absolute deviation scaled by 1.4826 (consistent for sigma at the normal).

    Returns 0 for constant data; fitters must reject that.
    """
    x = _as_sample(data, min_size=2)
    return MAD_SCALE * float(np.median(np.abs(x - np.median(x))))


def safe_inverse(mat, name="J"):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if not np.all(np.isfinite(mat)):
        raise SingularMatrixError(name, f"matrix {name} has non-finite entries")
    if np.linalg.cond(mat) > 1e13:
        raise SingularMatrixError(name)
    return np.linalg.inv(mat)
