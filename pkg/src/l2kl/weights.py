"""Weight functions for minimum L2 fitting and smoothing kernels.

Weights are evaluated on the log scale: the data-driven exponential
weight grows like ``exp(delta z^2 / 2)`` and only its product with a
density is bounded, so products are formed as ``exp(log w + log f)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InvalidInputError
from .model import LOG_2PI
from .numerics import GAUSS_HERMITE, integrate, mad_scale, median


class DivergentIntegralError(InvalidInputError, ArithmeticError):
    """The Gaussian part of an integrand has non-positive precision."""


@dataclass(frozen=True)
class KernelSpec:
    """Normal kernel with bandwidth ``h``: ``K_h(u) = phi(u / h) / h``."""

    h: float
    kernel: str = "normal"

    def __post_init__(self):
        if self.kernel != "normal":
            raise InvalidInputError(f"unsupported kernel {self.kernel!r}")
        if not np.isfinite(self.h) or self.h <= 0:
            raise InvalidInputError(f"bandwidth must be positive, got {self.h}")

    def log_evaluate(self, u):
        v = np.asarray(u, dtype=float) / self.h
        return -0.5 * v * v - 0.5 * LOG_2PI - np.log(self.h)

    def __call__(self, u):
        return np.exp(self.log_evaluate(u))


@dataclass(frozen=True)
class WeightFunction:
    """Weight ``w(x)`` of the integrated squared error criterion.

    Build instances with :meth:`constant`, :meth:`kernel_local` or
    :meth:`exp_delta`. ``scale`` multiplies the whole weight; it never
    changes the fitted parameter but is kept so that property can be
    checked.
    """

    variant: str = "constant"
    x0: float | None = None
    kernel: KernelSpec | None = None
    delta: float | None = None
    mu_tilde: float | None = None
    sigma_tilde: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0 or not np.isfinite(self.scale):
            raise InvalidInputError("weight scale must be positive")
        if self.variant == "constant":
            return
        if self.variant == "kernel_local":
            if self.x0 is None or self.kernel is None or not np.isfinite(self.x0):
                raise InvalidInputError("kernel_local weight needs x0 and a kernel")
            return
        if self.variant == "exp_delta":
            if self.delta is None or not 0 <= self.delta < 1:
                raise InvalidInputError(f"delta must lie in [0, 1), got {self.delta}")
            if self.sigma_tilde is not None and not self.sigma_tilde > 0:
                raise InvalidInputError("sigma_tilde must be positive")
            return
        raise InvalidInputError(f"unknown weight variant {self.variant!r}")

    @classmethod
    def constant(cls, scale=1.0):
        return cls("constant", scale=scale)

    @classmethod
    def kernel_local(cls, x0, kernel, scale=1.0):
        if not isinstance(kernel, KernelSpec):
            kernel = KernelSpec(float(kernel))
        return cls("kernel_local", x0=float(x0), kernel=kernel, scale=scale)

    @classmethod
    def exp_delta(cls, delta, mu_tilde=None, sigma_tilde=None, scale=1.0):
        return cls("exp_delta", delta=float(delta), mu_tilde=mu_tilde,
                   sigma_tilde=sigma_tilde, scale=scale)

    @property
    def is_bound(self):
        return self.variant != "exp_delta" or (self.mu_tilde is not None and self.sigma_tilde is not None)

    def bind(self, data):
        """Fill missing preliminary estimates of an exp_delta weight
        from ``data`` (median and scaled MAD)."""
        if self.is_bound:
            return self
        mu_t = median(data) if self.mu_tilde is None else self.mu_tilde
        sig_t = mad_scale(data) if self.sigma_tilde is None else self.sigma_tilde
        if sig_t <= 0:
            raise DegenerateDataError("robust scale (MAD) of the data is zero")
        return WeightFunction.exp_delta(self.delta, mu_t, sig_t, self.scale)

    def log_value(self, x):
        x = np.asarray(x, dtype=float)
        base = np.log(self.scale)
        if self.variant == "constant":
            return np.full_like(x, base)
        if self.variant == "kernel_local":
            return base + self.kernel.log_evaluate(self.x0 - x)
        if not self.is_bound:
            raise InvalidInputError("exp_delta weight has no preliminary estimates; call bind(data)")
        z = (x - self.mu_tilde) / self.sigma_tilde
        return base + 0.5 * self.delta * z * z

    def __call__(self, x):
        return np.exp(self.log_value(x))

    def gaussian_factor(self):
        """``(center, precision)`` with ``w ∝ exp(-precision (x-center)^2 / 2)``."""
        if self.variant == "constant":
            return 0.0, 0.0
        if self.variant == "kernel_local":
            return self.x0, 1.0 / self.kernel.h**2
        if not self.is_bound:
            raise InvalidInputError("exp_delta weight has no preliminary estimates; call bind(data)")
        return self.mu_tilde, -self.delta / self.sigma_tilde**2


def integrand_hint(theta, model, w, density_power, weight_power=1):
    """Center and spread of the Gaussian part of ``w^a f_theta^b``.

    Falls back to the model's own scale hint when the model is not
    Gaussian in ``x``.
    """
    factor = model.gaussian_factor(theta)
    if factor is None:
        return model.scale_hint(theta)
    c_f, p_f = factor
    c_w, p_w = w.gaussian_factor() if w is not None else (0.0, 0.0)
    prec = density_power * p_f + weight_power * p_w
    if not prec > 0:
        raise DivergentIntegralError("weighted integral diverges: Gaussian precision is not positive")
    center = (density_power * p_f * c_f + weight_power * p_w * c_w) / prec
    return center, 1.0 / np.sqrt(prec)


def weighted_integral(fn, theta, model, w=None, density_power=1, weight_power=1, quad=GAUSS_HERMITE):
    """Integrate ``w(x)^a f_theta(x)^b fn(x)`` over the real line.

    ``fn`` maps an array of abscissae to an array with one leading row
    per abscissa (or is ``None`` for the bare product).
    """
    hint = integrand_hint(theta, model, w, density_power, weight_power)

    def integrand(x):
        log_fac = density_power * model.log_density(x, theta)
        if w is not None and weight_power:
            log_fac = log_fac + weight_power * w.log_value(x)
        fac = np.exp(log_fac)
        if fn is None:
            return fac
        vals = np.asarray(fn(x), dtype=float)
        return vals * fac.reshape(fac.shape + (1,) * (vals.ndim - 1))

    return integrate(integrand, hint, quad)
