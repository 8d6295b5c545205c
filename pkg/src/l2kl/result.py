from dataclasses import dataclass, field

import numpy as np

from .model import MvnParams, NormalParams


@dataclass
class FitResult:
    """Outcome of one fit.

    ``covariance`` is the plug-in sandwich ``J^{-1} M J^{-1}`` for
    ``sqrt(n) (theta_hat - theta_0)``, in the coordinates of ``theta``;
    divide by ``n`` (or use :attr:`stderr`) for finite-sample standard
    errors.
    """

    method: str
    theta: np.ndarray
    params: NormalParams | MvnParams
    n: int
    iterations: int
    converged: bool
    grad_norm: float
    J: np.ndarray | None = None
    M: np.ndarray | None = None
    covariance: np.ndarray | None = None
    param_names: tuple = ()
    extra: dict = field(default_factory=dict)

    @property
    def stderr(self):
        if self.covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None) / self.n)

    def to_dict(self):
        out = {
            "method": self.method,
            "n": self.n,
            "estimate": dict(zip(self.param_names, map(float, self.theta))),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "grad_norm": float(self.grad_norm),
        }
        if self.stderr is not None:
            out["stderr"] = dict(zip(self.param_names, map(float, self.stderr)))
        if isinstance(self.params, MvnParams):
            out["mu"] = self.params.mu.tolist()
            out["sigma_matrix"] = self.params.sigma_matrix.tolist()
        out.update(self.extra)
        return out
