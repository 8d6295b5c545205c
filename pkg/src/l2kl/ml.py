"""Maximum likelihood baselines (closed form) with plug-in sandwich."""

import numpy as np

from .asymptotics import empirical_sandwich
from .errors import DegenerateDataError, InvalidInputError
from .model import MvnModel, MvnParams, NormalModel, NormalParams
from .result import FitResult


def fit_ml_normal(data):
    x = np.asarray(data, dtype=float).reshape(-1)
    if x.size < 2 or not np.all(np.isfinite(x)):
        raise InvalidInputError("need at least 2 finite observations")
    mu = float(x.mean())
    sigma = float(np.sqrt(np.mean((x - mu) ** 2)))
    if sigma <= 0:
        raise DegenerateDataError("all observations are equal")
    theta = np.array([mu, sigma])
    model = NormalModel()
    J = -model.score_deriv(x, theta).mean(axis=0)
    M, cov = empirical_sandwich(J, model.score(x, theta))
    return FitResult("ml", theta, NormalParams(mu, sigma), x.size, 0, True, 0.0,
                     J, M, cov, ("mu", "sigma"))


def fit_ml_mvn(data):
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    if n < p + 1 or not np.all(np.isfinite(x)):
        raise InvalidInputError(f"need at least {p + 1} finite observations")
    mu = x.mean(axis=0)
    cov = (x - mu).T @ (x - mu) / n
    try:
        params = MvnParams.from_matrix(mu, cov)
    except InvalidInputError as exc:
        raise DegenerateDataError("sample covariance is singular") from exc
    model = MvnModel(p)
    theta = params.to_vector()
    J = -model.score_deriv(x, theta).mean(axis=0)
    M, sand = empirical_sandwich(J, model.score(x, theta))
    return FitResult("ml", theta, params, n, 0, True, 0.0, J, M, sand, mvn_param_names(p))


def mvn_param_names(p):
    rows, cols = np.tril_indices(p)
    chol = [f"logL{r}{c}" if r == c else f"L{r}{c}" for r, c in zip(rows, cols)]
    return tuple(f"mu{i}" for i in range(p)) + tuple(chol)
