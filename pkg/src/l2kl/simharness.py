"""Seeded Monte Carlo engine for checking asymptotic variances and
robustness of the estimators.

Replication ``r`` of a scenario with seed ``s`` draws from a generator
seeded by ``SeedSequence(s, spawn_key=(r,))``, so results do not depend
on how replications are scheduled across workers.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import asymptotics
from .errors import InvalidInputError, L2KLError
from .minl2 import fit_min_l2
from .ml import fit_ml_normal
from .model import MvnParams, NormalParams
from .robustkl import LocalFitSpec, fit_mvn_robust, fit_robust_kl
from .weights import WeightFunction

logger = logging.getLogger(__name__)

METHODS = ("ml", "l2_constant", "l2_exp_delta", "kl", "mvn_kl")
#: a scenario fails when more than this fraction of replications fail
FAILURE_THRESHOLD = 0.01


@dataclass(frozen=True)
class Contaminant:
    """Outlier distribution: a point mass at ``location`` or, with
    ``scale`` set, a normal component."""

    location: float | tuple = 10.0
    scale: float | None = None

    def draw(self, rng, shape):
        loc = np.asarray(self.location, dtype=float)
        if self.scale is None:
            return np.broadcast_to(loc, shape).copy()
        return loc + self.scale * rng.standard_normal(shape)


@dataclass(frozen=True)
class EstimatorSpec:
    method: str
    tuning: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown estimator {self.method!r}; choose from {METHODS}")
        if self.method in ("l2_exp_delta", "kl", "mvn_kl") and self.tuning is None:
            raise InvalidInputError(f"estimator {self.method} needs a tuning value")

    @property
    def label(self):
        return self.method if self.tuning is None else f"{self.method}({self.tuning:g})"


@dataclass(frozen=True)
class ScenarioSpec:
    true_model: NormalParams | MvnParams = NormalParams(0.0, 1.0)
    n: int = 2000
    reps: int = 1000
    seed: int = 0
    estimators: tuple = (EstimatorSpec("ml"),)
    epsilon: float = 0.0
    contaminant: Contaminant | None = None

    def __post_init__(self):
        if self.n < 10:
            raise InvalidInputError("n must be at least 10")
        if self.reps < 1:
            raise InvalidInputError("reps must be at least 1")
        if not 0 <= self.epsilon < 0.5:
            raise InvalidInputError("epsilon must lie in [0, 0.5)")
        if self.epsilon > 0 and self.contaminant is None:
            raise InvalidInputError("a contaminant is required when epsilon > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        if not self.estimators:
            raise InvalidInputError("at least one estimator is required")
        for est in self.estimators:
            if est.method != "mvn_kl" and isinstance(self.true_model, MvnParams):
                raise InvalidInputError(f"estimator {est.method} needs a univariate normal true model")

    @property
    def is_mvn(self):
        return isinstance(self.true_model, MvnParams)

    def param_names(self, est):
        if self.is_mvn or est.method == "mvn_kl":
            p = self.true_model.p if self.is_mvn else 1
            rows, cols = np.tril_indices(p)
            return [f"mu{i}" for i in range(p)] + [f"sigma{r}{c}" for r, c in zip(rows, cols)]
        return ["mu", "sigma"]

    def to_dict(self):
        tm = self.true_model
        model = ({"family": "mvn", "mu": tm.mu.tolist(), "sigma_matrix": tm.sigma_matrix.tolist()}
                 if self.is_mvn else {"family": "normal", "mu": tm.mu, "sigma": tm.sigma})
        cont = None
        if self.contaminant is not None:
            loc = self.contaminant.location
            cont = {"location": list(loc) if isinstance(loc, tuple) else loc, "scale": self.contaminant.scale}
        return {
            "true_model": model, "n": self.n, "reps": self.reps, "seed": int(self.seed),
            "epsilon": self.epsilon, "contaminant": cont,
            "estimators": [{"method": e.method, "tuning": e.tuning} for e in self.estimators],
        }


@dataclass
class EstimatorSummary:
    estimator: EstimatorSpec
    param_names: list
    mean: np.ndarray
    bias: np.ndarray
    n_var: np.ndarray
    theoretical: np.ndarray | None
    failures: int
    successes: int

    @property
    def failed(self):
        return self.failures > FAILURE_THRESHOLD * (self.failures + self.successes)

    def to_dict(self):
        def lst(a):
            return None if a is None else [float(v) for v in a]

        return {
            "estimator": self.estimator.label, "method": self.estimator.method,
            "tuning": self.estimator.tuning, "params": list(self.param_names),
            "mean": lst(self.mean), "bias": lst(self.bias), "n_var": lst(self.n_var),
            "theoretical_n_var": lst(self.theoretical),
            "failures": self.failures, "successes": self.successes, "failed": self.failed,
        }


@dataclass
class SimulationReport:
    spec: ScenarioSpec
    summaries: list
    #: per-estimator array (reps x params), NaN rows for failed fits
    estimates: dict = field(repr=False, default_factory=dict)

    @property
    def failed(self):
        return any(s.failed for s in self.summaries)

    def __getitem__(self, label):
        for s in self.summaries:
            if s.estimator.label == label or s.estimator.method == label:
                return s
        raise KeyError(label)

    def to_dict(self):
        return {
            "schema": 1, "scenario": self.spec.to_dict(),
            "estimators": [s.to_dict() for s in self.summaries], "failed": self.failed,
        }


def contaminate(sample, epsilon, contaminant, rng):
    """Replace each point independently with probability ``epsilon`` by a
    draw from ``contaminant`` (gross-error model)."""
    if not 0 <= epsilon < 0.5:
        raise InvalidInputError("epsilon must lie in [0, 0.5)")
    sample = np.array(sample, dtype=float, copy=True)
    if epsilon == 0:
        return sample
    mask = rng.random(sample.shape[0]) < epsilon
    draws = contaminant.draw(rng, sample.shape)
    sample[mask] = draws[mask]
    return sample


def replication_rng(seed, r):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(r),)))


def draw_sample(spec, rng):
    tm = spec.true_model
    if spec.is_mvn:
        z = rng.standard_normal((spec.n, tm.p))
        x = tm.mu + z @ tm.chol.T
    else:
        x = tm.mu + tm.sigma * rng.standard_normal(spec.n)
    if spec.epsilon > 0:
        x = contaminate(x, spec.epsilon, spec.contaminant, rng)
    return x


def _fit_one(est, x):
    m = est.method
    if m == "ml":
        return fit_ml_normal(x)
    if m == "l2_constant":
        return fit_min_l2(x)
    if m == "l2_exp_delta":
        return fit_min_l2(x, w=WeightFunction.exp_delta(est.tuning))
    if m == "kl":
        return fit_robust_kl(x, LocalFitSpec(k=est.tuning))
    return fit_mvn_robust(x if x.ndim > 1 else x[:, None], LocalFitSpec(k=est.tuning))


def _natural(fit, est, spec):
    if spec.is_mvn or est.method == "mvn_kl":
        par = fit.params
        rows, cols = np.tril_indices(par.p)
        return np.concatenate([par.mu, par.sigma_matrix[rows, cols]])
    return np.asarray(fit.theta, dtype=float)


def run_replication(spec, r):
    """Fit every estimator on replication ``r``; failed fits give ``None``."""
    x = draw_sample(spec, replication_rng(spec.seed, r))
    out = []
    for est in spec.estimators:
        try:
            fit = _fit_one(est, x)
        except (L2KLError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            logger.debug("replication %d, %s failed: %s", r, est.label, exc)
            out.append(None)
            continue
        out.append(_natural(fit, est, spec) if fit.converged else None)
    return out


def _run_chunk(spec, indices):
    return [run_replication(spec, r) for r in indices]


def theoretical_n_var(spec, est):
    """Asymptotic variances at the model, or ``None`` where undefined."""
    if spec.epsilon > 0 or spec.is_mvn or est.method == "mvn_kl":
        return None
    sigma = spec.true_model.sigma
    if est.method == "ml":
        return np.array(asymptotics.normal_ml_variances(sigma))
    if est.method == "l2_constant":
        return np.array(asymptotics.normal_l2_variances(sigma))
    if est.method == "l2_exp_delta":
        return np.array(asymptotics.normal_l2_variances(sigma, est.tuning))
    return np.array(asymptotics.normal_kl_variances(sigma, est.tuning))


def run_scenario(spec, workers=1):
    """Run every replication of ``spec`` and aggregate per estimator.

    ``workers > 1`` spreads replications over processes; the report is
    identical to a serial run.
    """
    if workers > 1 and spec.reps > 1:
        chunks = [list(c) for c in np.array_split(np.arange(spec.reps), min(workers * 4, spec.reps))]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [row for part in pool.map(_run_chunk, [spec] * len(chunks), chunks) for row in part]
    else:
        results = [run_replication(spec, r) for r in range(spec.reps)]

    summaries, estimates = [], {}
    for j, est in enumerate(spec.estimators):
        names = spec.param_names(est)
        arr = np.full((spec.reps, len(names)), np.nan)
        for r, row in enumerate(results):
            if row[j] is not None:
                arr[r] = row[j]
        ok = ~np.any(np.isnan(arr), axis=1)
        good = arr[ok]
        if spec.is_mvn or est.method == "mvn_kl":
            tm = spec.true_model
            if spec.is_mvn:
                rows, cols = np.tril_indices(tm.p)
                truth = np.concatenate([tm.mu, tm.sigma_matrix[rows, cols]])
            else:
                truth = np.array([tm.mu, tm.sigma**2])
        else:
            truth = spec.true_model.to_array()
        mean = good.mean(axis=0) if good.size else np.full(len(names), np.nan)
        n_var = spec.n * good.var(axis=0, ddof=1) if good.shape[0] > 1 else np.full(len(names), np.nan)
        summaries.append(EstimatorSummary(
            est, names, mean, mean - truth, n_var, theoretical_n_var(spec, est),
            int((~ok).sum()), int(ok.sum()),
        ))
        estimates[est.label] = arr
    return SimulationReport(spec, summaries, estimates)
