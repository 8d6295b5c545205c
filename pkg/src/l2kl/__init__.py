"""Minimum weighted L2 and robust (localized) Kullback-Leibler estimation
of parametric models, with influence functions, sandwich covariances and
a Monte Carlo harness."""

from .asymptotics import (
    AsymptoticReport, kl_influence, kl_jh_mh, l2_influence, l2_J, l2_M, normal_kl_variances,
    normal_l2_variances, sandwich,
)
from .errors import (
    DegenerateDataError, InvalidInputError, L2KLError, QuadratureError, SingularMatrixError, SolverError,
)
from .minl2 import fit_min_l2, q_objective, v_score
from .ml import fit_ml_mvn, fit_ml_normal
from .model import MvnModel, MvnParams, NormalModel, NormalParams, ParametricModel
from .numerics import QuadratureSpec, SolverConfig, integrate, mad_scale, median, newton_solve
from .result import FitResult
from .robustkl import (
    LocalFitSpec, fit_mvn_robust, fit_robust_kl, local_log_likelihood, localized_kl_distance,
    mvn_local_criterion, normal_local_criterion,
)
from .simharness import Contaminant, EstimatorSpec, ScenarioSpec, contaminate, run_scenario
from .weights import KernelSpec, WeightFunction

__version__ = "0.1.0"

__all__ = [
    "AsymptoticReport", "kl_influence", "kl_jh_mh", "l2_influence", "l2_J", "l2_M",
    "normal_kl_variances", "normal_l2_variances", "sandwich", "DegenerateDataError",
    "InvalidInputError", "L2KLError", "QuadratureError", "SingularMatrixError", "SolverError",
    "fit_min_l2", "q_objective", "v_score", "fit_ml_mvn", "fit_ml_normal", "MvnModel", "MvnParams",
    "NormalModel", "NormalParams", "ParametricModel", "QuadratureSpec", "SolverConfig",
    "integrate", "mad_scale", "median", "newton_solve", "FitResult", "LocalFitSpec",
    "fit_mvn_robust", "fit_robust_kl", "local_log_likelihood", "localized_kl_distance",
    "mvn_local_criterion", "normal_local_criterion", "Contaminant", "EstimatorSpec",
    "ScenarioSpec", "contaminate", "run_scenario", "KernelSpec", "WeightFunction",
]
