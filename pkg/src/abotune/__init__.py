"""Asynchronous Bayesian autotuning with transfer-learned sampling priors."""

from .acquisition import Optimizer, lcb
from .executor import RealClock, SearchBudget, VirtualClock, evaluate_with_timeout, run_search
from .history import EvaluationRecord, SearchHistory, find_best, read_history_csv
from .metrics import (
    BestTrace,
    MetricsReport,
    best_trace,
    improvement_metrics,
    mean_best,
    metrics_report,
    search_speedup,
    worker_utilization,
)
from .priors import ComposedPrior, GaussianPrior, UniformPrior, VaePrior
from .space import Parameter, ParameterSpace, space_cardinality
from .surrogate import GaussianProcessModel, RandomForestModel, RandomModel
from .transfer import HistoryTable, compose_prior, fit_vae_prior, gaussian_prior, select_top_quantile
from .tvae import TvaeConfig, TvaeModel, fit_tvae
from .workloads import SurrogateWorkload, SyntheticWorkload, fit_surrogate_workload, load_fixture

__all__ = [
    "BestTrace",
    "ComposedPrior",
    "EvaluationRecord",
    "GaussianPrior",
    "GaussianProcessModel",
    "HistoryTable",
    "MetricsReport",
    "Optimizer",
    "Parameter",
    "ParameterSpace",
    "RandomForestModel",
    "RandomModel",
    "RealClock",
    "SearchBudget",
    "SearchHistory",
    "SurrogateWorkload",
    "SyntheticWorkload",
    "TvaeConfig",
    "TvaeModel",
    "UniformPrior",
    "VaePrior",
    "VirtualClock",
    "best_trace",
    "compose_prior",
    "evaluate_with_timeout",
    "find_best",
    "fit_surrogate_workload",
    "fit_tvae",
    "fit_vae_prior",
    "gaussian_prior",
    "improvement_metrics",
    "lcb",
    "load_fixture",
    "mean_best",
    "metrics_report",
    "read_history_csv",
    "run_search",
    "search_speedup",
    "select_top_quantile",
    "space_cardinality",
    "worker_utilization",
]
