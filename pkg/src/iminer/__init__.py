"""Web usage mining with evolutionary fuzzy clustering and TS fuzzy inference."""

from __future__ import annotations

from .evo import Chromosome, GAConfig, evolve
from .fcm import ClusterModel, fcm_run
from .ingest import FeatureTable, TrafficSeries, aggregate, build_features, parse_log_line
from .kernels import BACKEND
from .metrics import EvalReport, compare, corr_coef, polyfit_trend, rmse
from .som import SOMModel, som_train
from .synth import TrafficProfile, generate
from .tsfis import TSModel, grid_partition, infer
from .tune import fine_tune

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Chromosome", "ClusterModel", "EvalReport", "FeatureTable", "GAConfig", "SOMModel",
    "TSModel", "TrafficProfile", "TrafficSeries", "aggregate", "build_features", "compare", "corr_coef",
    "evolve", "fcm_run", "fine_tune", "generate", "grid_partition", "infer", "parse_log_line",
    "polyfit_trend", "rmse", "som_train",
]
