"""End-to-end runs: data preparation, the evolutionary learner and its comparators."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, time, timedelta, timezone
from typing import Callable, Optional

import numpy as np

from . import evo, fcm, som, tune
from .evo import GAConfig
from .ingest import (FeatureTable, TrafficSeries, build_features, design_matrix, normalize, reindex_by_cluster,
                     split, to_daily)
from .metrics import EvalReport, corr_coef, rmse
from .tsfis import TSModel

METHODS = ("i-miner", "fcm-only", "som-baseline", "fis-only")

# Comparators train with one fixed descent setting for as many epochs as the
# evolutionary run spends on its final individual's lineage.
BASELINE_LR = 0.05
BASELINE_MOMENTUM = 0.9
BASELINE_TNORM_P = 1.0
FCM_ONLY_CLUSTERS = 3
SOM_GRID = {"hourly": (2, 2), "daily": (3, 3)}


def baseline_epochs(config: GAConfig) -> int:
    return config.gd_epochs * config.max_generations


def prepare(series: TrafficSeries, granularity: str, boundary: datetime,
            horizon: int = 1) -> tuple[FeatureTable, FeatureTable]:
    """Feature tables for one horizon, split at ``boundary`` and scaled on the training rows."""
    if granularity == "daily" and series.granularity == "hourly":
        series = to_daily(series)
    elif granularity != series.granularity:
        raise ValueError(f"cannot build {granularity} features from a {series.granularity} series")
    return prepare_table(build_features(series, horizon), boundary)


def prepare_table(table: FeatureTable, boundary: datetime) -> tuple[FeatureTable, FeatureTable]:
    train, test = split(table, boundary)
    train = normalize(train)
    return train, normalize(test, train.scaler)


def default_boundary(table: FeatureTable, days: int = 7) -> datetime:
    """Midnight starting the final ``days`` calendar days covered by ``table``."""
    if table.starts is None:
        raise ValueError("table has no timestamps")
    last = max(table.starts)
    return datetime.combine(last.date() - timedelta(days=days - 1), time(0), tzinfo=timezone.utc)


@dataclass(frozen=True)
class Clusterer:
    """A trained clusterer usable on both splits."""

    n_clusters: int
    assign: Callable[[np.ndarray], np.ndarray]
    model: object


@dataclass(frozen=True)
class RunResult:
    method: str
    horizon: str
    model: TSModel
    train: FeatureTable  # re-indexed, in model order
    test: FeatureTable
    n_clusters: int
    report: EvalReport
    train_pred: np.ndarray
    test_pred: np.ndarray
    history: Optional[evo.EvolutionHistory] = None
    chromosome: Optional[evo.Chromosome] = None
    clusters: Optional[object] = None


def _fit_and_report(method, horizon, model, train, test, n_clusters, history=None, chromosome=None, clusters=None):
    Xtr, dtr = design_matrix(train, n_clusters)
    Xte, dte = design_matrix(test, n_clusters)
    ytr, yte = model.predict(Xtr), model.predict(Xte)
    try:
        cc = corr_coef(yte, dte)
    except ValueError:
        cc = math.nan
    report = EvalReport(method, horizon, rmse(ytr, dtr), rmse(yte, dte), cc, model.n_rules,
                        n_clusters if n_clusters else None)
    return RunResult(method, horizon, model, train, test, n_clusters, report, ytr, yte, history, chromosome, clusters)


def apply_clusterer(train: FeatureTable, test: FeatureTable, cl: Clusterer) -> tuple[FeatureTable, FeatureTable]:
    tr = reindex_by_cluster(train, cl.assign(evo.cluster_space(train)))
    te = reindex_by_cluster(test, cl.assign(evo.cluster_space(test)), start=int(tr.raw_index.max()) + 1)
    return tr, te


def train_descent_only(train: FeatureTable, n_clusters: int, config: GAConfig) -> TSModel:
    """Full grid rule base tuned by momentum descent with the fixed comparator setting."""
    X, d = design_matrix(train, n_clusters)
    model = evo.base_model(config, BASELINE_TNORM_P)
    return tune.fine_tune(model, (X, d), BASELINE_LR, BASELINE_MOMENTUM, baseline_epochs(config))


def fcm_clusterer(train: FeatureTable, c: int, seed: int) -> Clusterer:
    """FCM seeded with ``c`` distinct training points; labels ordered by first coordinate."""
    pts = evo.cluster_space(train)
    uniq = np.unique(pts, axis=0)
    if len(uniq) < c:
        raise ValueError(f"{len(uniq)} distinct points cannot seed {c} clusters")
    rng = np.random.default_rng(seed)
    model = evo.sort_clusters(fcm.fcm_run(pts, uniq[rng.choice(len(uniq), size=c, replace=False)]))
    return Clusterer(c, lambda p: fcm.assign_many(model, p), model)


def som_clusterer(train: FeatureTable, grid: tuple[int, int], seed: int) -> Clusterer:
    model = som.som_train(evo.cluster_space(train), grid[0], grid[1], seed=seed)
    return Clusterer(model.n_nodes, lambda p: som.assign_many(model, p), model)


def run_method(method: str, train: FeatureTable, test: FeatureTable, config: GAConfig, horizon: str,
               log=None) -> RunResult:
    if method == "i-miner":
        res = evo.evolve(train, test, config, log=log)
        te = evo.prepare_test(test, res.clusters, int(res.train.raw_index.max()) + 1)
        return _fit_and_report(method, horizon, res.model, res.train, te, res.clusters.n_clusters,
                               res.history, res.best, res.clusters)
    if method == "fis-only":
        model = train_descent_only(train, 0, config)
        return _fit_and_report(method, horizon, model, train, test, 0)
    if method == "fcm-only":
        cl = fcm_clusterer(train, FCM_ONLY_CLUSTERS, config.seed)
    elif method == "som-baseline":
        cl = som_clusterer(train, SOM_GRID.get(horizon, (2, 2)), config.seed)
    else:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    tr, te = apply_clusterer(train, test, cl)
    model = train_descent_only(tr, cl.n_clusters, config)
    return _fit_and_report(method, horizon, model, tr, te, cl.n_clusters, clusters=cl.model)


def time_order(table: FeatureTable, values) -> np.ndarray:
    """Reorder per-row ``values`` of a re-indexed table back into time order."""
    values = np.asarray(values)
    if table.starts is not None:
        key = np.array([s.timestamp() for s in table.starts])
    else:
        key = np.arange(len(table))
    return values[np.argsort(key, kind="stable")]


def predict_table(model: TSModel, table: FeatureTable, n_clusters: int) -> np.ndarray:
    X, _ = design_matrix(table, n_clusters)
    return model.predict(X)

