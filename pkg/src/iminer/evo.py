"""Hierarchical evolutionary learner for the clustering + TS-FIS pipeline.

A chromosome carries three layers:

1. ``C_max`` candidate cluster seeds, each with an activation bit;
2. one presence bit per grid-partition rule;
3. the descent learning rate, momentum and the T-norm parameter.

Fitness decodes a chromosome, clusters the training rows with fuzzy
c-means from the decoded seeds, re-indexes the rows by cluster, fine-tunes
the decoded rule base and reports the training RMSE.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import fcm, kernels, tune
from .fcm import ClusterModel
from .ingest import FeatureTable, design_matrix, reindex_by_cluster
from .metrics import rmse
from .tsfis import TSModel, grid_partition

N_INPUTS = 4  # index, requests, bytes, cluster
LR_RANGE = (1e-4, 0.5)
MOMENTUM_RANGE = (0.0, 0.99)
TNORM_RANGE = (0.01, 10.0)
HISTORY_COLUMNS = ("generation", "train_rmse", "test_rmse", "rules", "clusters")

# per-gene mutation probability relative to the base rate
LAYER1_SCALE = 1.0
LAYER2_SCALE = 0.5
LAYER3_SCALE = 0.25


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 30
    max_generations: int = 35
    mfs_per_input: int = 3
    gd_epochs: int = 10
    ranking_pressure: float = 0.50
    elitism_fraction: float = 0.05
    mutation_rate_start: float = 0.50
    mutation_shape_b: float = 5.0
    C_max: int = 12
    target_error: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        if self.mfs_per_input < 1:
            raise ValueError("mfs_per_input must be >= 1")
        if self.gd_epochs < 0:
            raise ValueError("gd_epochs must be >= 0")
        if not 0.0 <= self.ranking_pressure <= 1.0:
            raise ValueError("ranking_pressure must lie in [0, 1]")
        if not 0.0 < self.elitism_fraction < 1.0:
            raise ValueError("elitism_fraction must lie in (0, 1)")
        if not 0.0 <= self.mutation_rate_start <= 1.0:
            raise ValueError("mutation_rate_start must lie in [0, 1]")
        if self.mutation_shape_b <= 0:
            raise ValueError("mutation_shape_b must be positive")
        if self.C_max < 2:
            raise ValueError("C_max must be >= 2")

    @property
    def elite_count(self) -> int:
        return max(1, math.ceil(self.elitism_fraction * self.population_size - 1e-12))

    @property
    def n_rules(self) -> int:
        return self.mfs_per_input**N_INPUTS

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class Chromosome:
    active: np.ndarray  # (C_max,) bool
    centers: np.ndarray  # (C_max, d)
    rules: np.ndarray  # (n_rules,) bool
    lr: float
    momentum: float
    tnorm_p: float

    def __post_init__(self):
        active = np.array(self.active, dtype=bool)
        centers = np.array(self.centers, dtype=np.float64)
        rules = np.array(self.rules, dtype=bool)
        if centers.ndim != 2 or centers.shape[0] != active.shape[0]:
            raise ValueError("one center row per activation bit is required")
        for name, arr in (("active", active), ("centers", centers), ("rules", rules)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("lr", "momentum", "tnorm_p"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    @property
    def n_rules(self) -> int:
        return int(self.rules.sum())

    def __eq__(self, other):
        if not isinstance(other, Chromosome):
            return NotImplemented
        return (np.array_equal(self.active, other.active) and np.array_equal(self.centers, other.centers)
                and np.array_equal(self.rules, other.rules)
                and (self.lr, self.momentum, self.tnorm_p) == (other.lr, other.momentum, other.tnorm_p))

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "active": self.active.astype(int).tolist(),
            "centers": self.centers.tolist(),
            "rules": self.rules.astype(int).tolist(),
            "lr": self.lr,
            "momentum": self.momentum,
            "tnorm_p": self.tnorm_p,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "Chromosome":
        return cls(data["active"], data["centers"], data["rules"], data["lr"], data["momentum"], data["tnorm_p"])


def check_chromosome(chr: Chromosome, bounds, config: GAConfig) -> None:
    """Raise ``ValueError`` if ``chr`` breaks any structural or range invariant."""
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    if chr.active.shape != (config.C_max,):
        raise ValueError(f"expected {config.C_max} center slots, got {chr.active.shape[0]}")
    if chr.centers.shape[1] != lo.shape[0]:
        raise ValueError(f"centers have dimension {chr.centers.shape[1]}, bounds {lo.shape[0]}")
    if chr.rules.shape != (config.n_rules,):
        raise ValueError(f"expected {config.n_rules} rule bits, got {chr.rules.shape[0]}")
    if chr.n_active < 2:
        raise ValueError("at least 2 centers must be active")
    if chr.n_rules < 1:
        raise ValueError("at least 1 rule bit must be set")
    if np.any(chr.centers < lo) or np.any(chr.centers > hi):
        raise ValueError("center coordinates leave the data bounding box")
    if not LR_RANGE[0] <= chr.lr <= LR_RANGE[1]:
        raise ValueError(f"learning rate {chr.lr} outside {LR_RANGE}")
    if not MOMENTUM_RANGE[0] <= chr.momentum <= MOMENTUM_RANGE[1]:
        raise ValueError(f"momentum {chr.momentum} outside {MOMENTUM_RANGE}")
    if not 0.0 < chr.tnorm_p <= TNORM_RANGE[1]:
        raise ValueError(f"T-norm parameter {chr.tnorm_p} outside (0, {TNORM_RANGE[1]}]")


def cluster_space(table: FeatureTable) -> np.ndarray:
    """Points clustered by the first layer: the (requests, bytes) columns."""
    return np.column_stack([table.requests, table.bytes])


def data_bounds(points) -> tuple[np.ndarray, np.ndarray]:
    points = np.asarray(points, dtype=np.float64)
    lo, hi = points.min(axis=0), points.max(axis=0)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("data bounds must be finite")
    return lo, hi


def init_population(config: GAConfig, bounds, rng: np.random.Generator) -> list[Chromosome]:
    """Uniform seeds in the box, all slots and rules on, uniform layer-3 genes."""
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("bounds must be finite")
    pop = []
    for _ in range(config.population_size):
        centers = lo + (hi - lo) * rng.random((config.C_max, lo.shape[0]))
        pop.append(Chromosome(
            active=np.ones(config.C_max, dtype=bool),
            centers=centers,
            rules=np.ones(config.n_rules, dtype=bool),
            lr=rng.uniform(*LR_RANGE),
            momentum=rng.uniform(*MOMENTUM_RANGE),
            tnorm_p=rng.uniform(*TNORM_RANGE),
        ))
    return pop


def encode(chr: Chromosome) -> np.ndarray:
    """Flat real vector: activation bits, center coordinates, rule bits, layer-3 genes."""
    return np.concatenate([chr.active.astype(np.float64), chr.centers.ravel(),
                           chr.rules.astype(np.float64), [chr.lr, chr.momentum, chr.tnorm_p]])


def from_vector(vec, config: GAConfig, dim: int) -> Chromosome:
    vec = np.asarray(vec, dtype=np.float64)
    c, r = config.C_max, config.n_rules
    if vec.shape != (c + c * dim + r + 3,):
        raise ValueError(f"genome length {vec.shape[0]} does not match the configuration")
    return Chromosome(vec[:c] > 0.5, vec[c:c + c * dim].reshape(c, dim), vec[c + c * dim:c + c * dim + r] > 0.5,
                      vec[-3], vec[-2], vec[-1])


@dataclass(frozen=True)
class Decoded:
    init_centers: np.ndarray
    rule_indices: np.ndarray
    lr: float
    momentum: float
    tnorm_p: float


def decode(chr: Chromosome, config: GAConfig, bounds=None) -> Decoded:
    if bounds is None:
        bounds = (chr.centers.min(axis=0), chr.centers.max(axis=0))
    check_chromosome(chr, bounds, config)
    return Decoded(chr.centers[chr.active].copy(), np.flatnonzero(chr.rules), chr.lr, chr.momentum, chr.tnorm_p)


def sort_clusters(model: ClusterModel) -> ClusterModel:
    """Relabel clusters in ascending order of their first coordinate."""
    order = np.lexsort(model.centers.T[::-1])
    mem = model.memberships[order] if model.memberships.shape[0] == model.n_clusters else model.memberships
    return replace(model, centers=model.centers[order], memberships=mem)


@dataclass(frozen=True)
class Evaluation:
    """Everything fitness builds for one chromosome."""

    fitness: float
    model: Optional[TSModel] = None
    clusters: Optional[ClusterModel] = None
    train: Optional[FeatureTable] = None

    @property
    def n_rules(self) -> int:
        return 0 if self.model is None else self.model.n_rules

    @property
    def n_clusters(self) -> int:
        return 0 if self.clusters is None else self.clusters.n_clusters


def base_model(config: GAConfig, tnorm_p: float = 1.0) -> TSModel:
    return grid_partition(N_INPUTS, config.mfs_per_input, tnorm_p=tnorm_p)


def evaluate_chromosome(chr: Chromosome, train: FeatureTable, config: GAConfig) -> Evaluation:
    """Decode, cluster, re-index, build and fine-tune; fitness is the training RMSE.

    Clustering failures (degenerate seeds) and non-finite outputs score ``inf``.
    """
    if train.scaler is None:
        raise ValueError("fitness needs a normalized training table")
    dec = decode(chr, config)
    try:
        clusters = sort_clusters(fcm.fcm_run(cluster_space(train), dec.init_centers))
    except fcm.DegenerateCentersError:
        return Evaluation(math.inf)
    labels = np.argmax(clusters.memberships, axis=0)
    table = reindex_by_cluster(train, labels)
    X, d = design_matrix(table, clusters.n_clusters)
    model = base_model(config, dec.tnorm_p).subset(dec.rule_indices)
    model = tune.fine_tune(model, (X, d), dec.lr, dec.momentum, config.gd_epochs)
    err = tune.training_error(model, (X, d))
    score = math.sqrt(err / len(d)) if math.isfinite(err) else math.inf
    if math.isfinite(score):
        # recompute through the public metric so fitness and reports agree exactly
        score = rmse(model.predict(X), d)
    return Evaluation(score, model, clusters, table)


def fitness(chr: Chromosome, train: FeatureTable, config: GAConfig) -> float:
    return evaluate_chromosome(chr, train, config).fitness


def prepare_test(test: FeatureTable, clusters: ClusterModel, start: int) -> FeatureTable:
    """Assign test rows with the training clusters and number them from ``start``."""
    labels = fcm.assign_many(clusters, cluster_space(test))
    return reindex_by_cluster(test, labels, start=start)


def test_rmse(evaluation: Evaluation, test: FeatureTable) -> float:
    if evaluation.model is None:
        return math.inf
    start = int(evaluation.train.raw_index.max()) + 1
    table = prepare_test(test, evaluation.clusters, start)
    X, d = design_matrix(table, evaluation.n_clusters)
    y, _ = kernels.fis_forward(X, evaluation.model.centers, evaluation.model.widths, evaluation.model.masks,
                                    evaluation.model.coefs, evaluation.model.tnorm_p)
    return rmse(y, d) if np.all(np.isfinite(y)) else math.inf


def rank_probabilities(fitnesses, pressure: float) -> np.ndarray:
    """Linear ranking with ``s = 1 + pressure``; lower fitness ranks higher, ties share."""
    f = np.asarray(fitnesses, dtype=np.float64)
    n = f.size
    if n == 1:
        return np.ones(1)
    s = 1.0 + pressure
    # position 0 = worst; ties take the mean of their positions
    order = np.argsort(-f, kind="stable")
    pos = np.empty(n)
    pos[order] = np.arange(n, dtype=np.float64)
    key = np.where(np.isnan(f), np.inf, f)
    for v in np.unique(key):
        tie = key == v
        pos[tie] = pos[tie].mean()
    p = (2.0 - s) / n + 2.0 * pos * (s - 1.0) / (n * (n - 1.0))
    return p / p.sum()


def rank_select(fitnesses, pressure: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``count`` parents drawn with replacement under linear ranking."""
    if count == 0:
        return np.empty(0, dtype=np.intp)
    p = rank_probabilities(fitnesses, pressure)
    return rng.choice(p.size, size=count, replace=True, p=p)


def mutation_step(t: float, t_max: float, z: float, b_shape: float, gamma: float) -> float:
    """``z * (1 - gamma ** ((1 - t / t_max) ** b_shape))``; shrinks to 0 as ``t -> t_max``."""
    return z * (1.0 - gamma ** ((1.0 - t / t_max) ** b_shape))


def mutate_gene(x: float, a: float, b: float, t: float, t_max: float, b_shape: float,
                gamma: float, omega: int) -> float:
    """Non-uniform mutation of ``x`` in ``[a, b]``: up when ``omega == 0``, down otherwise."""
    if not a <= x <= b:
        raise ValueError(f"gene {x} outside [{a}, {b}]")
    if not 0 <= t <= t_max or t_max <= 0:
        raise ValueError(f"need 0 <= t <= t_max with t_max > 0, got t={t}, t_max={t_max}")
    if omega == 0:
        out = x + mutation_step(t, t_max, b - x, b_shape, gamma)
    else:
        out = x - mutation_step(t, t_max, x - a, b_shape, gamma)
    return min(max(out, a), b)


def _repair(active, rules, rng):
    active, rules = active.copy(), rules.copy()
    while active.sum() < 2:
        active[rng.choice(np.flatnonzero(~active))] = True
    if not rules.any():
        rules[rng.integers(rules.size)] = True
    return active, rules


def crossover(p1: Chromosome, p2: Chromosome, rng: np.random.Generator) -> tuple[Chromosome, Chromosome]:
    """Per-gene arithmetic blend of real genes, uniform exchange of bits."""
    if p1.centers.shape != p2.centers.shape or p1.rules.shape != p2.rules.shape:
        raise ValueError("parents have different layouts")
    g1 = np.concatenate([p1.centers.ravel(), [p1.lr, p1.momentum, p1.tnorm_p]])
    g2 = np.concatenate([p2.centers.ravel(), [p2.lr, p2.momentum, p2.tnorm_p]])
    beta = rng.random(g1.size)
    r1 = beta * g1 + (1.0 - beta) * g2
    r2 = (1.0 - beta) * g1 + beta * g2
    swap_a = rng.random(p1.active.size) < 0.5
    swap_r = rng.random(p1.rules.size) < 0.5
    a1, a2 = np.where(swap_a, p2.active, p1.active), np.where(swap_a, p1.active, p2.active)
    b1, b2 = np.where(swap_r, p2.rules, p1.rules), np.where(swap_r, p1.rules, p2.rules)
    shape = p1.centers.shape
    children = []
    for r, a, b in ((r1, a1, b1), (r2, a2, b2)):
        a, b = _repair(a, b, rng)
        children.append(Chromosome(a, r[:-3].reshape(shape), b, r[-3], r[-2], r[-1]))
    return children[0], children[1]


def mutate(chr: Chromosome, t: float, t_max: float, config: GAConfig, bounds, rng: np.random.Generator) -> Chromosome:
    """Non-uniform mutation of real genes and bit flips, scaled per layer.

    Center coordinates mutate with probability ``rate``, rule bits flip with
    ``rate * 0.5`` and layer-3 genes mutate with ``rate * 0.25``; an
    activation bit flips with ``rate / C_max``.
    """
    rate = config.mutation_rate_start
    b_shape = config.mutation_shape_b
    lo, hi = (np.asarray(v, dtype=np.float64) for v in bounds)

    def gene(x, a, b):
        return mutate_gene(x, a, b, t, t_max, b_shape, rng.random(), int(rng.integers(2)))

    centers = np.array(chr.centers)
    hit = rng.random(centers.shape) < rate * LAYER1_SCALE
    for i, k in zip(*np.nonzero(hit)):
        centers[i, k] = gene(centers[i, k], lo[k], hi[k])
    active = chr.active ^ (rng.random(chr.active.size) < rate / config.C_max)
    rules = chr.rules ^ (rng.random(chr.rules.size) < rate * LAYER2_SCALE)
    genes = [chr.lr, chr.momentum, chr.tnorm_p]
    for k, (a, b) in enumerate((LR_RANGE, MOMENTUM_RANGE, TNORM_RANGE)):
        if rng.random() < rate * LAYER3_SCALE:
            genes[k] = gene(min(max(genes[k], a), b), a, b)
    active, rules = _repair(active, rules, rng)
    return Chromosome(active, centers, rules, *genes)


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    train_rmse: float
    test_rmse: float
    rules: int
    clusters: int


@dataclass
class EvolutionHistory:
    records: list[GenerationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, rec: GenerationRecord) -> None:
        self.records.append(rec)

    @property
    def train_rmse(self) -> np.ndarray:
        return np.array([r.train_rmse for r in self.records])

    @property
    def test_rmse(self) -> np.ndarray:
        return np.array([r.test_rmse for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for r in self.records:
            w.writerow([r.generation, repr(r.train_rmse), repr(r.test_rmse), r.rules, r.clusters])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvolutionHistory":
        return cls([GenerationRecord(int(r["generation"]), float(r["train_rmse"]), float(r["test_rmse"]),
                                     int(r["rules"]), int(r["clusters"]))
                    for r in csv.DictReader(io.StringIO(text))])


@dataclass(frozen=True)
class EvolutionResult:
    best: Chromosome
    model: TSModel
    clusters: ClusterModel
    history: EvolutionHistory
    train: FeatureTable
    fitness: float


def evolve(train: FeatureTable, test: Optional[FeatureTable], config: GAConfig,
           rng: Optional[np.random.Generator] = None, log=None) -> EvolutionResult:
    """Generational loop with elitism, ranking selection, crossover and mutation.

    Elites carry their evaluation forward unchanged, so the best training
    RMSE never rises. Stops after ``max_generations`` or once the best
    fitness reaches ``target_error``. ``test`` only feeds the history.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    bounds = data_bounds(cluster_space(train))
    population = init_population(config, bounds, rng)
    evals: list[Optional[Evaluation]] = [None] * len(population)
    history = EvolutionHistory()
    k = config.elite_count
    n = config.population_size

    for gen in range(config.max_generations):
        for i, chr in enumerate(population):
            if evals[i] is None:
                evals[i] = evaluate_chromosome(chr, train, config)
        fit = np.array([e.fitness for e in evals])
        order = np.argsort(fit, kind="stable")
        best = evals[order[0]]
        trmse = test_rmse(best, test) if test is not None else math.nan
        history.append(GenerationRecord(gen + 1, best.fitness, trmse, best.n_rules, best.n_clusters))
        if log is not None:
            log(f"generation {gen + 1}: train {best.fitness:.6f} test {trmse:.6f} "
                f"rules {best.n_rules} clusters {best.n_clusters}")
        if config.target_error is not None and best.fitness <= config.target_error:
            break
        if gen == config.max_generations - 1:
            break

        next_pop = [population[j] for j in order[:k]]
        next_evals: list[Optional[Evaluation]] = [evals[j] for j in order[:k]]
        parents = rank_select(fit, config.ranking_pressure, n - k + ((n - k) % 2), rng)
        for a, b in zip(parents[0::2], parents[1::2]):
            for child in crossover(population[a], population[b], rng):
                if len(next_pop) < n:
                    next_pop.append(mutate(child, gen + 1, config.max_generations, config, bounds, rng))
                    next_evals.append(None)
        population, evals = next_pop, next_evals

    fit = np.array([e.fitness for e in evals])
    i = int(np.argmin(fit))
    best = evals[i]
    if best.model is None:
        raise RuntimeError("no chromosome produced a finite fitness")
    return EvolutionResult(population[i], best.model, best.clusters, history, best.train, best.fitness)

