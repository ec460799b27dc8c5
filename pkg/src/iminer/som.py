"""Self-organizing map used as the baseline clusterer."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SOMModel:
    rows: int
    cols: int
    vectors: np.ndarray  # (rows * cols, d), row-major over the grid

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must be at least 1x1")
        if vectors.ndim != 2 or vectors.shape[0] != self.rows * self.cols:
            raise ValueError(f"expected {self.rows * self.cols} model vectors, got shape {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("model vectors must be finite")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def coords(self) -> np.ndarray:
        r, c = np.divmod(np.arange(self.n_nodes), self.cols)
        return np.column_stack([r, c]).astype(np.float64)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "vectors": self.vectors.tolist()}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "SOMModel":
        return cls(int(data["rows"]), int(data["cols"]), np.asarray(data["vectors"], dtype=np.float64))


@dataclass(frozen=True)
class Schedule:
    """Linearly decaying learning rate and neighborhood radius over ``length`` steps."""

    length: int
    alpha_start: float = 1.0
    alpha_end: float = 0.01
    sigma_start: float = 1.0
    sigma_end: float = 0.5

    def _lerp(self, a, b, t):
        if self.length <= 1:
            return a
        return a + (b - a) * (t / (self.length - 1))

    def alpha(self, t: int) -> float:
        return self._lerp(self.alpha_start, self.alpha_end, t)

    def sigma(self, t: int) -> float:
        return self._lerp(self.sigma_start, self.sigma_end, t)

    @classmethod
    def default(cls, rows: int, cols: int, length: int) -> "Schedule":
        return cls(length=length, sigma_start=max(max(rows, cols) / 2.0, 0.5))


def winner(x, model: SOMModel) -> int:
    """Best-matching node; the lowest index wins ties."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != model.dim:
        raise ValueError(f"sample has dimension {x.shape[0]}, map has {model.dim}")
    diff = model.vectors - x
    return int(np.argmin(np.einsum("nd,nd->n", diff, diff)))


def neighborhood(model: SOMModel, c: int, alpha: float, sigma: float) -> np.ndarray:
    g = model.coords
    d2 = ((g - g[c]) ** 2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = alpha * np.exp(-d2 / (2.0 * sigma * sigma))
    h[c] = alpha
    return np.clip(np.nan_to_num(h, nan=0.0), 0.0, 1.0)


def som_step(model: SOMModel, x, t: int, schedule: Schedule) -> SOMModel:
    """``m_i <- m_i + h_ci(t) (x - m_i)`` with a Gaussian grid neighborhood."""
    if not 0 <= t < schedule.length:
        raise ValueError(f"step {t} outside schedule of length {schedule.length}")
    x = np.asarray(x, dtype=np.float64).ravel()
    c = winner(x, model)
    h = neighborhood(model, c, schedule.alpha(t), schedule.sigma(t))
    vectors = model.vectors + h[:, None] * (x - model.vectors)
    return SOMModel(model.rows, model.cols, vectors)


def init_model(data, rows: int, cols: int, rng: np.random.Generator) -> SOMModel:
    """Model vectors drawn uniformly inside the data's bounding box."""
    data = np.asarray(data, dtype=np.float64)
    lo, hi = data.min(axis=0), data.max(axis=0)
    return SOMModel(rows, cols, lo + (hi - lo) * rng.random((rows * cols, data.shape[1])))


def som_train(data, rows: int, cols: int, epochs: int = 10, seed: int = 0,
              schedule: Schedule | None = None, init: SOMModel | None = None) -> SOMModel:
    """Sequential training over a fresh shuffle of the samples each epoch."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] == 0:
        raise ValueError("cannot train a SOM on empty data")
    rng = np.random.default_rng(seed)
    model = init if init is not None else init_model(data, rows, cols, rng)
    n = data.shape[0]
    if schedule is None:
        schedule = Schedule.default(rows, cols, epochs * n)
    coords = model.coords
    vectors = np.array(model.vectors)
    t = 0
    for _ in range(epochs):
        for k in rng.permutation(n):
            if t >= schedule.length:
                break
            x = data[k]
            diff = vectors - x
            c = int(np.argmin(np.einsum("nd,nd->n", diff, diff)))
            alpha, sigma = schedule.alpha(t), schedule.sigma(t)
            h = alpha * np.exp(-((coords - coords[c]) ** 2).sum(axis=1) / (2.0 * sigma * sigma))
            vectors -= np.clip(h, 0.0, 1.0)[:, None] * diff
            t += 1
    return SOMModel(model.rows, model.cols, vectors)


def quantization_error(model: SOMModel, data) -> float:
    """Mean Euclidean distance from each sample to its best-matching node."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] == 0:
        raise ValueError("data is empty")
    diff = data[:, None, :] - model.vectors[None, :, :]
    return float(np.sqrt(np.einsum("knd,knd->kn", diff, diff).min(axis=1)).mean())


def assign_many(model: SOMModel, data) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    diff = data[:, None, :] - model.vectors[None, :, :]
    return np.argmin(np.einsum("knd,knd->kn", diff, diff), axis=1)
