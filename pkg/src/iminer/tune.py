"""Gradient-descent fine-tuning of TS-FIS premise and consequent parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .tsfis import TSModel

MIN_WIDTH = 1e-4


@dataclass(frozen=True)
class GradientVector:
    """dE/dtheta laid out like the model: MF centers/widths and rule consequents."""

    centers: np.ndarray
    widths: np.ndarray
    coefs: np.ndarray

    def __add__(self, other: "GradientVector") -> "GradientVector":
        return GradientVector(self.centers + other.centers, self.widths + other.widths, self.coefs + other.coefs)

    def __mul__(self, k: float) -> "GradientVector":
        return GradientVector(self.centers * k, self.widths * k, self.coefs * k)

    __rmul__ = __mul__

    @classmethod
    def zeros_like(cls, model: TSModel) -> "GradientVector":
        return cls(np.zeros_like(model.centers), np.zeros_like(model.widths), np.zeros_like(model.coefs))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.centers.ravel(), self.widths.ravel(), self.coefs.ravel()])


def _as_xy(dataset):
    X, d = dataset
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d = np.asarray(d, dtype=np.float64).ravel()
    if X.shape[0] == 0:
        raise ValueError("dataset is empty")
    if X.shape[0] != d.shape[0]:
        raise ValueError(f"{X.shape[0]} input rows but {d.shape[0]} targets")
    return X, d


def output_error(model: TSModel, dataset) -> float:
    """Sum of squared residuals ``sum_k (d_k - y_k)^2`` over ``dataset = (X, d)``."""
    X, d = _as_xy(dataset)
    r = d - model.predict(X)
    return float(r @ r)


def gradients(model: TSModel, dataset) -> GradientVector:
    """Analytic gradient of :func:`output_error`; the T-norm parameter is held fixed."""
    X, d = _as_xy(dataset)
    _, gc, gs, gk = kernels.fis_gradients(X, d, model.centers, model.widths, model.masks, model.coefs, model.tnorm_p)
    return GradientVector(gc, gs, gk)


def _error_and_gradients(model: TSModel, X, d):
    E, gc, gs, gk = kernels.fis_gradients(X, d, model.centers, model.widths, model.masks, model.coefs, model.tnorm_p)
    return E, GradientVector(gc, gs, gk)


def gd_step(params, grads, prev_deltas, lr: float, momentum: float):
    """One momentum step ``delta = -lr * grad + momentum * prev_delta``.

    Works on plain arrays/floats or on :class:`GradientVector`-shaped
    bundles (anything supporting ``*`` and ``+``). Returns ``(params', delta)``;
    widths in a bundle are floored at ``MIN_WIDTH``.
    """
    delta = grads * (-lr) + prev_deltas * momentum
    new = params + delta
    if isinstance(new, GradientVector):
        new = GradientVector(new.centers, np.maximum(new.widths, MIN_WIDTH), new.coefs)
    return new, delta


def apply_step(model: TSModel, grads: GradientVector, prev: GradientVector, lr: float, momentum: float):
    params = GradientVector(model.centers, model.widths, model.coefs)
    new, delta = gd_step(params, grads, prev, lr, momentum)
    return model.replace(centers=new.centers, widths=new.widths, coefs=new.coefs), delta


def fine_tune(model: TSModel, train, lr: float, momentum: float, epochs: int) -> TSModel:
    """Full-batch momentum descent; returns the lowest-error state visited.

    The step uses the per-sample mean gradient (``dE/dtheta / N``) so the
    learning-rate scale does not depend on the training-set size.
    """
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    X, d = _as_xy(train)
    if epochs == 0:
        return model
    n = X.shape[0]
    best_model, best_E = model, math.inf
    current = model
    delta = GradientVector.zeros_like(model)
    for _ in range(epochs):
        E, g = _error_and_gradients(current, X, d)
        if not math.isfinite(E):
            break
        if E < best_E:
            best_model, best_E = current, E
        if not np.all(np.isfinite(g.flat())):
            break
        current, delta = apply_step(current, g * (1.0 / n), delta, lr, momentum)
    else:
        y, _ = kernels.fis_forward(X, current.centers, current.widths, current.masks, current.coefs, current.tnorm_p)
        E = float(((y - d) ** 2).sum())
        if math.isfinite(E) and E < best_E:
            best_model = current
    return best_model


def training_error(model: TSModel, train) -> float:
    """Like :func:`output_error` but returns ``inf`` instead of raising."""
    X, d = _as_xy(train)
    y, _ = kernels.fis_forward(X, model.centers, model.widths, model.masks, model.coefs, model.tnorm_p)
    E = float(((y - d) ** 2).sum())
    return E if math.isfinite(E) else math.inf
