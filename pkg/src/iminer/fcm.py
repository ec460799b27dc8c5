"""Fuzzy c-means clustering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_FUZZIFIER = 2.0
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 300


class DegenerateCentersError(ValueError):
    """A data point coincides with two or more identical centers."""


@dataclass(frozen=True)
class ClusterModel:
    centers: np.ndarray  # (c, d)
    m: float
    objective: float
    memberships: np.ndarray  # (c, n), columns sum to 1
    n_iter: int = 0
    history: tuple[float, ...] = field(default_factory=tuple)

    @property
    def n_clusters(self) -> int:
        return self.centers.shape[0]

    def to_dict(self) -> dict:
        return {"fuzzifier": self.m, "centers": self.centers.tolist(), "objective": self.objective}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "ClusterModel":
        centers = np.asarray(data["centers"], dtype=np.float64)
        return cls(centers, float(data["fuzzifier"]), float(data["objective"]), np.empty((len(centers), 0)))


def _check(centers, data):
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if centers.shape[1] != data.shape[1]:
        raise ValueError(f"centers have dimension {centers.shape[1]} but data has {data.shape[1]}")
    return centers, data


def _sq_dist(centers, data):
    d2 = np.zeros((centers.shape[0], data.shape[0]))
    for k in range(data.shape[1]):
        d2 += (centers[:, k, None] - data[None, :, k]) ** 2
    return d2


def fcm_objective(U, centers, data, m: float) -> float:
    """``J = sum_i sum_j u_ij^m ||c_i - x_j||^2``."""
    centers, data = _check(centers, data)
    U = np.asarray(U, dtype=np.float64)
    if U.shape != (centers.shape[0], data.shape[0]):
        raise ValueError(f"U has shape {U.shape}, expected {(centers.shape[0], data.shape[0])}")
    if not m > 1:
        raise ValueError("fuzzifier m must be > 1")
    return float((U**m * _sq_dist(centers, data)).sum())


def update_memberships(centers, data, m: float) -> np.ndarray:
    """Optimal memberships for fixed centers.

    ``u_ij = 1 / sum_k (d_ij / d_kj)^(2/(m-1))``; a point sitting on exactly
    one center gets crisp membership to it.
    """
    centers, data = _check(centers, data)
    if not m > 1:
        raise ValueError("fuzzifier m must be > 1")
    return _memberships(_sq_dist(centers, data), m)


def _memberships(d2, m):
    zero = d2 == 0.0
    hits = zero.sum(axis=0)
    if np.any(hits > 1):
        j = int(np.flatnonzero(hits > 1)[0])
        raise DegenerateCentersError(f"point {j} coincides with {int(hits[j])} identical centers")
    U = np.empty_like(d2)
    soft = hits == 0
    if soft.all():
        # scale by the nearest center so the largest ratio is 1
        ratio = (d2.min(axis=0) / d2) ** (1.0 / (m - 1.0))
        return ratio / ratio.sum(axis=0)
    if soft.any():
        ds = d2[:, soft]
        ratio = (ds.min(axis=0) / ds) ** (1.0 / (m - 1.0))
        U[:, soft] = ratio / ratio.sum(axis=0)
    U[:, ~soft] = zero[:, ~soft].astype(np.float64)
    return U


def update_centers(U, data, m: float) -> np.ndarray:
    """Each center is the ``u^m``-weighted mean of all points."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    W = np.asarray(U, dtype=np.float64) ** m
    mass = W.sum(axis=1)
    if np.any(mass <= 0):
        raise ValueError(f"cluster {int(np.flatnonzero(mass <= 0)[0])} has zero membership mass")
    return (W @ data) / mass[:, None]


def fcm_run(data, init_centers, m: float = DEFAULT_FUZZIFIER, tol: float = DEFAULT_TOL,
            max_iter: int = DEFAULT_MAX_ITER) -> ClusterModel:
    """Alternate center and membership updates until ``|dJ| < tol``.

    One iteration moves the centers to the weighted means of the current
    memberships and then recomputes the memberships, so ``J`` never rises.
    """
    centers, data = _check(init_centers, data)
    c, n = centers.shape[0], data.shape[0]
    if c < 2:
        raise ValueError("need at least 2 initial centers")
    if n < c:
        raise ValueError(f"{n} points cannot support {c} clusters")
    if len(np.unique(centers, axis=0)) < c:
        raise DegenerateCentersError("initial centers must be distinct")

    if not m > 1:
        raise ValueError("fuzzifier m must be > 1")
    d2 = _sq_dist(centers, data)
    U = _memberships(d2, m)
    J = float((U**m * d2).sum())
    history = [J]
    it = 0
    while it < max_iter:
        it += 1
        centers = update_centers(U, data, m)
        d2 = _sq_dist(centers, data)
        U = _memberships(d2, m)
        J_new = float((U**m * d2).sum())
        history.append(J_new)
        converged = abs(J - J_new) < tol
        J = J_new
        if converged:
            break
    return ClusterModel(centers, float(m), float(J), U, it, tuple(history))


def memberships_for(model: ClusterModel, points) -> np.ndarray:
    return update_memberships(model.centers, points, model.m)


def assign(model: ClusterModel, point) -> int:
    """Index of the cluster with the largest membership (lowest index on ties)."""
    point = np.atleast_2d(np.asarray(point, dtype=np.float64))
    return int(assign_many(model, point)[0])


def assign_many(model: ClusterModel, points) -> np.ndarray:
    return np.argmax(memberships_for(model, points), axis=0)

