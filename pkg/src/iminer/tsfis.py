"""Takagi-Sugeno fuzzy inference with Gaussian sets and a Schweizer-Sklar T-norm.

A :class:`TSModel` keeps its parameters as dense arrays so the batch
kernels in :mod:`iminer.kernels` can evaluate it directly:

* ``centers`` / ``widths`` -- ``(n_inputs, n_mfs)`` Gaussian parameters;
* ``masks`` -- ``(n_rules, n_inputs, n_mfs)`` antecedent label bits;
* ``coefs`` -- ``(n_rules, n_inputs + 1)`` linear consequents, bias last.

An input whose bits are all clear is a don't-care (membership 1); several
set bits are OR-ed with ``max``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .kernels import MEMBERSHIP_FLOOR


class InferenceError(ValueError):
    """No rule fired for an input vector."""


@dataclass(frozen=True)
class GaussianMF:
    center: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"Gaussian width must be positive, got {self.width}")


@dataclass(frozen=True)
class FuzzyRule:
    """One rule: per-input label bits and a linear consequent."""

    antecedent: tuple[tuple[int, ...], ...]
    coefficients: tuple[float, ...]
    bias: float = 0.0


def gaussian_mf(x: float, mf: GaussianMF) -> float:
    if not mf.width > 0:
        raise ValueError(f"Gaussian width must be positive, got {mf.width}")
    return math.exp(-((x - mf.center) ** 2) / (2.0 * mf.width**2))


def tnorm_ss(a: float, b: float, p: float) -> float:
    """Schweizer-Sklar T-norm ``[max(0, a^-p + b^-p - 1)]^(-1/p)``.

    Evaluated as ``(1 + expm1(-p ln a) + expm1(-p ln b))^(-1/p)`` so that
    small ``p`` keeps full precision; for large ``p`` the operands are
    rescaled by their minimum. ``T(0, b) = T(a, 0) = 0``.
    """
    if not p > 0:
        raise ValueError(f"T-norm parameter must be positive, got {p}")
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise ValueError(f"T-norm operands must lie in [0, 1], got {a}, {b}")
    if a == 0.0 or b == 0.0:
        return 0.0
    la, lb = math.log(a), math.log(b)
    if p * max(-la, -lb) < 700.0:
        return math.exp(-math.log1p(math.expm1(-p * la) + math.expm1(-p * lb)) / p)
    lm = min(la, lb)
    mp = math.exp(p * lm)
    s = math.exp(p * (lm - la)) + math.exp(p * (lm - lb)) - mp
    return math.exp(lm - math.log(s) / p)


@dataclass(frozen=True)
class TSModel:
    centers: np.ndarray
    widths: np.ndarray
    masks: np.ndarray
    coefs: np.ndarray
    tnorm_p: float = 1.0

    def __post_init__(self):
        centers = np.array(self.centers, dtype=np.float64)
        widths = np.array(self.widths, dtype=np.float64)
        masks = np.array(self.masks, dtype=np.uint8)
        coefs = np.array(self.coefs, dtype=np.float64)
        if centers.ndim != 2 or widths.shape != centers.shape:
            raise ValueError("centers and widths must share shape (n_inputs, n_mfs)")
        n_in, n_mf = centers.shape
        if masks.ndim != 3 or masks.shape[1:] != (n_in, n_mf):
            raise ValueError(f"masks must have shape (n_rules, {n_in}, {n_mf}), got {masks.shape}")
        if masks.shape[0] < 1:
            raise ValueError("a TS model needs at least one rule")
        if coefs.shape != (masks.shape[0], n_in + 1):
            raise ValueError(f"coefs must have shape ({masks.shape[0]}, {n_in + 1}), got {coefs.shape}")
        if np.any(widths <= 0):
            raise ValueError("all Gaussian widths must be positive")
        if not self.tnorm_p > 0:
            raise ValueError(f"tnorm_p must be positive, got {self.tnorm_p}")
        for name, arr in (("centers", centers), ("widths", widths), ("masks", masks), ("coefs", coefs)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "tnorm_p", float(self.tnorm_p))

    @property
    def n_inputs(self) -> int:
        return self.centers.shape[0]

    @property
    def n_mfs(self) -> int:
        return self.centers.shape[1]

    @property
    def n_rules(self) -> int:
        return self.masks.shape[0]

    @property
    def partitions(self) -> list[list[GaussianMF]]:
        return [
            [GaussianMF(float(c), float(s)) for c, s in zip(crow, srow)]
            for crow, srow in zip(self.centers, self.widths)
        ]

    @property
    def rules(self) -> list[FuzzyRule]:
        return [
            FuzzyRule(
                antecedent=tuple(tuple(int(b) for b in bits) for bits in mask),
                coefficients=tuple(float(v) for v in coef[:-1]),
                bias=float(coef[-1]),
            )
            for mask, coef in zip(self.masks, self.coefs)
        ]

    @classmethod
    def from_parts(cls, partitions: Sequence[Sequence[GaussianMF]], rules: Sequence[FuzzyRule], tnorm_p: float) -> "TSModel":
        sizes = {len(p) for p in partitions}
        if len(sizes) != 1:
            raise ValueError("every input needs the same number of fuzzy sets")
        centers = [[mf.center for mf in p] for p in partitions]
        widths = [[mf.width for mf in p] for p in partitions]
        masks = [rule.antecedent for rule in rules]
        coefs = [list(rule.coefficients) + [rule.bias] for rule in rules]
        return cls(centers, widths, masks, coefs, tnorm_p)

    def replace(self, **changes) -> "TSModel":
        fields = dict(centers=self.centers, widths=self.widths, masks=self.masks, coefs=self.coefs, tnorm_p=self.tnorm_p)
        fields.update(changes)
        return TSModel(**fields)

    def subset(self, rule_indices) -> "TSModel":
        idx = np.asarray(rule_indices, dtype=np.intp)
        return self.replace(masks=self.masks[idx], coefs=self.coefs[idx])

    def predict(self, X) -> np.ndarray:
        """Batch inference; raises :class:`InferenceError` if a row fires no rule."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} inputs, got {X.shape[1]}")
        y, w = kernels.fis_forward(X, self.centers, self.widths, self.masks, self.coefs, self.tnorm_p)
        dead = ~(w.sum(axis=1) > 0)
        if dead.any():
            k = int(np.flatnonzero(dead)[0])
            raise InferenceError(f"no rule fires for input {X[k].tolist()}")
        return y

    def firing_strengths(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        _, w = kernels.fis_forward(X, self.centers, self.widths, self.masks, self.coefs, self.tnorm_p)
        return w

    def to_dict(self) -> dict:
        return {
            "partitions": [
                {"centers": self.centers[i].tolist(), "widths": self.widths[i].tolist()}
                for i in range(self.n_inputs)
            ],
            "rules": [
                {"antecedent": self.masks[n].astype(int).tolist(), "coefficients": self.coefs[n].tolist()}
                for n in range(self.n_rules)
            ],
            "tnorm_p": self.tnorm_p,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TSModel":
        parts = data["partitions"]
        return cls(
            centers=[p["centers"] for p in parts],
            widths=[p["widths"] for p in parts],
            masks=[r["antecedent"] for r in data["rules"]],
            coefs=[r["coefficients"] for r in data["rules"]],
            tnorm_p=data["tnorm_p"],
        )

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "TSModel":
        return cls.from_dict(json.loads(text))


def _input_membership(model: TSModel, n: int, i: int, xi: float) -> float:
    bits = model.masks[n, i]
    if not bits.any():
        return 1.0
    best = max(
        gaussian_mf(xi, GaussianMF(model.centers[i, j], model.widths[i, j]))
        for j in np.flatnonzero(bits)
    )
    return max(best, MEMBERSHIP_FLOOR)


def firing_strength(rule: int | FuzzyRule, x, model: TSModel) -> float:
    """Firing strength of one rule, folding inputs left to right with ``tnorm_ss``.

    ``rule`` is a rule index into ``model`` or a standalone :class:`FuzzyRule`
    over the model's partitions.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_inputs,):
        raise ValueError(f"expected {model.n_inputs} inputs, got shape {x.shape}")
    if isinstance(rule, FuzzyRule):
        model = model.replace(
            masks=[rule.antecedent], coefs=[list(rule.coefficients) + [rule.bias]]
        )
        rule = 0
    mus = [_input_membership(model, rule, i, float(x[i])) for i in range(model.n_inputs)]
    strength = mus[0]
    for mu in mus[1:]:
        strength = tnorm_ss(strength, mu, model.tnorm_p)
    return strength


def infer(model: TSModel, x) -> float:
    """Weighted average of the rules' linear outputs for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    w = np.array([firing_strength(n, x, model) for n in range(model.n_rules)])
    total = w.sum()
    if not total > 0:
        raise InferenceError(f"no rule fires for input {x.tolist()}")
    outputs = model.coefs[:, :-1] @ x + model.coefs[:, -1]
    return float(w @ outputs / total)


def grid_partition(num_inputs: int, mfs_per_input: int, input_ranges=None, tnorm_p: float = 1.0) -> TSModel:
    """Evenly spaced Gaussians per input and one rule per grid cell.

    Widths are half the center spacing; with one set per input the center
    sits mid-range and the width is half the range. Consequents start at 0.
    """
    if num_inputs < 1 or mfs_per_input < 1:
        raise ValueError("need at least one input and one membership function")
    if input_ranges is None:
        input_ranges = [(0.0, 1.0)] * num_inputs
    if len(input_ranges) != num_inputs:
        raise ValueError("one (low, high) range per input is required")
    centers, widths = [], []
    for lo, hi in input_ranges:
        lo, hi = float(lo), float(hi)
        span = hi - lo if hi > lo else 1.0
        if mfs_per_input == 1:
            centers.append([(lo + hi) / 2.0])
            widths.append([span / 2.0])
        else:
            spacing = span / (mfs_per_input - 1)
            centers.append([lo + j * spacing for j in range(mfs_per_input)])
            widths.append([spacing / 2.0] * mfs_per_input)
    n_rules = mfs_per_input**num_inputs
    masks = np.zeros((n_rules, num_inputs, mfs_per_input), dtype=np.uint8)
    for n, cell in enumerate(itertools.product(range(mfs_per_input), repeat=num_inputs)):
        masks[n, np.arange(num_inputs), cell] = 1
    coefs = np.zeros((n_rules, num_inputs + 1))
    return TSModel(centers, widths, masks, coefs, tnorm_p)


def rule_strength(rule: int, model: TSModel, dataset) -> float:
    """Total normalized firing strength of rule ``rule`` over the rows of ``dataset``."""
    X = np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("dataset is empty")
    w = model.firing_strengths(X)
    return float((w[:, rule] / w.sum(axis=1)).sum())
