"""Pure NumPy implementation of the TS-FIS forward and gradient kernels.

Both functions share one layout with the compiled backend:

centers, widths : (n_inputs, n_mfs)
masks           : (n_rules, n_inputs, n_mfs) uint8, 1 = label present
coefs           : (n_rules, n_inputs + 1), last column is the bias
"""

from __future__ import annotations

import numpy as np

MEMBERSHIP_FLOOR = 1e-12
LOG_FLOOR = float(np.log(MEMBERSHIP_FLOOR))
# exp overflows near 709.8; beyond this p * |log mu| the fold is rescaled
DIRECT_LIMIT = 700.0


def _premise(X, centers, widths, masks):
    diff = X[:, :, None] - centers[None]
    lg = -(diff * diff) / (2.0 * widths * widths)[None]  # log memberships (N, I, J)
    mask = masks.astype(bool)
    active = mask.any(axis=2)  # (R, I)
    picked = np.where(mask[None], lg[:, None], -np.inf)  # (N, R, I, J)
    jstar = picked.argmax(axis=3)
    lmu = np.take_along_axis(picked, jstar[..., None], axis=3)[..., 0]
    lmu = np.where(active[None], lmu, 0.0)
    floored = active[None] & (lmu < LOG_FLOOR)
    lmu = np.maximum(lmu, LOG_FLOOR)
    return lg, lmu, jstar, active, floored


def _log_fold(lmu, p):
    """Log of the Schweizer-Sklar T-norm folded over the last axis.

    Returns (log w, S) with S = 1 + sum(mu^-p - 1); S is NaN when the
    rescaled path was needed.
    """
    if p * -LOG_FLOOR < DIRECT_LIMIT:
        acc = np.expm1(-p * lmu).sum(axis=-1)
        return -np.log1p(acc) / p, 1.0 + acc
    lm = lmu.min(axis=-1)
    mp = np.exp(p * lm)
    s = mp + (np.exp(p * (lm[..., None] - lmu)) - mp[..., None]).sum(axis=-1)
    return lm - np.log(s) / p, np.full_like(s, np.nan)


def fis_forward(X, centers, widths, masks, coefs, p):
    """Return (outputs, raw firing strengths) for every row of ``X``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    _, lmu, _, _, _ = _premise(X, centers, widths, masks)
    lw, _ = _log_fold(lmu, p)
    w = np.exp(lw)
    f = X @ coefs[:, :-1].T + coefs[:, -1]
    W = w.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        y = (w * f).sum(axis=1) / W
    return y, w


def fis_gradients(X, d, centers, widths, masks, coefs, p):
    """Squared error sum and its gradient w.r.t. centers, widths and coefs."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    n_mf = centers.shape[1]

    lg, lmu, jstar, active, floored = _premise(X, centers, widths, masks)
    lw, _ = _log_fold(lmu, p)
    w = np.exp(lw)
    f = X @ coefs[:, :-1].T + coefs[:, -1]
    W = w.sum(axis=1)
    y = (w * f).sum(axis=1) / W
    r = y - d
    E = float(r @ r)

    dy = 2.0 * r
    wbar = w / W[:, None]
    g_coefs = np.empty_like(coefs)
    g_coefs[:, :-1] = (dy[:, None] * wbar).T @ X
    g_coefs[:, -1] = dy @ wbar

    dEdw = dy[:, None] * (f - y[:, None]) / W[:, None]
    usable = active[None] & ~floored
    # mu_i * dw/dmu_i = (w / mu_i)^(p + 1) * mu_i
    scaled = np.where(usable, np.exp((p + 1.0) * (lw[..., None] - lmu) + lmu), 0.0)
    dEdlnmu = dEdw[..., None] * scaled  # (N, R, I)

    onehot = jstar[..., None] == np.arange(n_mf)
    A = np.einsum("kri,krij->kij", dEdlnmu, onehot)  # (N, I, J)
    diff = X[:, :, None] - centers[None]
    base = A * diff / (widths * widths)[None]
    g_centers = base.sum(axis=0)
    g_widths = (base * diff).sum(axis=0) / widths
    return E, g_centers, g_widths, g_coefs
