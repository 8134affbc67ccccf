"""Shapley attributions of a model's positive-class probability.

The value of a coalition S at row x is the model output with the columns in S
taken from x and the rest from a background reference (a single vector, or
averaged over several background rows).
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

# column counts up to this use exact enumeration in "auto" mode
EXACT_MAX_COLUMNS = 10


def _predictor(model):
    if callable(model) and not hasattr(model, "predict_proba"):
        return model
    return lambda A: model.predict_proba(A)[:, 1]


def _value(f, x: np.ndarray, background: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Coalition values for boolean ``masks`` (m, d) at a single row ``x``."""
    m, d = masks.shape
    nb = len(background)
    A = np.where(masks[:, None, :], x[None, None, :], background[None, :, :]).reshape(m * nb, d)
    return f(A).reshape(m, nb).mean(axis=1)


def _exact_row(f, x, background, d):
    masks = ((np.arange(2**d)[:, None] >> np.arange(d)) & 1).astype(bool)
    v = _value(f, x, background, masks)
    size = masks.sum(axis=1)
    weight = np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d) for s in range(d)])
    phi = np.zeros(d)
    for j in range(d):
        without = np.flatnonzero(~masks[:, j])
        with_j = without + (1 << j)
        phi[j] = float(np.sum(weight[size[without]] * (v[with_j] - v[without])))
    return phi


def _sampled_row(f, x, background, d, n_samples, rng):
    perms = np.array([rng.permutation(d) for _ in range(n_samples)])
    masks = np.zeros((n_samples, d + 1, d), dtype=bool)
    for k in range(1, d + 1):
        masks[:, k] = masks[:, k - 1]
        masks[np.arange(n_samples), k, perms[:, k - 1]] = True
    v = _value(f, x, background, masks.reshape(-1, d)).reshape(n_samples, d + 1)
    contrib = np.diff(v, axis=1)
    phi = np.zeros(d)
    np.add.at(phi, perms.ravel(), contrib.ravel())
    return phi / n_samples


def shapley_values(
    model,
    X: np.ndarray,
    background: np.ndarray,
    n_samples: int = 200,
    seed: int = 0,
    method: str = "auto",
) -> np.ndarray:
    """Per-row, per-column attributions, shape (rows, columns).

    ``method`` is ``exact`` (all 2^d coalitions), ``sample`` (random
    permutations, ``n_samples`` per row) or ``auto`` (exact up to
    EXACT_MAX_COLUMNS columns).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    f = _predictor(model)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    bg = np.atleast_2d(np.asarray(background, dtype=float))
    d = X.shape[1]
    if method == "auto":
        method = "exact" if d <= EXACT_MAX_COLUMNS else "sample"
    out = np.zeros_like(X)
    for i, x in enumerate(X):
        if method == "exact":
            out[i] = _exact_row(f, x, bg, d)
        elif method == "sample":
            out[i] = _sampled_row(f, x, bg, d, n_samples, np.random.default_rng([seed, i]))
        else:
            raise ValueError(f"unknown method {method!r}")
    return out


def shapley_importance(model, X, background=None, n_samples: int = 200, seed: int = 0, method: str = "auto"):
    """Mean absolute attribution per column; background defaults to the column medians of ``X``."""
    X = np.asarray(X, dtype=float)
    if background is None:
        background = np.median(X, axis=0)
    return np.abs(shapley_values(model, X, background, n_samples, seed, method)).mean(axis=0)
