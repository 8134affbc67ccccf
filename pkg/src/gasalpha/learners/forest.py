"""Bagged random forests over CART trees."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, ShapeError
from .tree import TreeModel, column_order, fit_tree, split_impurity_decrease


@dataclass
class ForestModel:
    trees: list[TreeModel]
    seed: int
    max_features: object
    bootstrap: bool
    oob_indices: list[np.ndarray] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = self.trees[0]._check(X)
        acc = np.zeros((len(X), 2))
        for t in self.trees:
            acc += t.value[t.apply(X)]
        return acc / len(self.trees)

    def oob_proba(self, X: np.ndarray) -> np.ndarray:
        """Mean probability over trees for which each row was out of bag; NaN if none."""
        X = self.trees[0]._check(X)
        acc = np.zeros((len(X), 2))
        cnt = np.zeros(len(X))
        for t, idx in zip(self.trees, self.oob_indices):
            if len(idx):
                acc[idx] += t.value[t.apply(X[idx])]
                cnt[idx] += 1
        with np.errstate(invalid="ignore"):
            return acc / cnt[:, None]


def tree_seed(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_estimators: int = 100,
    *,
    seed: int = 0,
    bootstrap: bool = True,
    max_features="sqrt",
    threads: int = 1,
    **tree_params,
) -> ForestModel:
    """Each tree sees a same-size bootstrap sample (as integer weights).

    The random stream of tree ``i`` depends only on ``(seed, i)``, so the
    result does not depend on ``threads``.
    """
    if n_estimators < 1:
        raise ConfigurationError("n_estimators must be >= 1")
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError(f"X has shape {X.shape}, y has length {len(y)}")
    n = len(y)
    order = column_order(X)

    def one(i: int):
        rng = tree_seed(seed, i)
        if bootstrap:
            counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
            oob = np.flatnonzero(counts == 0)
        else:
            counts, oob = None, np.empty(0, dtype=np.int64)
        tree = fit_tree(X, y, counts, max_features=max_features, seed=rng, presorted=order, **tree_params)
        return tree, oob

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(n_estimators)))
    else:
        results = [one(i) for i in range(n_estimators)]
    return ForestModel(
        [r[0] for r in results], seed, max_features, bootstrap, [r[1] for r in results], dict(tree_params)
    )


def forest_importance(
    model: ForestModel,
    X: np.ndarray | None = None,
    y: np.ndarray | None = None,
    mode: str = "permutation",
    *,
    seed: int = 0,
    n_repeats: int = 1,
    oob: bool = True,
) -> np.ndarray:
    """Per-column importance.

    ``impurity``: weighted Gini decrease summed over splits, normalised to sum 1.
    ``permutation``: accuracy drop after permuting one column.  With ``oob``
    each tree is scored on its own out-of-bag rows and the drops are averaged
    over trees; otherwise the whole forest is scored on ``X``.
    """
    if mode == "impurity":
        total = sum(split_impurity_decrease(t) for t in model.trees)
        s = total.sum()
        return total / s if s > 0 else total
    if mode != "permutation":
        raise ConfigurationError(f"unknown importance mode {mode!r}")
    if X is None or y is None:
        raise ConfigurationError("permutation importance needs X and y")
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y)
    d = X.shape[1]
    out = np.zeros(d)
    if oob and model.bootstrap:
        used = 0
        for i, (t, idx) in enumerate(zip(model.trees, model.oob_indices)):
            if len(idx) < 2:
                continue
            used += 1
            rng = np.random.default_rng([seed, i])
            Xo, yo = X[idx], y[idx] == 1
            m = len(idx)
            base = float(np.mean((t.value[t.apply(Xo), 1] > 0.5) == yo))
            # all permuted copies in one traversal: block (r, j) has column j shuffled
            stacked = np.tile(Xo, (n_repeats * d, 1))
            for r in range(n_repeats):
                for j in range(d):
                    blk = (r * d + j) * m
                    stacked[blk : blk + m, j] = Xo[rng.permutation(m), j]
            hit = (t.value[t.apply(stacked), 1] > 0.5) == np.tile(yo, n_repeats * d)
            acc = hit.reshape(n_repeats, d, m).mean(axis=2).mean(axis=0)
            out += base - acc
        return out / max(used, 1)
    rng = np.random.default_rng(seed)
    pred = lambda A: (model.predict_proba(A)[:, 1] > 0.5) == (y == 1)
    base = float(np.mean(pred(X)))
    Xp = X.copy()
    for j in range(d):
        drop = 0.0
        for _ in range(n_repeats):
            Xp[:, j] = X[rng.permutation(len(X)), j]
            drop += base - float(np.mean(pred(Xp)))
        Xp[:, j] = X[:, j]
        out[j] = drop / n_repeats
    return out
