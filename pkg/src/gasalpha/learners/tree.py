"""CART classification trees grown by exact Gini split search."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, EmptyDataError, ShapeError
from ._kernels import apply_tree, grow_gini_tree


@dataclass
class TreeModel:
    """Flat node arrays; ``feature == -1`` marks a leaf.

    ``value`` holds class probabilities (n_nodes x 2) for classification trees
    and a single leaf weight (n_nodes,) for boosting trees.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    weight: np.ndarray
    impurity: np.ndarray
    n_samples: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} columns, got shape {X.shape}")
        return X

    def apply(self, X: np.ndarray) -> np.ndarray:
        return apply_tree(self._check(X), self.feature, self.threshold, self.left, self.right)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


class _Builder:
    """Growable node arrays."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list = []
        self.weight: list[float] = []
        self.impurity: list[float] = []
        self.n_samples: list[int] = []

    def add(self, value, weight: float, impurity: float, n: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.weight.append(weight)
        self.impurity.append(impurity)
        self.n_samples.append(n)
        return len(self.feature) - 1

    def split(self, node: int, feature: int, threshold: float, left: int, right: int) -> None:
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right

    def build(self, n_features: int) -> TreeModel:
        return TreeModel(
            np.array(self.feature, dtype=np.int64),
            np.array(self.threshold, dtype=float),
            np.array(self.left, dtype=np.int64),
            np.array(self.right, dtype=np.int64),
            np.array(self.value, dtype=float),
            np.array(self.weight, dtype=float),
            np.array(self.impurity, dtype=float),
            np.array(self.n_samples, dtype=np.int64),
            n_features,
        )


def column_order(X: np.ndarray) -> np.ndarray:
    """Row indices sorted by each column, shape (columns, rows)."""
    return np.argsort(np.ascontiguousarray(X.T), axis=1, kind="stable").astype(np.int64)


def resolve_max_features(max_features, n_features: int) -> int:
    if max_features is None:
        return n_features
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    if max_features == "log2":
        return max(1, math.ceil(math.log2(n_features)))
    if isinstance(max_features, float):
        if not 0 < max_features <= 1:
            raise ConfigurationError("fractional max_features must lie in (0, 1]")
        return max(1, int(max_features * n_features))
    if int(max_features) < 1:
        raise ConfigurationError("max_features must be >= 1")
    return min(int(max_features), n_features)


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray | None = None,
    *,
    max_depth: int | None = None,
    min_samples_split: int = 2,
    min_samples_leaf: int = 1,
    max_leaf_nodes: int | None = None,
    min_weight_fraction_leaf: float = 0.0,
    max_features=None,
    seed: int | np.random.Generator = 0,
    presorted: np.ndarray | None = None,
) -> TreeModel:
    """Greedy binary CART on labels {0, 1}.

    Rows with zero weight are ignored.  With ``max_leaf_nodes`` the tree grows
    best-first (largest impurity decrease next); otherwise every admissible
    node is split, so the growth order does not change the result.  When
    ``max_features`` is below the column count, each node visits the columns
    in a shuffled order seeded from ``seed`` and stops after ``max_features``
    non-constant ones.

    ``presorted`` (from ``column_order(X)``) lets repeated fits on the same
    matrix skip the per-column sort.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError(f"X has shape {X.shape}, y has length {len(y)}")
    if len(y) == 0:
        raise EmptyDataError("cannot fit a tree on zero samples")
    if min_samples_leaf < 1 or min_samples_split < 2:
        raise ConfigurationError("min_samples_leaf must be >= 1 and min_samples_split >= 2")
    if max_depth is not None and max_depth < 0:
        raise ConfigurationError("max_depth must be >= 0")
    if max_leaf_nodes is not None and max_leaf_nodes < 2:
        raise ConfigurationError("max_leaf_nodes must be >= 2")
    y = y.astype(float)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if len(w) != len(y):
        raise ShapeError("sample_weight length does not match y")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_features = X.shape[1]
    k = resolve_max_features(max_features, n_features)
    rows = np.flatnonzero(w > 0).astype(np.int64)
    if len(rows) == 0:
        raise EmptyDataError("every sample weight is zero")
    min_weight_leaf = min_weight_fraction_leaf * float(w[rows].sum())
    stream = int(rng.integers(0, 2**63)) if k < n_features else 0
    if presorted is None:
        presorted = column_order(X)
    if len(rows) < len(y):
        # every column row keeps the same rows, so the flattened mask reshapes cleanly
        presorted = presorted[(w > 0)[presorted]].reshape(n_features, -1)
    feature, threshold, left, right, prob, weight, impurity, n_samples = grow_gini_tree(
        X, y, w, presorted, k,
        -1 if max_depth is None else max_depth,
        min_samples_split, min_samples_leaf, min_weight_leaf,
        -1 if max_leaf_nodes is None else max_leaf_nodes,
        stream,
    )
    value = np.column_stack([1.0 - prob, prob])
    return TreeModel(feature, threshold, left, right, value, weight, impurity, n_samples, n_features)


def split_impurity_decrease(tree: TreeModel) -> np.ndarray:
    """Weighted Gini decrease summed per feature (un-normalised)."""
    out = np.zeros(tree.n_features)
    for i in np.flatnonzero(tree.feature >= 0):
        lft, rgt = tree.left[i], tree.right[i]
        dec = (
            tree.weight[i] * tree.impurity[i]
            - tree.weight[lft] * tree.impurity[lft]
            - tree.weight[rgt] * tree.impurity[rgt]
        )
        out[tree.feature[i]] += dec
    return out
