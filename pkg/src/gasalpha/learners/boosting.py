"""Second-order gradient-boosted trees for binary logistic loss."""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigurationError, DegenerateTargetError, ShapeError
from ._kernels import best_gain_split, soft_threshold
from .tree import TreeModel, _Builder


@dataclass(frozen=True)
class BoostConfig:
    n_estimators: int = 200
    learning_rate: float = 0.1
    growth: str = "level_wise"  # or "leaf_wise"
    max_depth: int | None = 3  # None: unlimited (leaf_wise only)
    num_leaves: int = 31
    reg_lambda: float = 1.0
    reg_alpha: float = 0.0
    gamma: float = 0.0
    min_child_weight: float = 1.0  # minimum hessian sum per child
    min_samples_leaf: int = 1
    colsample_bytree: float = 1.0
    colsample_bylevel: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 0:
            raise ConfigurationError("n_estimators must be >= 0")
        if self.growth not in ("level_wise", "leaf_wise"):
            raise ConfigurationError(f"growth must be level_wise or leaf_wise, got {self.growth!r}")
        if self.max_depth is None and self.growth == "level_wise":
            raise ConfigurationError("level_wise growth needs max_depth")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigurationError("max_depth must be >= 0")
        if self.num_leaves < 1:
            raise ConfigurationError("num_leaves must be >= 1")
        for name in ("colsample_bytree", "colsample_bylevel"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigurationError(f"{name} must lie in (0, 1]")
        if self.learning_rate <= 0 or self.reg_lambda < 0 or self.reg_alpha < 0 or self.gamma < 0:
            raise ConfigurationError("learning_rate must be > 0 and regularisation terms >= 0")


@dataclass
class BoostedModel:
    trees: list[TreeModel]
    base_score: float
    config: BoostConfig
    n_features: int
    loss_history: list[float] = field(default_factory=list)

    def _check(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} columns, got shape {X.shape}")
        return X

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X)
        raw = np.full(len(X), self.base_score)
        for t in self.trees:
            raw += self.config.learning_rate * t.value[t.apply(X)]
        return raw

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def log_loss(y: np.ndarray, raw: np.ndarray) -> float:
    # log(1 + e^z) - y z, computed stably
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def split_gain(G_L: float, H_L: float, G_R: float, H_R: float, reg_lambda: float = 1.0, gamma: float = 0.0,
               reg_alpha: float = 0.0) -> float:
    """Structure-score improvement of a split, minus the split penalty ``gamma``."""
    def score(G, H):
        t = soft_threshold(G, reg_alpha)
        return t * t / (H + reg_lambda)

    return 0.5 * (score(G_L, H_L) + score(G_R, H_R) - score(G_L + G_R, H_L + H_R)) - gamma


def leaf_weight(G: float, H: float, reg_lambda: float, reg_alpha: float = 0.0) -> float:
    return -soft_threshold(G, reg_alpha) / (H + reg_lambda)


def _subsample(rng: np.random.Generator, pool: np.ndarray, frac: float) -> np.ndarray:
    if frac >= 1.0:
        return pool
    k = max(1, math.ceil(frac * len(pool)))
    return np.sort(rng.choice(pool, size=k, replace=False))


def fit_gradient_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, config: BoostConfig,
                      rng: np.random.Generator) -> TreeModel:
    """One weight tree grown level by level or best-leaf first.

    Column subsets are drawn once per tree and once per depth level (in order
    of first use), so both growth modes consume the random stream alike.
    """
    n, d = X.shape
    lam, alpha, gamma = config.reg_lambda, config.reg_alpha, config.gamma
    tree_cols = _subsample(rng, np.arange(d, dtype=np.int64), config.colsample_bytree)
    level_cols: dict[int, np.ndarray] = {}

    def cols(depth: int) -> np.ndarray:
        while depth not in level_cols:
            level_cols[len(level_cols)] = _subsample(rng, tree_cols, config.colsample_bylevel)
        return level_cols[depth]

    b = _Builder()

    def make_node(rows):
        G, H = float(g[rows].sum()), float(h[rows].sum())
        return b.add(leaf_weight(G, H, lam, alpha), H, 0.0, len(rows))

    def search(rows, depth):
        if config.max_depth is not None and depth >= config.max_depth:
            return None
        if len(rows) < 2:
            return None
        f, thr, gain = best_gain_split(X, g, h, rows, cols(depth), lam, alpha, gamma,
                                       config.min_child_weight, config.min_samples_leaf)
        if f < 0 or not gain > 0.0:
            return None
        return gain, int(f), float(thr)

    def do_split(node, rows, f, thr):
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        left, right = make_node(lrows), make_node(rrows)
        b.split(node, f, thr, left, right)
        return (left, lrows), (right, rrows)

    root_rows = np.arange(n, dtype=np.int64)
    root = make_node(root_rows)
    if config.growth == "level_wise":
        frontier = [(root, root_rows)]
        depth = 0
        while frontier:
            nxt = []
            for node, rows in frontier:
                found = search(rows, depth)
                if found is not None:
                    nxt.extend(do_split(node, rows, found[1], found[2]))
            frontier = nxt
            depth += 1
    else:
        heap, counter, leaves = [], 0, 1
        found = search(root_rows, 0)
        if found is not None:
            heap.append((-found[0], 0, root, root_rows, 0, found[1], found[2]))
        while heap and leaves < config.num_leaves:
            _, _, node, rows, depth, f, thr = heapq.heappop(heap)
            leaves += 1
            for child, crow in do_split(node, rows, f, thr):
                found = search(crow, depth + 1)
                if found is not None:
                    counter += 1
                    heapq.heappush(heap, (-found[0], counter, child, crow, depth + 1, found[1], found[2]))
    return b.build(d)


def fit_boosted(X: np.ndarray, y: np.ndarray, config: BoostConfig | None = None, **overrides) -> BoostedModel:
    """Logistic-loss boosting with Newton leaf weights and L1/L2 penalties.

    ``base_score`` is the log-odds of the training prevalence; round ``r``
    draws its column subsets from ``default_rng([seed, r])``.
    """
    config = config or BoostConfig()
    if overrides:
        config = BoostConfig(**{**asdict(config), **overrides})
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError(f"X has shape {X.shape}, y has length {len(y)}")
    if not np.all((y == 0) | (y == 1)):
        raise DegenerateTargetError("labels must be 0/1")
    prevalence = y.mean() if len(y) else 0.0
    if prevalence in (0.0, 1.0):
        raise DegenerateTargetError("training labels contain a single class")
    base = math.log(prevalence / (1 - prevalence))
    raw = np.full(len(y), base)
    model = BoostedModel([], base, config, X.shape[1], [log_loss(y, raw)])
    for r in range(config.n_estimators):
        p = sigmoid(raw)
        g, h = p - y, p * (1 - p)
        tree = fit_gradient_tree(X, g, h, config, np.random.default_rng([config.seed, r]))
        model.trees.append(tree)
        raw += config.learning_rate * tree.value[tree.apply(X)]
        model.loss_history.append(log_loss(y, raw))
    return model
