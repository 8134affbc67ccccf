"""All-relevant selection against row-permuted shadow copies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

from ..errors import ConfigurationError
from ..learners import fit_forest, forest_importance

CONFIRMED, REJECTED, TENTATIVE = "confirmed", "rejected", "tentative"


@dataclass
class BorutaResult:
    decision: list[str]
    hits: np.ndarray
    n_iter: int
    importance: np.ndarray  # (n_iter, n_columns) real-column importances
    shadow_max: np.ndarray  # (n_iter,)

    def indices(self, status: str) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.decision) if s == status], dtype=int)


@dataclass(frozen=True)
class BorutaConfig:
    max_iter: int = 20
    alpha: float = 0.05
    n_estimators: int = 50
    max_depth: int | None = None
    min_samples_leaf: int = 1
    importance: str = "permutation"
    seed: int = 0
    forest_params: dict = field(default_factory=dict)


def boruta(X: np.ndarray, y: np.ndarray, config: BorutaConfig | None = None, threads: int = 1) -> BorutaResult:
    """Hit counting over ``max_iter`` forests followed by a two-sided binomial test.

    Every iteration appends an independently row-permuted copy of each column,
    fits a forest on the doubled matrix and records a hit for each real column
    whose importance beats the best shadow.  A column is confirmed when
    ``P(X >= hits) < alpha/2`` and rejected when ``P(X <= hits) < alpha/2``
    under ``X ~ Binomial(max_iter, 1/2)``.
    """
    config = config or BorutaConfig()
    if config.max_iter < 20:
        raise ConfigurationError("boruta needs max_iter >= 20")
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    hits = np.zeros(d, dtype=int)
    imps = np.zeros((config.max_iter, d))
    shadow_max = np.zeros(config.max_iter)
    for it in range(config.max_iter):
        rng = np.random.default_rng([config.seed, it])
        shadows = np.column_stack([X[rng.permutation(n), j] for j in range(d)])
        forest = fit_forest(
            np.hstack([X, shadows]),
            y,
            config.n_estimators,
            seed=int(rng.integers(2**31)),
            max_depth=config.max_depth,
            min_samples_leaf=config.min_samples_leaf,
            threads=threads,
            **config.forest_params,
        )
        if config.importance == "permutation":
            imp = forest_importance(forest, np.hstack([X, shadows]), y, "permutation", seed=it)
        else:
            imp = forest_importance(forest, mode=config.importance)
        imps[it] = imp[:d]
        shadow_max[it] = imp[d:].max()
        hits += imp[:d] > shadow_max[it]
    m = config.max_iter
    p_high = binom.sf(hits - 1, m, 0.5)
    p_low = binom.cdf(hits, m, 0.5)
    decision = [
        CONFIRMED if ph < config.alpha / 2 else REJECTED if pl < config.alpha / 2 else TENTATIVE
        for ph, pl in zip(p_high, p_low)
    ]
    return BorutaResult(decision, hits, m, imps, shadow_max)
