"""Filter statistics: ANOVA F, chi-square, Pearson pruning and VIF."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ..errors import DegenerateTargetError, ShapeError

# VIF reported for columns explained exactly by the others
VIF_INF = np.inf
# 1 - R^2 below this counts as an exact linear dependence
RANK_TOL = 1e-10


def _binary(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) != 2:
        raise DegenerateTargetError(f"need exactly two classes, got {len(classes)}")
    return (y == classes[1]).astype(np.int8)


def anova_f_scores(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """One-way ANOVA F per column for a two-class target.

    Zero within-class variance gives +inf when the class means differ and 0
    when they do not.
    """
    X = np.asarray(X, dtype=float)
    y = _binary(y)
    if X.shape[0] != len(y):
        raise ShapeError("X and y lengths differ")
    groups = [X[y == c] for c in (0, 1)]
    if min(len(g) for g in groups) < 2:
        raise DegenerateTargetError("each class needs at least two samples")
    n = len(y)
    grand = X.mean(axis=0)
    ss_between = sum(len(g) * (g.mean(axis=0) - grand) ** 2 for g in groups)
    ss_within = sum(((g - g.mean(axis=0)) ** 2).sum(axis=0) for g in groups)
    df_b, df_w = 1, n - 2
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (ss_between / df_b) / (ss_within / df_w)
    tiny = ss_within <= 1e-12 * np.maximum(1.0, ss_between + ss_within)
    f = np.where(tiny, np.where(ss_between > 1e-12, np.inf, 0.0), f)
    return f


def select_percentile(scores: np.ndarray, pct: float) -> np.ndarray:
    """Indices of the top ``floor(n * pct / 100)`` scores (at least one), stable on ties."""
    scores = np.asarray(scores, dtype=float)
    if not 0 < pct <= 100:
        raise ValueError("pct must lie in (0, 100]")
    k = max(1, int(np.floor(len(scores) * pct / 100 + 1e-9)))
    order = np.argsort(-np.nan_to_num(scores, nan=-np.inf), kind="stable")
    return np.sort(order[:k])


def abs_corr_matrix(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    Z = X - X.mean(axis=0)
    norm = np.sqrt((Z * Z).sum(axis=0))
    ok = norm > 0
    Z[:, ok] /= norm[ok]
    Z[:, ~ok] = 0.0
    return np.abs(Z.T @ Z)


def pearson_prune(X: np.ndarray, threshold: float = 0.9, priority: np.ndarray | None = None) -> np.ndarray:
    """Greedy keep in ``priority`` order (default: column order); returns kept indices sorted."""
    C = abs_corr_matrix(X)
    order = np.arange(C.shape[0]) if priority is None else np.asarray(priority)
    kept: list[int] = []
    for j in order:
        if all(C[j, k] <= threshold for k in kept):
            kept.append(int(j))
    return np.sort(np.array(kept, dtype=int))


def quantile_bins(x: np.ndarray, bins: int) -> np.ndarray:
    """Bin codes from interior quantile edges; duplicate edges collapse bins."""
    edges = np.unique(np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1]))
    return np.searchsorted(edges, x, side="right")


def chi_square_scores(X: np.ndarray, y: np.ndarray, bins: int = 10) -> np.ndarray:
    """Pearson chi-square of the (quantile bin x class) table per column.

    Empty bins are dropped, which is the same as merging them into a
    neighbour since they contribute no counts.
    """
    X = np.asarray(X, dtype=float)
    y = _binary(y)
    out = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        codes = quantile_bins(X[:, j], bins)
        table = np.zeros((codes.max() + 1, 2))
        np.add.at(table, (codes, y), 1.0)
        table = table[table.sum(axis=1) > 0]
        if len(table) < 2:
            continue
        expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / table.sum()
        out[j] = float(((table - expected) ** 2 / expected).sum())
    return out


def _r2_lstsq(X: np.ndarray, j: int) -> float:
    y = X[:, j]
    A = np.delete(X, j, axis=1)
    A = np.column_stack([np.ones(len(X)), A])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    tss = float(((y - y.mean()) ** 2).sum())
    return 1.0 - float(resid @ resid) / tss if tss > 0 else 1.0


def vif_scores(X: np.ndarray) -> np.ndarray:
    """Variance inflation factor 1/(1-R^2) per column.

    Uses the diagonal of the inverse correlation matrix; if that matrix is
    numerically singular, falls back to one least-squares fit per column and
    reports exact dependencies as ``inf``.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if d == 1:
        return np.ones(1)
    sd = X.std(axis=0)
    if np.any(sd == 0):
        raise ShapeError("VIF is undefined for constant columns")
    Z = (X - X.mean(axis=0)) / sd
    R = Z.T @ Z / n
    if n > d and np.linalg.cond(R) < 1.0 / RANK_TOL:
        v = np.diag(np.linalg.inv(R))
        return np.maximum(v, 1.0)
    out = np.empty(d)
    for j in range(d):
        r2 = _r2_lstsq(Z, j)
        out[j] = VIF_INF if 1.0 - r2 < RANK_TOL else max(1.0 / (1.0 - r2), 1.0)
    return out


def independent_columns(X: np.ndarray) -> np.ndarray:
    """Indices of a maximal linearly independent subset of the centred columns (pivoted QR)."""
    X = np.asarray(X, dtype=float)
    Z = X - X.mean(axis=0)
    norm = np.linalg.norm(Z, axis=0)
    Z = Z / np.where(norm > 0, norm, 1.0)
    _, Rm, piv = scipy.linalg.qr(Z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rm))
    rank = int(np.sum(diag > np.sqrt(RANK_TOL) * max(diag[0], 1e-300))) if len(diag) else 0
    return np.sort(piv[:rank])


def vif_prune(X: np.ndarray, threshold: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """Drop the highest-VIF column until every VIF is below ``threshold``.

    Exactly dependent columns go first (pivoted QR).  Returns kept indices and
    the VIF each column had when it was dropped or at the end (for kept ones).
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    scores = np.full(d, VIF_INF)
    keep = list(independent_columns(X))
    keep = [j for j in keep if X[:, j].std() > 0]
    while len(keep) > 1:
        v = vif_scores(X[:, keep])
        worst = int(np.argmax(v))  # ties: earliest column goes first
        if v[worst] < threshold:
            scores[keep] = v
            break
        scores[keep[worst]] = v[worst]
        del keep[worst]
    else:
        if keep:
            scores[keep] = 1.0
    return np.array(keep, dtype=int), scores
