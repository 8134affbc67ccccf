"""Information coefficient and the correlation helpers used for pooling."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import ShapeError, UndefinedCorrelationError


def spearman_ic(factor: np.ndarray, forward_returns: np.ndarray) -> float:
    """Spearman rank correlation (average ranks for ties) over rows where both are finite."""
    factor = np.asarray(factor, dtype=float)
    forward_returns = np.asarray(forward_returns, dtype=float)
    if factor.shape != forward_returns.shape:
        raise ShapeError(f"factor has shape {factor.shape}, returns {forward_returns.shape}")
    ok = np.isfinite(factor) & np.isfinite(forward_returns)
    if ok.sum() < 3:
        raise UndefinedCorrelationError("fewer than 3 overlapping observations")
    rf = rankdata(factor[ok])
    rr = rankdata(forward_returns[ok])
    rf -= rf.mean()
    rr -= rr.mean()
    denom = np.sqrt(np.dot(rf, rf) * np.dot(rr, rr))
    if denom == 0:
        raise UndefinedCorrelationError("constant input column")
    return float(np.clip(np.dot(rf, rr) / denom, -1.0, 1.0))


def pairwise_abs_corr(a: np.ndarray, b: np.ndarray) -> float:
    """|Pearson| over rows finite in both; 0 when undefined."""
    ok = np.isfinite(a) & np.isfinite(b)
    if ok.sum() < 3:
        return 0.0
    x, y = a[ok] - a[ok].mean(), b[ok] - b[ok].mean()
    denom = np.sqrt(np.dot(x, x) * np.dot(y, y))
    return float(abs(np.dot(x, y)) / denom) if denom > 0 else 0.0


class CorrelationPool:
    """Columns kept so far, with vectorised |Pearson| against a candidate.

    Each pair uses only rows where both columns are finite, matching
    :func:`pairwise_abs_corr`.  Columns are z-scored on entry; Pearson is
    affine invariant and the one-pass sums below lose precision otherwise.
    """

    def __init__(self, n_rows: int, capacity: int):
        self.values = np.zeros((capacity, n_rows))
        self.mask = np.zeros((capacity, n_rows))
        self.count = 0

    def max_abs_corr(self, x: np.ndarray) -> float:
        if self.count == 0:
            return 0.0
        x = _standardize(x)
        mx = np.isfinite(x).astype(float)
        x0 = np.where(mx > 0, x, 0.0)
        k = self.values[: self.count]
        w = self.mask[: self.count] * mx
        n = w.sum(axis=1)
        kw = k * w
        sx = w @ x0
        sxx = w @ (x0 * x0)
        sk = kw.sum(axis=1)
        skk = (kw * k).sum(axis=1)
        sxk = kw @ x0
        with np.errstate(divide="ignore", invalid="ignore"):
            cov = sxk - sx * sk / n
            vx = sxx - sx * sx / n
            vk = skk - sk * sk / n
            r = np.abs(cov) / np.sqrt(vx * vk)
        # tiny variances are round-off on constant overlaps
        defined = (n >= 3) & (vx > 1e-12 * np.maximum(sxx, 1e-300)) & (vk > 1e-12 * np.maximum(skk, 1e-300))
        r = np.where(defined & np.isfinite(r), r, 0.0)
        return float(r.max())

    def add(self, x: np.ndarray) -> None:
        x = _standardize(x)
        ok = np.isfinite(x)
        self.values[self.count] = np.where(ok, x, 0.0)
        self.mask[self.count] = ok
        self.count += 1


def _standardize(x: np.ndarray) -> np.ndarray:
    ok = np.isfinite(x)
    if not ok.any():
        return x
    v = x[ok]
    sd = v.std()
    out = np.full(len(x), np.nan)
    out[ok] = (v - v.mean()) / sd if sd > 0 else 0.0
    return out
