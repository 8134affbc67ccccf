"""Z-scoring with parameters taken from training rows only."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyDataError
from ..table import FeatureTable


@dataclass(frozen=True)
class Standardizer:
    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray  # population sd (ddof=0)

    @property
    def constant(self) -> np.ndarray:
        """Columns with zero training variance; they transform to zeros."""
        return self.std == 0

    def transform_matrix(self, X: np.ndarray) -> np.ndarray:
        scale = np.where(self.constant, 1.0, self.std)
        Z = (np.asarray(X, dtype=float) - self.mean) / scale
        Z[:, self.constant] = 0.0
        return Z

    def apply(self, table: FeatureTable, rows=slice(None)) -> FeatureTable:
        sub = table.rows(rows)
        Z = self.transform_matrix(sub.matrix(self.names))
        return FeatureTable(sub.dates, {n: Z[:, j] for j, n in enumerate(self.names)}, sub.label)

    def to_dict(self) -> dict:
        return {n: {"mean": float(m), "std": float(s)} for n, m, s in zip(self.names, self.mean, self.std)}


def fit_standardizer(table: FeatureTable, train_rows=slice(None), names=None) -> Standardizer:
    names = tuple(table.names if names is None else names)
    X = table.matrix(names)[train_rows]
    if len(X) == 0:
        raise EmptyDataError("standardizer needs at least one training row")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # tiny relative spread is floating-point noise around a constant
    std = np.where(std <= 1e-12 * np.maximum(1.0, np.abs(mean)), 0.0, std)
    if np.any(std == 0):
        flat = [n for n, s in zip(names, std) if s == 0]
        warnings.warn(f"zero-variance columns set to 0: {flat}", stacklevel=2)
    return Standardizer(names, mean, std)
