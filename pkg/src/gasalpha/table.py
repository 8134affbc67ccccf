"""Date-aligned feature matrix passed between pipeline stages."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, FormatError, SchemaError

LABEL_COLUMN = "label"


@dataclass
class FeatureTable:
    """Named factor columns sharing one date index.

    Warm-up rows of an indicator are NaN; ``valid_from`` is the first row
    where every column is present.
    """

    dates: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    label: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.dates)
        for name, col in self.columns.items():
            if len(col) != n:
                raise SchemaError(f"column {name!r} has length {len(col)}, expected {n}")
        if self.label is not None and len(self.label) != n:
            raise SchemaError("label length does not match dates")

    def __len__(self) -> int:
        return len(self.dates)

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def valid_from(self) -> int:
        if not self.columns:
            return 0
        bad = np.zeros(len(self), dtype=bool)
        for col in self.columns.values():
            bad |= ~np.isfinite(col)
        ok = np.flatnonzero(~bad)
        return int(ok[0]) if len(ok) else len(self)

    def add(self, name: str, values: np.ndarray) -> None:
        if name in self.columns:
            raise ConfigurationError(f"duplicate column {name!r}")
        values = np.asarray(values, dtype=float)
        if len(values) != len(self):
            raise SchemaError(f"column {name!r} has length {len(values)}, expected {len(self)}")
        self.columns[name] = values

    def matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        names = self.names if names is None else list(names)
        if not names:
            return np.empty((len(self), 0))
        return np.column_stack([self.columns[n] for n in names])

    def select(self, names: Iterable[str]) -> "FeatureTable":
        return FeatureTable(self.dates, {n: self.columns[n] for n in names}, self.label)

    def rows(self, index) -> "FeatureTable":
        lab = None if self.label is None else self.label[index]
        return FeatureTable(self.dates[index], {k: v[index] for k, v in self.columns.items()}, lab)

    def to_csv(self, path: str | Path, delimiter: str = ",") -> None:
        """Write with the date first, feature columns alphabetically, label last."""
        names = sorted(self.columns)
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(["date", *names] + ([LABEL_COLUMN] if self.label is not None else []))
            cols = [self.columns[n] for n in names]
            for i in range(len(self)):
                row = [str(self.dates[i])] + [_fmt(c[i]) for c in cols]
                if self.label is not None:
                    row.append(_fmt(self.label[i]))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path: str | Path, delimiter: str = ",") -> "FeatureTable":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh, delimiter=delimiter)
            try:
                header = next(reader)
            except StopIteration:
                raise FormatError(f"{path} is empty") from None
            if not header or header[0] != "date":
                raise SchemaError(f"{path}: first column must be 'date'")
            body = [r for r in reader if r]
        dates = np.array([r[0] for r in body], dtype="datetime64[D]")
        data = np.array([[_parse(v) for v in r[1:]] for r in body], dtype=float).reshape(len(body), len(header) - 1)
        columns = {name: data[:, j].copy() for j, name in enumerate(header[1:]) if name != LABEL_COLUMN}
        label = None
        if LABEL_COLUMN in header[1:]:
            label = data[:, header[1:].index(LABEL_COLUMN)].copy()
        return cls(dates, columns, label)


def _fmt(v) -> str:
    v = float(v)
    return "" if np.isnan(v) else repr(v)


def _parse(v: str) -> float:
    return float(v) if v else np.nan
