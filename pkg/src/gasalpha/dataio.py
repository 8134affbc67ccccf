"""Daily OHLCV ingestion, next-day labeling and leakage-free splitting."""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    DomainError,
    EmptyDataError,
    FormatError,
    SchemaError,
)

logger = logging.getLogger(__name__)

PRICE_FIELDS = ("open", "high", "low", "close", "adj_close", "volume")
HEADER_NAMES = ("Date", "Open", "High", "Low", "Close", "Adj Close", "Volume")
MISSING_TOKENS = frozenset({"", "null", "nan", "na", "n/a", "none", "-"})

_ISO_DATE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})(?:[T ][0-9:.]+(?:Z|[+-]\d{2}:?\d{2})?)?$")
_DMY_DATE = re.compile(r"^(\d{1,2})/(\d{1,2})/(\d{4})$")


@dataclass(frozen=True)
class OhlcvSeries:
    dates: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    adj_close: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        n = len(self.dates)
        for name in PRICE_FIELDS:
            if len(getattr(self, name)) != n:
                raise SchemaError(f"column {name!r} has length {len(getattr(self, name))}, expected {n}")
        if n > 1 and not np.all(np.diff(self.dates.astype("datetime64[D]").astype(np.int64)) > 0):
            raise FormatError("dates must be strictly increasing without duplicates")

    def __len__(self) -> int:
        return len(self.dates)

    def price(self, name: str) -> np.ndarray:
        if name not in PRICE_FIELDS:
            raise ConfigurationError(f"unknown price column {name!r}")
        return getattr(self, name)

    def slice(self, start: int, stop: int) -> "OhlcvSeries":
        return OhlcvSeries(self.dates[start:stop], *(getattr(self, f)[start:stop] for f in PRICE_FIELDS))


@dataclass(frozen=True)
class LabelSeries:
    """Next-day log return and binary label keyed by the prediction date."""

    dates: np.ndarray
    log_return: np.ndarray
    label: np.ndarray
    threshold: float = 0.001

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class SplitSpec:
    train: range
    val: range
    test: range

    def __post_init__(self):
        if not (self.train.start == 0 and self.train.stop == self.val.start and self.val.stop == self.test.start):
            raise ConfigurationError("split ranges must be contiguous and ordered train < val < test")


@dataclass(frozen=True)
class FoldSpec:
    folds: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.folds)

    def __len__(self) -> int:
        return len(self.folds)


def _normalize(name: str) -> str:
    return re.sub(r"[\s_\-]", "", name.strip().lower())


def parse_date(text: str, row: int | None = None) -> np.datetime64:
    """Parse an ISO-8601 (``2015-07-14``) or day-first (``14/07/2015``) date."""
    s = text.strip()
    m = _ISO_DATE.match(s)
    if m:
        y, mo, d = (int(g) for g in m.groups())
    else:
        m = _DMY_DATE.match(s)
        if not m:
            raise FormatError(f"unrecognised or ambiguous date {text!r}", row)
        d, mo, y = (int(g) for g in m.groups())
    try:
        return np.datetime64(f"{y:04d}-{mo:02d}-{d:02d}", "D")
    except ValueError as exc:
        raise FormatError(f"invalid calendar date {text!r}", row) from exc


def _parse_number(text: str, row: int, column: str) -> float:
    s = text.strip()
    if s.lower() in MISSING_TOKENS:
        return math.nan
    try:
        return float(s)
    except ValueError as exc:
        raise FormatError(f"column {column!r}: cannot parse {text!r} as a number", row) from exc


def forward_fill(values: np.ndarray) -> np.ndarray:
    """Propagate the last observed value forward; leading gaps stay NaN."""
    values = np.asarray(values, dtype=float)
    idx = np.where(np.isnan(values), 0, np.arange(len(values)))
    np.maximum.accumulate(idx, out=idx)
    out = values[idx]
    if len(values) and np.isnan(values[0]):
        first = np.flatnonzero(~np.isnan(values))
        out[: first[0] if len(first) else len(values)] = np.nan
    return out


def load_ohlcv(
    path: str | Path,
    imputation: str = "forward_fill",
    *,
    date_column: str = "Date",
    delimiter: str = ",",
    dump: str | Path | None = None,
) -> OhlcvSeries:
    """Read a delimited OHLCV file, sort by date and forward-fill gaps.

    Rows before the first fully observed row are dropped, since forward
    filling cannot reach them without looking ahead.
    """
    if imputation != "forward_fill":
        raise ConfigurationError(f"unsupported imputation {imputation!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path} is empty") from None
        lookup = {_normalize(h): i for i, h in enumerate(header)}
        wanted = {"date": _normalize(date_column)} | {f: _normalize(f) for f in PRICE_FIELDS}
        missing = [HEADER_NAMES[k] if k else date_column for k, key in enumerate(wanted.values()) if key not in lookup]
        if missing:
            raise SchemaError(f"{path}: missing required column(s) {', '.join(missing)}")
        cols = {k: lookup[v] for k, v in wanted.items()}

        dates: list[np.datetime64] = []
        rows: list[list[float]] = []
        for rownum, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) < len(header):
                raise FormatError(f"expected {len(header)} fields, found {len(rec)}", rownum)
            dates.append(parse_date(rec[cols["date"]], rownum))
            rows.append([_parse_number(rec[cols[f]], rownum, f) for f in PRICE_FIELDS])

    if not rows:
        raise EmptyDataError(f"{path} has no data rows")
    d = np.array(dates, dtype="datetime64[D]")
    values = np.array(rows, dtype=float)
    order = np.argsort(d, kind="stable")
    d, values = d[order], values[order]
    dup = np.flatnonzero(d[1:] == d[:-1])
    if len(dup):
        raise FormatError(f"duplicate date {d[dup[0]]}")

    complete = np.flatnonzero(~np.isnan(values).any(axis=1))
    if not len(complete):
        raise EmptyDataError(f"{path} has no complete row")
    start = complete[0]
    d, values = d[start:], values[start:]
    filled = np.column_stack([forward_fill(values[:, j]) for j in range(values.shape[1])])
    n_imputed = int(np.isnan(values).sum())
    if n_imputed:
        logger.info("forward-filled %d missing cells", n_imputed)

    o, h, lo, c = filled[:, 0], filled[:, 1], filled[:, 2], filled[:, 3]
    # imputed rows can break the bar ordering; widen high/low to cover open/close
    fixed_high = np.maximum(h, np.maximum(o, c))
    fixed_low = np.minimum(lo, np.minimum(o, c))
    repaired = int(np.count_nonzero((fixed_high != h) | (fixed_low != lo)))
    if repaired:
        logger.warning("widened high/low on %d rows to contain open/close", repaired)
    filled[:, 1], filled[:, 2] = fixed_high, fixed_low
    if np.any(filled[:, 5] < 0):
        raise DomainError("negative volume")

    series = OhlcvSeries(d, *(filled[:, j].copy() for j in range(6)))
    if dump is not None:
        dump_ohlcv(series, dump, delimiter=delimiter)
    return series


def dump_ohlcv(series: OhlcvSeries, path: str | Path, delimiter: str = ",") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(HEADER_NAMES)
        for i in range(len(series)):
            w.writerow([str(series.dates[i])] + [repr(float(getattr(series, f)[i])) for f in PRICE_FIELDS])


def make_labels(series: OhlcvSeries, threshold: float = 0.001, price: str = "close") -> LabelSeries:
    """Label date t with 1 when the log return t -> t+1 exceeds ln(1 + threshold).

    The final date has no next-day return and is therefore not labeled.
    """
    if len(series) < 2:
        raise EmptyDataError("need at least two rows to form a next-day return")
    if threshold < 0:
        raise ConfigurationError("threshold must be non-negative")
    p = series.price(price)
    if np.any(~(p > 0)):
        bad = int(np.flatnonzero(~(p > 0))[0])
        raise DomainError(f"non-positive {price} price at {series.dates[bad]}")
    lr = np.log(p[1:] / p[:-1])
    label = (lr > np.log1p(threshold)).astype(np.int8)
    return LabelSeries(series.dates[:-1].copy(), lr, label, float(threshold))


def chrono_split(n: int, test_frac: float = 0.2, val_frac_of_train: float = 0.1) -> SplitSpec:
    """Chronological train/validation/test ranges; nothing is shuffled."""
    if not 0 < test_frac < 1:
        raise ConfigurationError("test_frac must lie in (0, 1)")
    if not 0 <= val_frac_of_train < 1:
        raise ConfigurationError("val_frac_of_train must lie in [0, 1)")
    # the epsilon keeps 80 * 0.1 style products from flooring one short
    n_test = math.floor(n * test_frac + 1e-9)
    rest = n - n_test
    n_val = math.floor(rest * val_frac_of_train + 1e-9)
    n_train = rest - n_val
    if n_test < 1 or n_train < 1 or (val_frac_of_train > 0 and n_val < 1):
        raise ConfigurationError(
            f"split of n={n} with test_frac={test_frac}, val_frac={val_frac_of_train} leaves an empty range"
        )
    return SplitSpec(range(0, n_train), range(n_train, rest), range(rest, n))


def tscv_folds(n: int, k: int, min_train: int) -> FoldSpec:
    """Expanding-window folds whose test blocks tile ``[min_train, n)``.

    When the region does not divide evenly the earlier test blocks are one
    row longer.
    """
    if k < 2:
        raise ConfigurationError("need at least 2 folds")
    if min_train < 1:
        raise ConfigurationError("min_train must be at least 1")
    if n <= min_train + k:
        raise ConfigurationError(f"cannot fit {k} folds after {min_train} training rows in n={n}")
    sizes = np.full(k, (n - min_train) // k)
    sizes[: (n - min_train) % k] += 1
    folds = []
    start = min_train
    for size in sizes:
        folds.append((np.arange(0, start), np.arange(start, start + size)))
        start += size
    return FoldSpec(folds)
