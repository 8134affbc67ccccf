"""Rolling news-sentiment ratios aligned to trading dates.

Records arrive already labeled positive/neutral/negative; this module only
counts them.  A window covers the calendar days ``[t - w + 1, t]``, so a
value at date ``t`` never sees news timestamped after the end of day ``t``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataio import parse_date
from .errors import EmptyDataError, FormatError, SchemaError
from .table import FeatureTable

LABELS = ("negative", "neutral", "positive")
_CODE = {"negative": -1, "neutral": 0, "positive": 1}


@dataclass(frozen=True)
class NewsRecords:
    timestamps: np.ndarray  # datetime64[s], sorted
    sentiment: np.ndarray  # -1 negative, 0 neutral, +1 positive

    def __len__(self) -> int:
        return len(self.timestamps)

    def distinct_dates(self) -> np.ndarray:
        return np.unique(self.timestamps.astype("datetime64[D]"))


def _parse_timestamp(text: str, row: int) -> np.datetime64:
    s = text.strip()
    try:
        return np.datetime64(s.replace(" ", "T").rstrip("Z"), "s")
    except ValueError:
        return parse_date(s, row).astype("datetime64[s]")


def make_records(timestamps: Sequence, labels: Sequence[str]) -> NewsRecords:
    codes = []
    for i, lab in enumerate(labels):
        key = str(lab).strip().lower()
        if key not in _CODE:
            raise SchemaError(f"record {i}: unknown sentiment label {lab!r}")
        codes.append(_CODE[key])
    ts = np.array(timestamps, dtype="datetime64[s]")
    order = np.lexsort((np.array(codes), ts))
    return NewsRecords(ts[order], np.array(codes, dtype=np.int8)[order])


def load_news(
    path: str | Path,
    *,
    timestamp_column: str = "timestamp",
    sentiment_column: str = "sentiment",
    delimiter: str = ",",
) -> NewsRecords:
    with Path(path).open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise EmptyDataError(f"{path} is empty") from None
        for col in (timestamp_column, sentiment_column):
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        ti, si = header.index(timestamp_column), header.index(sentiment_column)
        ts, labels = [], []
        for rownum, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) <= max(ti, si):
                raise FormatError("too few fields", rownum)
            lab = rec[si].strip().lower()
            if lab not in _CODE:
                raise SchemaError(f"row {rownum}: unknown sentiment label {rec[si]!r}")
            ts.append(_parse_timestamp(rec[ti], rownum))
            labels.append(lab)
    return make_records(ts, labels)


def rolling_ratios(
    records: NewsRecords,
    dates: np.ndarray,
    windows: Sequence[int] = (7, 30),
    extended: bool = False,
) -> FeatureTable:
    """Positive and negative shares of all records in each trailing calendar window.

    A window with no records yields NaN.  ``extended`` adds ``log1p`` of the
    record count and the net tone (P - N) / T for every window.
    """
    dates = np.asarray(dates, dtype="datetime64[D]")
    days = records.timestamps.astype("datetime64[D]").astype(np.int64)
    pos_days = days[records.sentiment == 1]
    neg_days = days[records.sentiment == -1]
    d = dates.astype(np.int64)
    out = FeatureTable(dates.copy())

    def count(sorted_days: np.ndarray, w: int) -> np.ndarray:
        return (np.searchsorted(sorted_days, d, side="right") - np.searchsorted(sorted_days, d - w, side="right")).astype(float)

    for w in windows:
        if w < 1:
            raise ValueError("window must be >= 1")
        total = count(days, w)
        pos = count(pos_days, w)
        neg = count(neg_days, w)
        with np.errstate(invalid="ignore", divide="ignore"):
            share_pos = np.where(total > 0, pos / total, np.nan)
            share_neg = np.where(total > 0, neg / total, np.nan)
        out.add(f"positive_ratio_{w}d", share_pos)
        out.add(f"negative_ratio_{w}d", share_neg)
        if extended:
            out.add(f"log_news_count_{w}d", np.log1p(total))
            out.add(f"net_sentiment_{w}d", share_pos - share_neg)
    return out


def join_sentiment(table: FeatureTable, factors: FeatureTable, restrict: bool = True) -> FeatureTable:
    """Merge sentiment columns into ``table`` by date.

    With ``restrict`` the result keeps only dates where every sentiment column
    is present (the news-covered window).
    """
    pos = np.searchsorted(factors.dates, table.dates)
    hit = (pos < len(factors.dates)) & (factors.dates[np.minimum(pos, len(factors.dates) - 1)] == table.dates)
    merged = FeatureTable(table.dates, dict(table.columns), table.label)
    for name, col in factors.columns.items():
        vals = np.full(len(table), np.nan)
        vals[hit] = col[pos[hit]]
        merged.add(name, vals)
    if not restrict:
        return merged
    covered = hit.copy()
    for name in factors.columns:
        covered &= np.isfinite(merged[name])
    idx = np.flatnonzero(covered)
    if not len(idx):
        raise EmptyDataError("no trading dates are covered by the news records")
    return merged.rows(slice(idx[0], idx[-1] + 1))
