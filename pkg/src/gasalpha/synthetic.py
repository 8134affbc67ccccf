"""Seeded synthetic markets, news streams and planted-signal fixtures."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dataio import LabelSeries, OhlcvSeries
from .indicators import IndicatorConfig, build_base_features
from .table import FeatureTable


def random_ohlcv(n: int, seed: int = 0, vol: float = 0.02, start: str = "2020-01-01",
                 momentum: float = 0.0) -> OhlcvSeries:
    """Geometric random walk with consistent daily bars (calendar-day dates).

    A nonzero ``momentum`` adds ``momentum * vol`` in the direction of the
    previous five days' move, which gives the fixture something to learn.
    """
    rng = np.random.default_rng(seed)
    lr = rng.normal(0.0005, vol, n)
    if momentum:
        for t in range(5, n):
            lr[t] += momentum * vol * np.sign(lr[t - 5 : t].sum())
    close = 100.0 * np.exp(np.cumsum(lr))
    prev = np.concatenate([[100.0], close[:-1]])
    open_ = prev * np.exp(rng.normal(0, vol / 4, n))
    high = np.maximum(open_, close) * np.exp(np.abs(rng.normal(0, vol / 2, n)))
    low = np.minimum(open_, close) * np.exp(-np.abs(rng.normal(0, vol / 2, n)))
    volume = np.round(rng.lognormal(10, 0.5, n), 2)
    dates = np.datetime64(start, "D") + np.arange(n)
    return OhlcvSeries(dates, open_, high, low, close, close.copy(), volume)


def write_ohlcv_csv(series: OhlcvSeries, path: str | Path) -> None:
    """Yahoo-style header; prices rounded to cents like a real download."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"])
        for i in range(len(series)):
            w.writerow(
                [str(series.dates[i])]
                + [f"{getattr(series, f)[i]:.4f}" for f in ("open", "high", "low", "close", "adj_close")]
                + [f"{series.volume[i]:.2f}"]
            )


def planted_returns(signal: np.ndarray, seed: int, flip_rate: float = 0.1, scale: float = 0.01) -> np.ndarray:
    """Forward returns driven by ``signal`` whose sign disagrees with it on about ``flip_rate`` of rows.

    With Gaussian noise of standard deviation tan(pi * flip_rate) added to the
    z-scored signal, the probability of a sign flip is exactly ``flip_rate``
    for a Gaussian signal.
    """
    rng = np.random.default_rng(seed + 7919)
    ok = np.isfinite(signal)
    z = np.full(len(signal), np.nan)
    z[ok] = (signal[ok] - signal[ok].mean()) / signal[ok].std()
    noise = rng.normal(0.0, np.tan(np.pi * flip_rate), len(signal))
    return scale * (z + noise)


def planted_gp_fixture(
    n: int = 700, seed: int = 0, flip_rate: float = 0.1, config: IndicatorConfig | None = None
) -> tuple[FeatureTable, LabelSeries]:
    """Base-feature table whose next-day label follows 1[roc_5 > 0] up to label noise.

    Returned rows start where every base column is defined.
    """
    config = config or IndicatorConfig(ma_windows=(5, 10, 20), cum_windows=(3, 5, 10, 20, 40))
    table = build_base_features(random_ohlcv(n, seed), config)
    table = table.rows(slice(table.valid_from, None))
    fwd = planted_returns(table["roc_5"], seed, flip_rate)
    label = (fwd > np.log1p(0.001)).astype(np.int8)
    return table, LabelSeries(table.dates.copy(), fwd, label)


def random_news(dates: np.ndarray, per_day: float = 20.0, seed: int = 0, bias: np.ndarray | None = None):
    """Timestamps and labels for a news stream; ``bias`` tilts P(positive) per day."""
    rng = np.random.default_rng(seed)
    counts = rng.poisson(per_day, len(dates))
    ts, labels = [], []
    for i, (d, k) in enumerate(zip(dates, counts)):
        tilt = 0.0 if bias is None else float(bias[i])
        p_pos = np.clip(0.35 + tilt, 0.05, 0.9)
        probs = np.array([p_pos, 0.3, 1.0 - p_pos - 0.3])
        probs = np.clip(probs, 0.01, None)
        probs /= probs.sum()
        secs = np.sort(rng.integers(0, 86400, k))
        for s, lab in zip(secs, rng.choice(3, size=k, p=probs)):
            ts.append(np.datetime64(d, "s") + int(s))
            labels.append(("positive", "neutral", "negative")[lab])
    return ts, labels


def write_news_csv(timestamps, labels, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "sentiment"])
        for t, lab in zip(timestamps, labels):
            w.writerow([str(t).replace("T", " "), lab])


def complementary_fixture(n: int = 1200, seed: int = 0, noise: float = 0.3) -> tuple[np.ndarray, np.ndarray]:
    """Four columns where the label needs both column 0 and column 2.

    A learner restricted to columns (0, 1) or (2, 3) sees half of the signal.
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    y = (X[:, 0] + X[:, 2] + noise * rng.normal(size=n) > 0).astype(int)
    return X, y
