"""Base technical-indicator columns computed from daily OHLCV bars.

All indicators are causal: the value at row ``t`` only reads rows ``<= t``.
Rows before an indicator's lookback is satisfied are NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataio import OhlcvSeries
from .errors import ConfigurationError, EmptyColumnError
from .table import FeatureTable


class Column(NamedTuple):
    name: str
    values: np.ndarray


# helpers -----------------------------------------------------------------


def _check_window(n: int, window: int) -> None:
    if window < 1:
        raise ConfigurationError(f"window must be >= 1, got {window}")
    if window > n:
        raise EmptyColumnError(f"window {window} exceeds series length {n}")


def rolling(x: np.ndarray, window: int, func) -> np.ndarray:
    """Apply ``func(windows, axis=-1)`` over trailing windows; NaN warm-up."""
    x = np.asarray(x, dtype=float)
    out = np.full(len(x), np.nan)
    if window <= len(x):
        out[window - 1 :] = func(sliding_window_view(x, window), axis=-1)
    return out


def sma(x: np.ndarray, window: int) -> np.ndarray:
    return rolling(x, window, np.mean)


def shift(x: np.ndarray, n: int) -> np.ndarray:
    out = np.full(len(x), np.nan)
    if n < len(x):
        out[n:] = x[: len(x) - n]
    return out


def ema(x: np.ndarray, period: int) -> np.ndarray:
    """Exponential average seeded with the simple mean of the first ``period`` valid values."""
    x = np.asarray(x, dtype=float)
    out = np.full(len(x), np.nan)
    valid = np.flatnonzero(np.isfinite(x))
    if not len(valid):
        return out
    start = valid[0]
    if len(x) - start < period:
        return out
    alpha = 2.0 / (period + 1)
    seed = start + period - 1
    prev = float(np.mean(x[start : seed + 1]))
    out[seed] = prev
    for t in range(seed + 1, len(x)):
        prev = alpha * x[t] + (1 - alpha) * prev
        out[t] = prev
    return out


def wilder(x: np.ndarray, period: int, start: int) -> np.ndarray:
    """Wilder smoothing seeded with the mean of ``x[start:start+period]``."""
    out = np.full(len(x), np.nan)
    seed = start + period - 1
    if seed >= len(x):
        return out
    prev = float(np.mean(x[start : seed + 1]))
    out[seed] = prev
    for t in range(seed + 1, len(x)):
        prev = (prev * (period - 1) + x[t]) / period
        out[t] = prev
    return out


# indicator kernels ----------------------------------------------------------


def moving_average(s: OhlcvSeries, window: int) -> np.ndarray:
    return sma(s.close, window)


def close_ma_diff(s: OhlcvSeries, window: int) -> np.ndarray:
    return s.close - sma(s.close, window)


def kama(s: OhlcvSeries, window: int = 10, fast: int = 2, slow: int = 30) -> np.ndarray:
    c = s.close
    out = np.full(len(c), np.nan)
    if len(c) <= window:
        return out
    fast_sc, slow_sc = 2.0 / (fast + 1), 2.0 / (slow + 1)
    step = np.abs(np.diff(c, prepend=np.nan))
    prev = c[window - 1]
    for t in range(window, len(c)):
        change = abs(c[t] - c[t - window])
        volatility = step[t - window + 1 : t + 1].sum()
        er = change / volatility if volatility > 0 else 0.0
        sc = (er * (fast_sc - slow_sc) + slow_sc) ** 2
        prev = prev + sc * (c[t] - prev)
        out[t] = prev
    return out


def macd(s: OhlcvSeries, fast: int = 12, slow: int = 26, signal: int = 9) -> tuple[np.ndarray, np.ndarray]:
    line = ema(s.close, fast) - ema(s.close, slow)
    return line, ema(line, signal)


def open_close(s: OhlcvSeries) -> np.ndarray:
    return s.open - s.close


def high_low(s: OhlcvSeries) -> np.ndarray:
    return s.high - s.low


def gap(s: OhlcvSeries) -> np.ndarray:
    return s.open / shift(s.close, 1) - 1.0


def log_returns(s: OhlcvSeries) -> np.ndarray:
    return np.log(s.close / shift(s.close, 1))


def cum_log_return(s: OhlcvSeries, window: int) -> np.ndarray:
    """Sum of the last ``window`` daily log returns, i.e. ln(C_t / C_{t-window})."""
    return rolling(log_returns(s), window, np.sum)


def stochastic(s: OhlcvSeries, fastk: int = 9, slowk: int = 3, slowd: int = 3):
    """KDJ as %K, %D and J = 3K - 2D.  A zero high-low range gives a raw value of 50."""
    hh = rolling(s.high, fastk, np.max)
    ll = rolling(s.low, fastk, np.min)
    rng = hh - ll
    with np.errstate(invalid="ignore", divide="ignore"):
        raw = np.where(rng > 0, (s.close - ll) / rng * 100.0, 50.0)
    raw[np.isnan(rng)] = np.nan
    k = sma_nan(raw, slowk)
    d = sma_nan(k, slowd)
    return k, d, 3 * k - 2 * d


def sma_nan(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean that starts after a leading NaN warm-up."""
    out = np.full(len(x), np.nan)
    valid = np.flatnonzero(np.isfinite(x))
    if len(valid) and len(x) - valid[0] >= window:
        out[valid[0] :] = sma(x[valid[0] :], window)
    return out


def rsi(s: OhlcvSeries, period: int = 14) -> np.ndarray:
    """Wilder RSI.  A window without any price change is reported as 50."""
    delta = np.diff(s.close, prepend=np.nan)
    gain = np.where(delta > 0, delta, 0.0)
    loss = np.where(delta < 0, -delta, 0.0)
    avg_gain = wilder(gain, period, 1)
    avg_loss = wilder(loss, period, 1)
    out = np.full(len(delta), np.nan)
    ok = np.isfinite(avg_gain)
    g, lo = avg_gain[ok], avg_loss[ok]
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(lo > 0, 100.0 - 100.0 / (1.0 + g / lo), np.where(g > 0, 100.0, 50.0))
    out[ok] = val
    return out


def bollinger(s: OhlcvSeries, window: int = 20, mult: float = 2.0):
    mid = sma(s.close, window)
    sd = rolling(s.close, window, np.std)
    return mid + mult * sd, mid, mid - mult * sd


def cci(s: OhlcvSeries, window: int = 14) -> np.ndarray:
    tp = (s.high + s.low + s.close) / 3.0
    out = np.full(len(tp), np.nan)
    if window > len(tp):
        return out
    win = sliding_window_view(tp, window)
    ma = win.mean(axis=-1)
    md = np.abs(win - ma[:, None]).mean(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[window - 1 :] = np.where(md > 0, (tp[window - 1 :] - ma) / (0.015 * md), 0.0)
    return out


def roc(s: OhlcvSeries, window: int) -> np.ndarray:
    prev = shift(s.close, window)
    return (s.close - prev) / prev


def rocp(s: OhlcvSeries, window: int) -> np.ndarray:
    return roc(s, window) * 100.0


def momentum(s: OhlcvSeries, window: int) -> np.ndarray:
    return s.close - shift(s.close, window)


def true_range(s: OhlcvSeries) -> np.ndarray:
    pc = shift(s.close, 1)
    tr = np.maximum(s.high - s.low, np.maximum(np.abs(s.high - pc), np.abs(s.low - pc)))
    tr[0] = s.high[0] - s.low[0]
    return tr


def atr(s: OhlcvSeries, period: int = 14) -> np.ndarray:
    """Wilder-smoothed true range, seeded with the first bar's high-low range."""
    tr = true_range(s)
    out = np.empty(len(tr))
    prev = tr[0]
    out[0] = prev
    for t in range(1, len(tr)):
        prev = (prev * (period - 1) + tr[t]) / period
        out[t] = prev
    return out


def willr(s: OhlcvSeries, window: int = 14) -> np.ndarray:
    hh = rolling(s.high, window, np.max)
    ll = rolling(s.low, window, np.min)
    rng = hh - ll
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(rng > 0, (hh - s.close) / rng * -100.0, -50.0)
    out[np.isnan(rng)] = np.nan
    return out


# registry ---------------------------------------------------------------------

# kind -> (function, output index or None, default params, column name pattern)
_KINDS = {
    "moving_avg": (moving_average, None, {}, "moving_avg_{window}"),
    "close_ma_diff": (close_ma_diff, None, {}, "close_ma_diff_{window}"),
    "kama": (kama, None, {"window": 10, "fast": 2, "slow": 30}, "kama_{window}"),
    "macd": (macd, 0, {"fast": 12, "slow": 26, "signal": 9}, "macd"),
    "macd_signal": (macd, 1, {"fast": 12, "slow": 26, "signal": 9}, "macd_signal"),
    "o_c": (open_close, None, {}, "o_c"),
    "h_l": (high_low, None, {}, "h_l"),
    "gap": (gap, None, {}, "gap"),
    "CumLgReturn": (cum_log_return, None, {}, "CumLgReturn_{window}d"),
    "kdj_k": (stochastic, 0, {"fastk": 9, "slowk": 3, "slowd": 3}, "kdj_k"),
    "kdj_d": (stochastic, 1, {"fastk": 9, "slowk": 3, "slowd": 3}, "kdj_d"),
    "kdj_j": (stochastic, 2, {"fastk": 9, "slowk": 3, "slowd": 3}, "kdj_j"),
    "rsi": (rsi, None, {"period": 14}, "rsi_{period}"),
    "boll_upper": (bollinger, 0, {"window": 20, "mult": 2.0}, "boll_upper_{window}"),
    "boll_mid": (bollinger, 1, {"window": 20, "mult": 2.0}, "boll_mid_{window}"),
    "boll_lower": (bollinger, 2, {"window": 20, "mult": 2.0}, "boll_lower_{window}"),
    "cci": (cci, None, {"window": 14}, "cci_{window}"),
    "roc": (roc, None, {}, "roc_{window}"),
    "rocp": (rocp, None, {}, "rocp_{window}"),
    "mom": (momentum, None, {}, "mom_{window}"),
    "atr": (atr, None, {"period": 14}, "atr_{period}"),
    "willr": (willr, None, {"window": 14}, "willr_{window}"),
}

INDICATOR_KINDS = tuple(_KINDS)
_WINDOWED = frozenset({"moving_avg", "close_ma_diff", "CumLgReturn", "roc", "rocp", "mom"})


def compute_indicator(series: OhlcvSeries, kind: str, **params) -> Column:
    """Compute one indicator column, e.g. ``compute_indicator(s, "roc", window=5)``."""
    try:
        func, index, defaults, pattern = _KINDS[kind]
    except KeyError:
        raise ConfigurationError(f"unknown indicator kind {kind!r}") from None
    p = {**defaults, **params}
    if kind in _WINDOWED and "window" not in p:
        raise ConfigurationError(f"{kind} requires a window")
    for key in ("window", "period", "fastk") + (("slow",) if func is macd else ()):
        if key in p:
            _check_window(len(series), int(p[key]))
    out = func(series, **p)
    values = out if index is None else out[index]
    return Column(pattern.format(**p), np.asarray(values, dtype=float))


@dataclass(frozen=True)
class IndicatorConfig:
    ma_windows: tuple[int, ...] = (5, 10, 20, 30, 60, 120)
    momentum_windows: tuple[int, ...] = (1, 5, 10, 20, 30)
    cum_windows: tuple[int, ...] = (3, 5, 10, 20, 40, 60, 110, 140)
    rsi_period: int = 14
    kdj: tuple[int, int, int] = (9, 3, 3)
    kama: tuple[int, int, int] = (10, 2, 30)
    macd: tuple[int, int, int] = (12, 26, 9)
    boll: tuple[int, float] = (20, 2.0)
    cci_window: int = 14
    atr_period: int = 14
    willr_window: int = 14

    def requests(self) -> list[tuple[str, dict]]:
        reqs: list[tuple[str, dict]] = []
        for w in self.ma_windows:
            reqs += [("moving_avg", {"window": w}), ("close_ma_diff", {"window": w})]
        fast, slow, sig = self.macd
        reqs += [
            ("kama", dict(zip(("window", "fast", "slow"), self.kama))),
            ("macd", {"fast": fast, "slow": slow, "signal": sig}),
            ("macd_signal", {"fast": fast, "slow": slow, "signal": sig}),
            ("o_c", {}),
            ("h_l", {}),
            ("gap", {}),
        ]
        reqs += [("CumLgReturn", {"window": w}) for w in self.cum_windows]
        kdj = dict(zip(("fastk", "slowk", "slowd"), self.kdj))
        reqs += [("kdj_k", kdj), ("kdj_d", kdj), ("kdj_j", kdj), ("rsi", {"period": self.rsi_period})]
        boll = {"window": self.boll[0], "mult": self.boll[1]}
        reqs += [("boll_upper", boll), ("boll_mid", boll), ("boll_lower", boll)]
        reqs += [("cci", {"window": self.cci_window})]
        for kind in ("roc", "rocp", "mom"):
            reqs += [(kind, {"window": w}) for w in self.momentum_windows]
        reqs += [("atr", {"period": self.atr_period}), ("willr", {"window": self.willr_window})]
        return reqs


def build_base_features(series: OhlcvSeries, config: IndicatorConfig | None = None) -> FeatureTable:
    """One column per configured (kind, window); names follow ``<kind>_<window>``."""
    config = config or IndicatorConfig()
    table = FeatureTable(series.dates.copy())
    for kind, params in config.requests():
        col = compute_indicator(series, kind, **params)
        table.add(col.name, col.values)
    return table
