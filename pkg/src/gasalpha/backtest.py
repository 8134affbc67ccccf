"""Long/short simulation of daily class predictions and single-factor diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDataError, ShapeError, UndefinedCorrelationError, UndefinedSignalError
from .gpalpha.fitness import spearman_ic


@dataclass
class BacktestReport:
    """Row t holds the position taken at t and the log return earned over t -> t+1."""

    dates: np.ndarray
    position: np.ndarray
    asset_return: np.ndarray
    cost: np.ndarray
    strategy_return: np.ndarray
    curve: np.ndarray
    benchmark: np.ndarray

    @property
    def total_return(self) -> float:
        return float(self.curve[-1]) if len(self.curve) else 0.0

    def summary(self) -> dict:
        return {
            "days": int(len(self.position)),
            "total_log_return": self.total_return,
            "benchmark_log_return": float(self.benchmark[-1]) if len(self.benchmark) else 0.0,
            "max_drawdown": max_drawdown(self.curve),
            "benchmark_max_drawdown": max_drawdown(self.benchmark),
            "long_days": int(np.sum(self.position > 0)),
            "short_days": int(np.sum(self.position < 0)),
            "position_changes": int(np.sum(self.cost > 0)),
        }

    def write_curves(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "position", "strategy", "benchmark"])
            for d, p, s, b in zip(self.dates, self.position, self.curve, self.benchmark):
                w.writerow([str(d), int(p), repr(float(s)), repr(float(b))])


def buy_and_hold(log_returns) -> np.ndarray:
    r = np.asarray(log_returns, dtype=float)
    if len(r) == 0:
        raise EmptyDataError("buy-and-hold needs at least one return")
    return np.cumsum(r)


def max_drawdown(curve) -> float:
    """Most negative fall of a cumulative log-return curve from its running peak (start counts as 0)."""
    c = np.concatenate([[0.0], np.asarray(curve, dtype=float)])
    return float(np.min(c - np.maximum.accumulate(c)))


def _simulate(position: np.ndarray, log_returns: np.ndarray, cost_bps: float, dates) -> BacktestReport:
    if cost_bps < 0:
        raise ValueError("cost_bps must be >= 0")
    prev = np.concatenate([[0.0], position[:-1]])
    cost = cost_bps / 1e4 * np.abs(position - prev) if cost_bps else np.zeros(len(position))
    strat = position * log_returns - cost
    if dates is None:
        dates = np.arange(len(position))
    return BacktestReport(np.asarray(dates), position, log_returns, cost, strat, np.cumsum(strat),
                          buy_and_hold(log_returns))


def run_strategy(predictions, log_returns, cost_bps: float = 0.0, dates=None) -> BacktestReport:
    """Long on predicted class 1, short otherwise.

    The position decided at t earns ``log_returns[t]`` (the t -> t+1 return).
    Each unit change of position costs ``cost_bps`` basis points; the book
    starts flat, so the first trade is charged too.
    """
    pred = np.asarray(predictions)
    r = np.asarray(log_returns, dtype=float)
    if pred.shape != r.shape:
        raise ShapeError(f"{len(pred)} predictions for {len(r)} returns")
    position = np.where(pred == 1, 1.0, -1.0)
    return _simulate(position, r, cost_bps, dates)


def single_factor_positions(factor, train_factor, train_returns) -> np.ndarray:
    """Sign of the training IC times the side of the training median; ties hold the last position."""
    try:
        ic = spearman_ic(np.asarray(train_factor, float), np.asarray(train_returns, float))
    except UndefinedCorrelationError as exc:
        raise UndefinedSignalError(f"factor has no usable training IC: {exc}") from exc
    if ic == 0:
        raise UndefinedSignalError("training IC is exactly zero")
    s = 1.0 if ic > 0 else -1.0
    train_factor = np.asarray(train_factor, float)
    median = float(np.median(train_factor[np.isfinite(train_factor)]))
    side = np.sign(np.asarray(factor, dtype=float) - median)
    pos = np.empty(len(side))
    last = 1.0
    for t, v in enumerate(side):
        if v > 0 or v < 0:
            last = s * v
        pos[t] = last
    return pos


def single_factor_backtest(factor, log_returns, train_window: slice, cost_bps: float = 0.0,
                           dates=None) -> BacktestReport:
    """Trade one factor over the rows after ``train_window``.

    ``factor`` and ``log_returns`` cover the whole history; the training
    window fixes the IC sign and median, the rest is simulated.
    """
    f = np.asarray(factor, dtype=float)
    r = np.asarray(log_returns, dtype=float)
    if f.shape != r.shape:
        raise ShapeError("factor and returns differ in length")
    stop = train_window.stop
    pos = single_factor_positions(f[stop:], f[train_window], r[train_window])
    return _simulate(pos, r[stop:], cost_bps, None if dates is None else np.asarray(dates)[stop:])
