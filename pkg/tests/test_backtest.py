import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gasalpha.backtest import (
    buy_and_hold, max_drawdown, run_strategy, single_factor_backtest, single_factor_positions,
)
from gasalpha.errors import EmptyDataError, ShapeError, UndefinedSignalError
from gasalpha.synthetic import random_ohlcv


def returns(n=250, seed=0):
    return np.random.default_rng(seed).normal(0, 0.02, n)


def test_all_long_is_buy_and_hold_bit_exact():
    r = returns()
    rep = run_strategy(np.ones(len(r), int), r)
    assert np.array_equal(rep.curve, buy_and_hold(r)) and np.array_equal(rep.curve, rep.benchmark)


def test_all_short_mirrors_benchmark():
    r = returns(seed=1)
    rep = run_strategy(np.zeros(len(r), int), r)
    assert np.array_equal(rep.curve, -buy_and_hold(r))


def test_perfect_foresight():
    r = returns(seed=2)
    rep = run_strategy((r > 0).astype(int), r)
    assert np.allclose(rep.strategy_return, np.abs(r), rtol=0, atol=1e-12)


def test_buy_and_hold_small_cases():
    assert buy_and_hold([0.1, -0.1]).tolist() == [0.1, 0.0]
    assert buy_and_hold(np.zeros(5)).tolist() == [0.0] * 5
    with pytest.raises(EmptyDataError):
        buy_and_hold([])


def test_buy_and_hold_price_ratio():
    s = random_ohlcv(500, seed=9)
    lr = np.log(s.close[1:] / s.close[:-1])
    assert np.exp(buy_and_hold(lr)[-1]) == pytest.approx(s.close[-1] / s.close[0], rel=1e-9)


def test_costs_charge_each_unit_of_turnover():
    r = np.zeros(4)
    rep = run_strategy([1, 0, 0, 1], r, cost_bps=10)
    # flat -> long (1 unit), long -> short (2), short -> short (0), short -> long (2)
    assert rep.cost.tolist() == pytest.approx([0.001, 0.002, 0.0, 0.002])
    assert rep.summary()["position_changes"] == 3
    with pytest.raises(ShapeError):
        run_strategy([1, 0], [0.1])


def brute_drawdown(curve):
    c = [0.0] + list(curve)
    return min(min(c[j] - c[i] for j in range(i, len(c))) for i in range(len(c)))


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=120))
def test_max_drawdown_brute_force(vals):
    curve = np.cumsum(vals)
    got = max_drawdown(curve)
    assert got <= 0 and got == pytest.approx(brute_drawdown(curve), abs=1e-12)


def test_oracle_factor_dominates():
    r = returns(400, 3)
    rep = single_factor_backtest(r, r, slice(0, 200))
    assert rep.total_return > rep.benchmark[-1] and len(rep.position) == 200


def test_null_factor_averages_to_zero():
    totals = []
    for seed in range(200):
        rng = np.random.default_rng(seed)
        r = rng.normal(0, 0.02, 300)
        f = rng.normal(size=300)
        totals.append(single_factor_backtest(f, r, slice(0, 150)).total_return)
    sd = 0.02 * np.sqrt(150)
    assert abs(np.mean(totals)) < 4 * sd / np.sqrt(len(totals))


@given(st.integers(0, 10_000))
def test_sign_flip_absorbed_by_ic(seed):
    rng = np.random.default_rng(seed)
    r = rng.normal(size=120)
    f = r + rng.normal(size=120)
    a = single_factor_positions(f[60:], f[:60], r[:60])
    b = single_factor_positions(-f[60:], -f[:60], r[:60])
    assert np.array_equal(a, b)


@given(st.integers(0, 10_000), st.integers(0, 58))
def test_positions_are_causal(seed, t):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=60)
    train, tr = rng.normal(size=40), rng.normal(size=40)
    g = f.copy()
    g[t + 1:] = rng.normal(size=60 - t - 1) * 10
    a = single_factor_positions(f, train, tr)
    b = single_factor_positions(g, train, tr)
    assert np.array_equal(a[: t + 1], b[: t + 1])


def test_undefined_signal():
    with pytest.raises(UndefinedSignalError):
        single_factor_positions(np.ones(5), np.ones(10), np.arange(10.0))


def test_curves_file(tmp_path):
    r = returns(5)
    run_strategy([1, 0, 1, 1, 0], r, dates=np.datetime64("2021-01-01") + np.arange(5)).write_curves(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "date,position,strategy,benchmark" and lines[1].startswith("2021-01-01,1,")
