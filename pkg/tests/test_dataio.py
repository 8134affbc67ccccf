import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gasalpha.dataio import chrono_split, forward_fill, load_ohlcv, make_labels, tscv_folds
from gasalpha.errors import ConfigurationError, EmptyDataError, FormatError, SchemaError

from conftest import make_series

HEADER = "Date,Open,High,Low,Close,Adj Close,Volume\n"


def write(tmp_path, body, header=HEADER, name="px.csv"):
    p = tmp_path / name
    p.write_text(header + body, encoding="utf-8")
    return p


def test_forward_fill_gap(tmp_path):
    p = write(tmp_path, "2021-01-01,100,100,100,100,100,5\n"
                        "2021-01-02,101,101,101,,101,5\n"
                        "2021-01-03,102,102,102,102,102,5\n")
    s = load_ohlcv(p)
    assert s.close.tolist() == [100.0, 100.0, 102.0]


def test_complete_file_is_sorted_identity(tmp_path):
    p = write(tmp_path, "2021-01-02,2,2,2,2,2,1\n2021-01-01,1,1,1,1,1,1\n2021-01-03,3,3,3,3,3,1\n")
    s = load_ohlcv(p)
    assert [str(d) for d in s.dates] == ["2021-01-01", "2021-01-02", "2021-01-03"]
    assert s.close.tolist() == [1.0, 2.0, 3.0]


def test_day_first_dates_and_header_variants(tmp_path):
    p = write(tmp_path, "14/07/2015,1,1,1,1,1,1\n15/07/2015,2,2,2,2,2,1\n",
              header="date,open,high,low,close,adj_close,volume\n")
    s = load_ohlcv(p)
    assert str(s.dates[0]) == "2015-07-14"


def test_leading_incomplete_rows_dropped(tmp_path):
    p = write(tmp_path, "2021-01-01,,1,1,1,1,1\n2021-01-02,2,2,2,2,2,1\n2021-01-03,3,3,3,3,3,1\n")
    assert len(load_ohlcv(p)) == 2


@pytest.mark.parametrize("body,header,err", [
    ("", HEADER, EmptyDataError),
    ("2021-01-01,1,1,1,1,1,1\n", "Date,Open,High,Low,Close,Volume\n", SchemaError),
    ("2021-01-01,1,1,1,1,1,1\n2021-01-01,1,1,1,1,1,1\n", HEADER, FormatError),
    ("2021-01-01,1,1,1,abc,1,1\n", HEADER, FormatError),
    ("2021-13-45,1,1,1,1,1,1\n", HEADER, FormatError),
])
def test_load_errors(tmp_path, body, header, err):
    with pytest.raises(err):
        load_ohlcv(write(tmp_path, body, header))


def test_dump_roundtrip(tmp_path, walk):
    load_path = tmp_path / "in.csv"
    from gasalpha.synthetic import write_ohlcv_csv
    write_ohlcv_csv(walk, load_path)
    s = load_ohlcv(load_path, dump=tmp_path / "dump.csv")
    again = load_ohlcv(tmp_path / "dump.csv")
    assert np.array_equal(s.close, again.close) and np.array_equal(s.dates, again.dates)


@given(st.lists(st.one_of(st.none(), st.floats(-1e6, 1e6)), min_size=1, max_size=40), st.integers(0, 39))
def test_forward_fill_is_causal(values, t):
    x = np.array([np.nan if v is None else v for v in values])
    t = min(t, len(x) - 1)
    y = x.copy()
    y[t + 1:] = 12345.0
    a, b = forward_fill(x), forward_fill(y)
    assert np.array_equal(a[: t + 1], b[: t + 1], equal_nan=True)


def test_labels_flat():
    lab = make_labels(make_series([100, 100]), 0.001)
    assert lab.log_return.tolist() == [0.0] and lab.label.tolist() == [0]


def test_labels_up_move():
    lab = make_labels(make_series([100, 101]), 0.001)
    assert lab.log_return[0] == pytest.approx(math.log(1.01), abs=1e-15)
    assert lab.log_return[0] > math.log(1.001) and lab.label[0] == 1


def test_labels_small_move_below_threshold():
    lab = make_labels(make_series([100, 100.05]), 0.001)
    assert lab.log_return[0] < math.log(1.001) and lab.label[0] == 0


def test_labels_keyed_by_prediction_date():
    s = make_series([1, 2, 3])
    lab = make_labels(s)
    assert np.array_equal(lab.dates, s.dates[:-1])


@pytest.mark.parametrize("n,test,val,expect", [
    (100, 0.2, 0.1, ((0, 72), (72, 80), (80, 100))),
    (10, 0.2, 0.0, ((0, 8), (8, 8), (8, 10))),
])
def test_chrono_split(n, test, val, expect):
    s = chrono_split(n, test, val)
    got = tuple((r.start, r.stop) for r in (s.train, s.val, s.test))
    assert got == expect


def test_chrono_split_empty_train():
    with pytest.raises(ConfigurationError):
        chrono_split(5, 0.9)


def test_tscv_enumeration():
    f = tscv_folds(10, 2, 4)
    got = [(tr.tolist(), te.tolist()) for tr, te in f]
    assert got == [(list(range(4)), [4, 5, 6]), (list(range(7)), [7, 8, 9])]


def test_tscv_infeasible():
    with pytest.raises(ConfigurationError):
        tscv_folds(6, 5, 5)


@given(st.integers(3, 400), st.integers(2, 12), st.integers(1, 100))
def test_tscv_train_precedes_test(n, k, min_train):
    try:
        folds = tscv_folds(n, k, min_train)
    except ConfigurationError:
        assert n <= min_train + k
        return
    assert len(folds) == k
    for tr, te in folds:
        assert len(te) > 0 and tr.max() < te.min()
    assert np.array_equal(np.concatenate([te for _, te in folds]), np.arange(min_train, n))


@given(st.integers(2, 2000), st.floats(0.01, 0.99), st.floats(0.0, 0.9))
def test_split_ordering(n, test, val):
    try:
        s = chrono_split(n, test, val)
    except ConfigurationError:
        return
    assert s.train.stop == s.val.start and s.val.stop == s.test.start and s.test.stop == n
    assert len(s.train) >= 1 and len(s.test) >= 1
