import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gasalpha.dataio import OhlcvSeries
from gasalpha.synthetic import random_ohlcv

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_series(close, open_=None, high=None, low=None, start="2021-01-01"):
    """Bars from explicit prices; missing legs default to the close."""
    c = np.asarray(close, dtype=float)
    o = c.copy() if open_ is None else np.asarray(open_, dtype=float)
    h = np.maximum(o, c) if high is None else np.asarray(high, dtype=float)
    lo = np.minimum(o, c) if low is None else np.asarray(low, dtype=float)
    dates = np.datetime64(start, "D") + np.arange(len(c))
    return OhlcvSeries(dates, o, h, lo, c, c.copy(), np.ones(len(c)))


@pytest.fixture
def walk():
    return random_ohlcv(400, seed=3)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
