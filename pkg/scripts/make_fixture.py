"""Regenerate the bundled 300-day fixture under src/gasalpha/data."""

from pathlib import Path

import numpy as np

from gasalpha.synthetic import random_news, random_ohlcv, write_news_csv, write_ohlcv_csv

DATA = Path(__file__).resolve().parents[1] / "src" / "gasalpha" / "data"

series = random_ohlcv(300, seed=2031, momentum=0.6)
write_ohlcv_csv(series, DATA / "fixture_ohlcv.csv")
# news mood leads the next day's return a little
lead = np.concatenate([np.diff(np.log(series.close)), [0.0]])
ts, labels = random_news(series.dates, per_day=6.0, seed=2031, bias=np.clip(5 * lead, -0.2, 0.2))
write_news_csv(ts, labels, DATA / "fixture_news.csv")
