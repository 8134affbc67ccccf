"""Stage runners behind the command-line interface.

Each stage reads the previous stage's files under the output folder, writes
its own folder and a ``manifest.json`` (config echo, seed, input and output
hashes, library versions), and merges the same record into the run-level
manifest.  Nothing time- or machine-dependent is written, so reruns with the
same inputs are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
import scipy

from . import __version__
from .backtest import run_strategy, single_factor_backtest
from .config import PipelineConfig, config_echo
from .dataio import FoldSpec, LabelSeries, chrono_split, load_ohlcv, make_labels, tscv_folds
from .ensemble import (
    EnsembleSpec,
    GridSpec,
    LearnerSpec,
    blend_fit,
    evaluate,
    grid_search,
    positive_proba,
    stack_fit,
    vote_fit,
)
from .errors import DataError, DependencyError, EmptyDataError, UndefinedSignalError
from .featsel import BorutaConfig, SelectionConfig, fit_standardizer, select_pipeline
from .gpalpha import GpConfig, eval_expr, mine, write_pool
from .gpalpha.expr import PRIMITIVES
from .indicators import IndicatorConfig, build_base_features
from .learners import save_model
from .sentiment import join_sentiment, load_news, rolling_ratios
from .table import FeatureTable

log = logging.getLogger(__name__)

STAGES = ("ingest", "features", "mine", "select", "train", "backtest")


@dataclass
class RunContext:
    cfg: PipelineConfig
    base_dir: Path  # relative data paths resolve here
    out: Path
    threads: int = 1

    def stage_dir(self, stage: str) -> Path:
        d = self.out / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    def need(self, stage: str, name: str) -> Path:
        p = self.out / stage / name
        if not p.exists():
            raise DependencyError(f"missing {stage}/{name}; run the `{stage}` stage first")
        return p

    def data_path(self, text: str) -> Path:
        p = Path(text)
        return p if p.is_absolute() else self.base_dir / p


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def versions() -> dict:
    return {
        "gasalpha": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _relative(ctx: RunContext, path: Path) -> str:
    try:
        return path.relative_to(ctx.out).as_posix()
    except ValueError:
        return path.name


def _finish(ctx: RunContext, stage: str, inputs: list[Path], outputs: list[Path]) -> None:
    record = {
        "stage": stage,
        "seed": ctx.cfg.seed,
        "config": config_echo(ctx.cfg),
        "inputs": {_relative(ctx, p): sha256(p) for p in inputs},
        "outputs": {_relative(ctx, p): sha256(p) for p in outputs},
        "versions": versions(),
    }
    _dump_json(record, ctx.out / stage / "manifest.json")
    top = ctx.out / "manifest.json"
    run = json.loads(top.read_text(encoding="utf-8")) if top.exists() else {}
    run.update({"seed": ctx.cfg.seed, "config": record["config"], "versions": record["versions"]})
    run.setdefault("stages", {})[stage] = {"inputs": record["inputs"], "outputs": record["outputs"]}
    _dump_json(run, top)


def _write_rows(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _read_labels(path: Path) -> LabelSeries:
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EmptyDataError(f"{path} has no rows")
    return LabelSeries(
        np.array([r["date"] for r in rows], dtype="datetime64[D]"),
        np.array([float(r["log_return"]) for r in rows]),
        np.array([int(r["label"]) for r in rows], dtype=np.int8),
        float(rows[0]["threshold"]),
    )


def _aligned_returns(dates: np.ndarray, labels: LabelSeries) -> np.ndarray:
    pos = np.searchsorted(labels.dates, dates)
    pos = np.minimum(pos, len(labels.dates) - 1)
    hit = labels.dates[pos] == dates
    out = np.full(len(dates), np.nan)
    out[hit] = labels.log_return[pos[hit]]
    return out


# ---- stages -------------------------------------------------------------------------


def stage_ingest(ctx: RunContext) -> None:
    cfg = ctx.cfg
    d = ctx.stage_dir("ingest")
    src = ctx.data_path(cfg.data.ohlcv)
    if not src.exists():
        raise DataError(f"price file {src} not found")
    series = load_ohlcv(src, cfg.data.imputation, date_column=cfg.data.date_column, dump=d / "ohlcv.csv")
    labels = make_labels(series, cfg.label.threshold, cfg.label.price)
    _write_rows(
        d / "labels.csv",
        ["date", "log_return", "label", "threshold"],
        ([str(t), float(r), int(y), labels.threshold] for t, r, y in zip(labels.dates, labels.log_return, labels.label)),
    )
    inputs, outputs = [src], [d / "ohlcv.csv", d / "labels.csv"]
    if cfg.sentiment.enabled and cfg.data.news:
        news_src = ctx.data_path(cfg.data.news)
        if not news_src.exists():
            raise DataError(f"news file {news_src} not found")
        news = load_news(news_src)
        names = {-1: "negative", 0: "neutral", 1: "positive"}
        _write_rows(
            d / "news.csv",
            ["timestamp", "sentiment"],
            ([str(t).replace("T", " "), names[int(s)]] for t, s in zip(news.timestamps, news.sentiment)),
        )
        inputs.append(news_src)
        outputs.append(d / "news.csv")
    log.info("ingested %d rows, %d labeled", len(series), len(labels))
    _finish(ctx, "ingest", inputs, outputs)


def stage_features(ctx: RunContext) -> None:
    cfg = ctx.cfg
    ohlcv, labels_path = ctx.need("ingest", "ohlcv.csv"), ctx.need("ingest", "labels.csv")
    d = ctx.stage_dir("features")
    series = load_ohlcv(ohlcv)
    labels = _read_labels(labels_path)
    ind = cfg.indicators
    icfg = IndicatorConfig(
        ma_windows=tuple(ind.ma_windows), momentum_windows=tuple(ind.momentum_windows),
        cum_windows=tuple(ind.cum_windows), rsi_period=ind.rsi_period, kdj=tuple(ind.kdj),
        kama=tuple(ind.kama), macd=tuple(ind.macd), boll=tuple(ind.boll), cci_window=ind.cci_window,
        atr_period=ind.atr_period, willr_window=ind.willr_window,
    )
    table = build_base_features(series, icfg)
    base_names = table.names
    inputs = [ohlcv, labels_path]
    sentiment_names: list[str] = []
    news_path = ctx.out / "ingest" / "news.csv"
    if cfg.sentiment.enabled and cfg.data.news:
        news_path = ctx.need("ingest", "news.csv")
        factors = rolling_ratios(load_news(news_path), table.dates, cfg.sentiment.windows, cfg.sentiment.extended)
        table = join_sentiment(table, factors, cfg.sentiment.restrict)
        sentiment_names = factors.names
        inputs.append(news_path)

    # keep rows that have a next-day label and every feature
    lab = np.full(len(table), np.nan)
    pos = np.minimum(np.searchsorted(labels.dates, table.dates), len(labels.dates) - 1)
    hit = labels.dates[pos] == table.dates
    lab[hit] = labels.label[pos[hit]]
    table = FeatureTable(table.dates, table.columns, lab)
    ok = np.isfinite(lab) & np.all(np.isfinite(table.matrix()), axis=1)
    first = int(np.argmax(ok)) if ok.any() else len(table)
    keep = np.flatnonzero(ok)
    if len(keep) == 0:
        raise EmptyDataError("no row has every feature and a label; shorten the indicator windows")
    dropped_inside = int(np.sum(~ok[first:] & np.isfinite(lab[first:])))
    if dropped_inside:
        log.warning("dropping %d rows with missing features after the warm-up", dropped_inside)
    table = table.rows(keep)

    split = chrono_split(len(table), cfg.split.test_frac, cfg.split.val_frac_of_train)
    split_info = {
        "n_rows": len(table),
        "train": [str(table.dates[split.train.start]), str(table.dates[split.train.stop - 1])],
        "val": [str(table.dates[split.val.start]), str(table.dates[split.val.stop - 1])] if len(split.val) else [],
        "test": [str(table.dates[split.test.start]), str(table.dates[split.test.stop - 1])],
        "n_train": len(split.train),
        "n_val": len(split.val),
        "n_test": len(split.test),
    }
    table.to_csv(d / "features.csv")
    _dump_json(split_info, d / "split.json")
    _dump_json({"base": base_names, "sentiment": sentiment_names}, d / "columns.json")
    _finish(ctx, "features", inputs, [d / "features.csv", d / "split.json", d / "columns.json"])


def _split_masks(dates: np.ndarray, split: dict) -> dict[str, np.ndarray]:
    train_end = np.datetime64(split["train"][1], "D")
    test_start = np.datetime64(split["test"][0], "D")
    return {
        "train": dates <= train_end,
        "val": (dates > train_end) & (dates < test_start),
        "test": dates >= test_start,
    }


def gp_config(cfg: PipelineConfig) -> GpConfig:
    g = cfg.gp
    return GpConfig(
        population_size=g.population_size, tournament_size=g.tournament_size, generations=g.generations,
        elite_keep=g.elite_keep, pool_cap=g.pool_cap, dedup_corr_threshold=g.dedup_corr_threshold,
        max_depth=g.max_depth, init_depth=tuple(g.init_depth), ts_windows=tuple(g.ts_windows),
        function_set=tuple(g.function_set) if g.function_set else tuple(PRIMITIVES),
        p_crossover=g.p_crossover, p_subtree_mutation=g.p_subtree_mutation, p_point_mutation=g.p_point_mutation,
        p_point_replace=g.p_point_replace, early_stop_eps=g.early_stop_eps, rng_seed=cfg.seed,
    )


def stage_mine(ctx: RunContext) -> None:
    feats = ctx.need("features", "features.csv")
    split_p, cols_p = ctx.need("features", "split.json"), ctx.need("features", "columns.json")
    labels_p = ctx.need("ingest", "labels.csv")
    d = ctx.stage_dir("mine")
    table = FeatureTable.from_csv(feats)
    split = json.loads(split_p.read_text())
    groups = json.loads(cols_p.read_text())
    fwd = _aligned_returns(table.dates, _read_labels(labels_p))
    base = table.select(groups["base"])
    train = _split_masks(table.dates, split)["train"]
    result = mine(base.rows(train), fwd[train], gp_config(ctx.cfg), threads=ctx.threads)

    # factor values over the full history; drop factors with gaps after their warm-up
    alphas: dict[str, np.ndarray] = {}
    kept = []
    for ind in result.pool:
        v = eval_expr(ind.expr, base.columns)
        fin = np.isfinite(v)
        if not fin.any() or not fin[int(np.argmax(fin)):].all():
            log.info("discarding %s: non-finite values after warm-up", ind.text)
            continue
        kept.append(ind)
        alphas[f"alpha_{len(kept) - 1:03d}"] = v
    if not kept:
        raise EmptyDataError("mining produced no usable factor")
    result.pool = kept
    start = max(int(np.argmax(np.isfinite(v))) for v in alphas.values())
    merged = FeatureTable(table.dates, {**table.columns, **alphas}, table.label).rows(slice(start, None))
    write_pool(result, d / "pool.txt", d / "pool_metrics.csv")
    merged.to_csv(d / "factors.csv")
    _dump_json({"base": groups["base"], "sentiment": groups["sentiment"], "alpha": list(alphas),
                "best_abs_ic_by_generation": result.best_history}, d / "columns.json")
    outputs = [d / "pool.txt", d / "pool_metrics.csv", d / "factors.csv", d / "columns.json"]
    _finish(ctx, "mine", [feats, split_p, cols_p, labels_p], outputs)


def selection_config(cfg: PipelineConfig) -> SelectionConfig:
    s = cfg.selection
    b = s.boruta
    return SelectionConfig(
        stages=tuple(s.stages), vif_threshold=s.vif_threshold, anova_percentile=s.anova_percentile,
        chi2_percentile=s.chi2_percentile, chi2_bins=s.chi2_bins, pearson_threshold=s.pearson_threshold,
        boruta=BorutaConfig(max_iter=b.max_iter, alpha=b.alpha, n_estimators=b.n_estimators, max_depth=b.max_depth,
                            min_samples_leaf=b.min_samples_leaf, importance=b.importance, seed=cfg.seed),
        keep_tentative=s.keep_tentative, top_k=s.top_k, shapley_rows=s.shapley_rows,
        shapley_samples=s.shapley_samples, shapley_trees=s.shapley_trees, seed=cfg.seed,
    )


def stage_select(ctx: RunContext) -> None:
    factors_p, cols_p = ctx.need("mine", "factors.csv"), ctx.need("mine", "columns.json")
    split_p = ctx.need("features", "split.json")
    d = ctx.stage_dir("select")
    table = FeatureTable.from_csv(factors_p)
    groups = json.loads(cols_p.read_text())
    split = json.loads(split_p.read_text())
    candidates = groups["alpha"] + (groups["base"] if ctx.cfg.selection.include_base else [])
    train = np.flatnonzero(_split_masks(table.dates, split)["train"])
    report, reduced = select_pipeline(
        table.select(candidates), table.label, train, selection_config(ctx.cfg), threads=ctx.threads
    )
    out = FeatureTable(table.dates, {**reduced.columns, **{n: table[n] for n in groups["sentiment"]}}, table.label)
    out.to_csv(d / "reduced.csv")
    _dump_json(report.to_dict(), d / "report.json")
    _finish(ctx, "select", [factors_p, cols_p, split_p], [d / "reduced.csv", d / "report.json"])


def _learner_specs(cfg: PipelineConfig, tuned: dict) -> tuple[LearnerSpec, ...]:
    return tuple(LearnerSpec(b.kind, {**b.params, **tuned.get(b.kind, {})}) for b in cfg.ensemble.base)


def stage_train(ctx: RunContext) -> None:
    cfg = ctx.cfg
    reduced_p = ctx.need("select", "reduced.csv")
    split_p = ctx.need("features", "split.json")
    d = ctx.stage_dir("train")
    (d / "models").mkdir(exist_ok=True)
    table = FeatureTable.from_csv(reduced_p)
    split = json.loads(split_p.read_text())
    names = sorted(table.names)
    X_all = table.matrix(names)
    y_all = table.label
    usable = np.all(np.isfinite(X_all), axis=1) & np.isfinite(y_all)
    masks = {k: np.flatnonzero(v & usable) for k, v in _split_masks(table.dates, split).items()}
    tr, va, te = masks["train"], masks["val"], masks["test"]
    scaler = fit_standardizer(table.select(names), tr, names)
    X = scaler.transform_matrix(X_all)
    y = np.where(usable, y_all, 0).astype(int)
    seed = cfg.seed

    tuned: dict = {}
    board_files = []
    for kind, grid in sorted(cfg.ensemble.grid.items()):
        folds = tscv_folds(len(tr), cfg.ensemble.grid_folds, max(1, len(tr) // (cfg.ensemble.grid_folds + 1)))
        base_params = next((b.params for b in cfg.ensemble.base if b.kind == kind), {})
        res = grid_search(kind, GridSpec(grid, cfg.ensemble.grid_scoring), X[tr], y[tr], folds, base_params,
                          seed=seed, threads=ctx.threads)
        tuned[kind] = res.best
        path = d / f"leaderboard_{kind}.csv"
        _write_rows(path, ["rank", "score", "params", "fold_scores"],
                    ([i + 1, r["score"], json.dumps(r["params"], sort_keys=True), json.dumps(r["fold_scores"])]
                     for i, r in enumerate(res.leaderboard)))
        board_files.append(path)

    spec = EnsembleSpec(
        base=_learner_specs(cfg, tuned),
        meta=LearnerSpec(cfg.ensemble.meta.kind, cfg.ensemble.meta.params),
        mode=cfg.ensemble.mode,
    )
    fit_rows = np.concatenate([tr, va])
    if spec.mode == "blend_holdout":
        if len(va) == 0:
            raise DataError("blending needs a validation block; set split.val_frac_of_train > 0")
        ens = blend_fit(spec, X[tr], y[tr], X[va], y[va], seed=seed, threads=ctx.threads)
    elif spec.mode == "stack_oof":
        k = cfg.ensemble.stack_folds
        if k == 1:
            folds = FoldSpec([(np.arange(len(tr)), np.arange(len(tr), len(fit_rows)))])
        else:
            folds = tscv_folds(len(fit_rows), k, max(1, len(fit_rows) // (k + 1)))
        ens = stack_fit(spec, X[fit_rows], y[fit_rows], folds, seed=seed, threads=ctx.threads)
    else:
        ens = vote_fit(spec, X[fit_rows], y[fit_rows], seed=seed, threads=ctx.threads)

    outputs = list(board_files)
    for i, m in enumerate(ens.base_models):
        path = d / "models" / f"base_{i}_{spec.base[i].kind}.json"
        save_model(m, path)
        outputs.append(path)
    if ens.meta_model is not None:
        save_model(ens.meta_model, d / "models" / "meta.json")
        outputs.append(d / "models" / "meta.json")

    metrics = {"ensemble": evaluate(ens.predict(X[te]), y[te])}
    for i, m in enumerate(ens.base_models):
        metrics[f"base_{i}_{spec.base[i].kind}"] = evaluate((positive_proba(m, X[te]) > 0.5).astype(int), y[te])
    rows = []
    for name, mt in metrics.items():
        for r in mt.rows()[1:]:
            rows.append([name, *r])
    _write_rows(d / "metrics.csv", ["model", "class", "precision", "recall", "f1", "support"], rows)

    proba = ens.predict_proba(X)[:, 1]
    split_name = np.full(len(table), "", dtype=object)
    for k, idx in masks.items():
        split_name[idx] = k
    pred_rows = (
        [str(table.dates[i]), split_name[i], int(y[i]), float(proba[i]), int(proba[i] > 0.5)]
        for i in np.flatnonzero(usable)
    )
    _write_rows(d / "predictions.csv", ["date", "split", "label", "probability", "prediction"], pred_rows)
    summary = {
        "mode": spec.mode,
        "features": names,
        "rows": {k: int(len(v)) for k, v in masks.items()},
        "learners": [{"kind": s.kind, "params": s.resolved()} for s in spec.base],
        "meta": {"kind": spec.meta.kind, "params": spec.meta.resolved()} if ens.meta_model is not None else None,
        "tuned": tuned,
        "standardizer": scaler.to_dict(),
        "test_metrics": {k: v.to_dict() for k, v in metrics.items()},
    }
    _dump_json(summary, d / "summary.json")
    outputs += [d / "metrics.csv", d / "predictions.csv", d / "summary.json"]
    _finish(ctx, "train", [reduced_p, split_p], outputs)


def stage_backtest(ctx: RunContext) -> None:
    pred_p = ctx.need("train", "predictions.csv")
    labels_p = ctx.need("ingest", "labels.csv")
    summary_p = ctx.need("train", "summary.json")
    d = ctx.stage_dir("backtest")
    with pred_p.open(newline="", encoding="utf-8") as fh:
        preds = [r for r in csv.DictReader(fh) if r["split"] == "test"]
    if not preds:
        raise EmptyDataError("no test-period predictions to backtest")
    dates = np.array([r["date"] for r in preds], dtype="datetime64[D]")
    p = np.array([int(r["prediction"]) for r in preds])
    labels = _read_labels(labels_p)
    r = _aligned_returns(dates, labels)
    report = run_strategy(p, r, ctx.cfg.backtest.cost_bps, dates)
    report.write_curves(d / "curves.csv")
    train_summary = json.loads(summary_p.read_text())
    summary = {**report.summary(), "cost_bps": ctx.cfg.backtest.cost_bps,
               "test_accuracy": train_summary["test_metrics"]["ensemble"]["accuracy"]}
    _dump_json(summary, d / "summary.json")
    inputs, outputs = [pred_p, labels_p, summary_p], [d / "curves.csv", d / "summary.json"]

    if ctx.cfg.backtest.factor_sweep:
        reduced_p = ctx.need("select", "reduced.csv")
        split_p = ctx.need("features", "split.json")
        table = FeatureTable.from_csv(reduced_p)
        masks = _split_masks(table.dates, json.loads(split_p.read_text()))
        fwd = _aligned_returns(table.dates, labels)
        train_stop = int(np.flatnonzero(masks["train"])[-1]) + 1
        test_start = int(np.flatnonzero(masks["test"])[0])
        rows = []
        for name in sorted(table.names):
            f = np.concatenate([table[name][:train_stop], table[name][test_start:]])
            ret = np.concatenate([fwd[:train_stop], fwd[test_start:]])
            try:
                rep = single_factor_backtest(f, ret, slice(0, train_stop))
            except UndefinedSignalError as exc:
                log.info("skipping factor %s: %s", name, exc)
                continue
            rows.append([name, rep.total_return, float(rep.summary()["max_drawdown"])])
        _write_rows(d / "factors.csv", ["factor", "total_log_return", "max_drawdown"], rows)
        inputs += [reduced_p, split_p]
        outputs.append(d / "factors.csv")
    _finish(ctx, "backtest", inputs, outputs)


RUNNERS = {
    "ingest": stage_ingest,
    "features": stage_features,
    "mine": stage_mine,
    "select": stage_select,
    "train": stage_train,
    "backtest": stage_backtest,
}


def run(command: str, ctx: RunContext) -> None:
    ctx.out.mkdir(parents=True, exist_ok=True)
    for stage in STAGES if command == "all" else (command,):
        log.info("stage %s", stage)
        RUNNERS[stage](ctx)
