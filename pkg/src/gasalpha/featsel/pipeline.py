"""Sequential selection battery with a full audit trail."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, SelectionFailure
from ..learners import fit_forest
from ..table import FeatureTable
from .boruta import CONFIRMED, TENTATIVE, BorutaConfig, boruta
from .filters import anova_f_scores, chi_square_scores, pearson_prune, select_percentile, vif_prune
from .shapley import shapley_importance
from .standardize import Standardizer, fit_standardizer

STAGES = ("vif", "anova", "chi2", "pearson", "boruta", "shapley")


@dataclass(frozen=True)
class SelectionConfig:
    stages: tuple[str, ...] = ("vif", "anova", "pearson", "boruta", "shapley")
    vif_threshold: float = 5.0
    anova_percentile: float = 50.0
    chi2_percentile: float = 50.0
    chi2_bins: int = 10
    pearson_threshold: float = 0.9
    boruta: BorutaConfig = field(default_factory=BorutaConfig)
    keep_tentative: bool = False
    top_k: int = 34
    shapley_rows: int = 200
    shapley_samples: int = 50
    shapley_trees: int = 50
    seed: int = 0

    def __post_init__(self):
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigurationError(f"unknown selection stages {bad}; choose from {STAGES}")
        if self.top_k < 1:
            raise ConfigurationError("top_k must be >= 1")


@dataclass
class StageReport:
    method: str
    threshold: object
    scores: dict[str, float]
    kept: list[str]
    dropped: list[str]


@dataclass
class SelectionReport:
    inputs: list[str]
    stages: list[StageReport]
    selected: list[str]
    standardizer: Standardizer

    def to_dict(self) -> dict:
        def num(v):
            return v if np.isfinite(v) else ("inf" if v > 0 else "-inf")

        return {
            "inputs": self.inputs,
            "selected": self.selected,
            "standardizer": self.standardizer.to_dict(),
            "stages": [
                {
                    "method": s.method,
                    "threshold": s.threshold,
                    "columns": [
                        {"column": c, "score": num(s.scores[c]) if c in s.scores else None,
                         "decision": "kept" if c in s.kept else "dropped"}
                        for c in s.kept + s.dropped
                    ],
                }
                for s in self.stages
            ],
        }


def _usable_rows(table: FeatureTable, train_rows, y) -> np.ndarray:
    idx = np.arange(len(table))[train_rows]
    X = table.matrix()[idx]
    ok = np.all(np.isfinite(X), axis=1) & np.isin(y[idx], (0, 1))
    return idx[ok]


def select_pipeline(
    table: FeatureTable,
    labels: np.ndarray,
    train_rows=slice(None),
    config: SelectionConfig | None = None,
    threads: int = 1,
) -> tuple[SelectionReport, FeatureTable]:
    """Run the configured stages on the training rows and return the reduced table.

    Only ``train_rows`` feed any statistic; the returned table keeps every row
    of the selected columns, unscaled.
    """
    config = config or SelectionConfig()
    y_all = np.asarray(labels)
    rows = _usable_rows(table, train_rows, y_all)
    if len(rows) < 4:
        raise SelectionFailure("too few complete training rows for selection")
    names = table.names
    scaler = fit_standardizer(table, rows, names)
    Z = scaler.transform_matrix(table.matrix(names)[rows])
    y = y_all[rows].astype(int)
    alive = [j for j in range(len(names)) if not scaler.constant[j]]
    stages: list[StageReport] = []
    if len(alive) < len(names):
        const = [names[j] for j in range(len(names)) if scaler.constant[j]]
        stages.append(StageReport("constant", 0.0, {c: 0.0 for c in const}, [names[j] for j in alive], const))
    f_scores = anova_f_scores(Z, y)

    def record(method, threshold, scores, kept_local):
        nonlocal alive
        kept_set = set(int(k) for k in kept_local)
        kept = [alive[k] for k in range(len(alive)) if k in kept_set]
        dropped = [alive[k] for k in range(len(alive)) if k not in kept_set]
        stages.append(StageReport(
            method, threshold,
            {names[alive[k]]: float(scores[k]) for k in range(len(alive))},
            [names[j] for j in kept], [names[j] for j in dropped],
        ))
        alive = kept
        if not alive:
            raise SelectionFailure(f"no columns survive the {method} stage; loosen its threshold")

    for stage in config.stages:
        Zs = Z[:, alive]
        if stage == "vif":
            kept, scores = vif_prune(Zs, config.vif_threshold)
            record("vif", config.vif_threshold, scores, kept)
        elif stage == "anova":
            sc = f_scores[alive]
            record("anova", config.anova_percentile, sc, select_percentile(sc, config.anova_percentile))
        elif stage == "chi2":
            sc = chi_square_scores(Zs, y, config.chi2_bins)
            record("chi2", config.chi2_percentile, sc, select_percentile(sc, config.chi2_percentile))
        elif stage == "pearson":
            priority = np.argsort(-f_scores[alive], kind="stable")
            kept = pearson_prune(Zs, config.pearson_threshold, priority)
            record("pearson", config.pearson_threshold, f_scores[alive], kept)
        elif stage == "boruta":
            res = boruta(Zs, y, config.boruta, threads=threads)
            ok = (CONFIRMED, TENTATIVE) if config.keep_tentative else (CONFIRMED,)
            kept = [k for k, s in enumerate(res.decision) if s in ok]
            record("boruta", config.boruta.alpha, res.hits.astype(float), kept)
        elif stage == "shapley":
            forest = fit_forest(Zs, y, config.shapley_trees, seed=config.seed, threads=threads)
            pick = np.unique(np.linspace(0, len(Zs) - 1, min(config.shapley_rows, len(Zs))).astype(int))
            imp = shapley_importance(forest, Zs[pick], np.median(Zs, axis=0), config.shapley_samples, config.seed)
            order = np.argsort(-imp, kind="stable")[: config.top_k]
            record("shapley", config.top_k, imp, order)
    selected = [names[j] for j in alive]
    return SelectionReport(names, stages, selected, scaler), table.select(selected)
