"""Blending, stacking and soft voting over tree learners; grid search; classification metrics."""

from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataio import FoldSpec
from .errors import ConfigurationError, DegenerateTargetError, GasError, SearchFailure, ShapeError
from .learners import BoostConfig, fit_boosted, fit_forest

log = logging.getLogger(__name__)

KINDS = ("forest", "level_wise", "leaf_wise")
MODES = ("blend_holdout", "stack_oof", "soft_vote")

# starting points per family; grid search or config overrides replace them
DEFAULT_PARAMS = {
    "forest": {"n_estimators": 100, "seed": 42, "max_features": "sqrt"},
    "level_wise": {
        "n_estimators": 200, "learning_rate": 0.1, "max_depth": 3, "reg_alpha": 0.3,
        "colsample_bytree": 0.4, "colsample_bylevel": 0.4,
    },
    "leaf_wise": {
        "n_estimators": 200, "learning_rate": 0.05, "num_leaves": 64, "max_depth": 3,
        "colsample_bytree": 0.65, "reg_alpha": 1.2, "reg_lambda": 1.4,
    },
}

REFERENCE_RF_GRID = {
    "n_estimators": list(range(10, 101, 10)),
    "max_depth": list(range(1, 28, 2)),
    "min_samples_split": list(range(2, 21, 2)),
    "min_samples_leaf": list(range(1, 21, 2)),
    "max_leaf_nodes": list(range(2, 21, 2)),
    "min_weight_fraction_leaf": [0.1, 0.2, 0.3, 0.4],
}
REFERENCE_XGB_GRID = {
    "learning_rate": [0.1, 0.3, 0.5],
    "colsample_bylevel": [0.4],
    "colsample_bytree": [0.4],
    "max_depth": [2, 3],
    "min_child_weight": [0.05, 3, 5],
    "reg_lambda": [0.05, 0.3],
    "reg_alpha": [0.05, 0.3],
    "gamma": [0.05, 0.3],
}


@dataclass(frozen=True)
class LearnerSpec:
    """Learner family plus parameter overrides; ``columns`` restricts its inputs."""

    kind: str
    params: dict = field(default_factory=dict)
    columns: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown learner kind {self.kind!r}; choose from {KINDS}")

    def resolved(self) -> dict:
        return {**DEFAULT_PARAMS[self.kind], **self.params}


@dataclass
class ColumnSubsetModel:
    model: object
    columns: tuple[int, ...]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.model.predict_proba(np.asarray(X, dtype=float)[:, list(self.columns)])


def fit_learner(spec: LearnerSpec, X: np.ndarray, y: np.ndarray, seed: int = 0, threads: int = 1):
    """Fit one base or meta learner; ``seed`` fills in when the params carry none."""
    X = np.asarray(X, dtype=float)
    if spec.columns is not None:
        sub = LearnerSpec(spec.kind, spec.params)
        return ColumnSubsetModel(fit_learner(sub, X[:, list(spec.columns)], y, seed, threads), tuple(spec.columns))
    params = spec.resolved()
    if spec.kind == "forest":
        params = dict(params)
        n = params.pop("n_estimators")
        s = params.pop("seed", seed)
        return fit_forest(X, y, n, seed=s, threads=threads, **params)
    params = {"seed": seed, **params}
    return fit_boosted(X, y, BoostConfig(growth=spec.kind, **params))


def positive_proba(model, X: np.ndarray) -> np.ndarray:
    return model.predict_proba(X)[:, 1]


@dataclass(frozen=True)
class EnsembleSpec:
    base: tuple[LearnerSpec, ...] = (
        LearnerSpec("forest"), LearnerSpec("level_wise"), LearnerSpec("leaf_wise"),
    )
    meta: LearnerSpec = LearnerSpec("leaf_wise", {"n_estimators": 100})
    mode: str = "blend_holdout"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown ensemble mode {self.mode!r}; choose from {MODES}")
        if not self.base:
            raise ConfigurationError("an ensemble needs at least one base learner")


@dataclass
class FittedEnsemble:
    spec: EnsembleSpec
    base_models: list
    meta_model: object | None
    meta_rows: np.ndarray | None = None  # rows (of the fit input) that trained the meta learner

    def meta_features(self, X: np.ndarray) -> np.ndarray:
        return np.column_stack([positive_proba(m, X) for m in self.base_models])

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if self.meta_model is None:
            return soft_vote([m.predict_proba(X) for m in self.base_models])
        return self.meta_model.predict_proba(self.meta_features(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.int8)


def _two_classes(y: np.ndarray, what: str) -> None:
    if len(np.unique(y)) < 2:
        raise DegenerateTargetError(f"{what} labels contain a single class")


def _fit_all(specs, X, y, seed, threads):
    return [fit_learner(s, X, y, seed=seed + i, threads=threads) for i, s in enumerate(specs)]


def blend_fit(spec: EnsembleSpec, X_train, y_train, X_hold, y_hold, seed: int = 0, threads: int = 1) -> FittedEnsemble:
    """Base learners see only the training block; the meta learner sees only their holdout outputs."""
    X_hold = np.asarray(X_hold, dtype=float)
    if len(X_hold) == 0:
        raise ShapeError("blending needs a non-empty holdout block")
    _two_classes(np.asarray(y_hold), "holdout")
    bases = _fit_all(spec.base, X_train, y_train, seed, threads)
    ens = FittedEnsemble(spec, bases, None)
    ens.meta_model = fit_learner(spec.meta, ens.meta_features(X_hold), y_hold, seed=seed + len(bases))
    return ens


def oof_meta_features(spec: EnsembleSpec, X, y, folds: FoldSpec, seed: int = 0, threads: int = 1):
    """Out-of-fold base-learner outputs and the rows they cover.

    Row t of a fold's test block is scored by models trained on that fold's
    training block only.  Rows outside every test block are left out.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    meta = np.full((len(X), len(spec.base)), np.nan)
    covered = np.zeros(len(X), dtype=bool)
    for train_idx, test_idx in folds:
        models = _fit_all(spec.base, X[train_idx], y[train_idx], seed, threads)
        for j, m in enumerate(models):
            meta[test_idx, j] = positive_proba(m, X[test_idx])
        covered[test_idx] = True
    rows = np.flatnonzero(covered)
    if len(rows) < len(X):
        log.info("%d rows outside every test block are excluded from meta training", len(X) - len(rows))
    return meta[rows], rows


def stack_fit(spec: EnsembleSpec, X, y, folds: FoldSpec, seed: int = 0, threads: int = 1) -> FittedEnsemble:
    """Meta learner on out-of-fold outputs; base learners then refit on every row."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    meta_X, rows = oof_meta_features(spec, X, y, folds, seed, threads)
    _two_classes(y[rows], "out-of-fold")
    meta_model = fit_learner(spec.meta, meta_X, y[rows], seed=seed + len(spec.base))
    bases = _fit_all(spec.base, X, y, seed, threads)
    return FittedEnsemble(spec, bases, meta_model, rows)


def soft_vote(probas: list[np.ndarray]) -> np.ndarray:
    """Unweighted mean of class-probability matrices."""
    if not probas:
        raise ShapeError("soft voting needs at least one probability matrix")
    shape = np.shape(probas[0])
    for p in probas:
        if np.shape(p) != shape:
            raise ShapeError(f"probability matrices differ in shape: {shape} vs {np.shape(p)}")
    return np.mean(np.stack([np.asarray(p, dtype=float) for p in probas]), axis=0)


def vote_fit(spec: EnsembleSpec, X, y, seed: int = 0, threads: int = 1) -> FittedEnsemble:
    return FittedEnsemble(spec, _fit_all(spec.base, X, y, seed, threads), None)


# ---- metrics ----------------------------------------------------------------


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsTable:
    classes: dict[int, ClassMetrics]
    accuracy: float
    confusion: np.ndarray  # rows: true class 0/1, columns: predicted class 0/1
    flags: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def macro(self) -> dict:
        c = self.classes.values()
        return {k: float(np.mean([getattr(m, k) for m in c])) for k in ("precision", "recall", "f1")}

    def weighted(self) -> dict:
        c = list(self.classes.values())
        w = np.array([m.support for m in c], dtype=float)
        w = w / w.sum() if w.sum() else w
        return {k: float(sum(wi * getattr(m, k) for wi, m in zip(w, c))) for k in ("precision", "recall", "f1")}

    def rows(self) -> list[list]:
        """Delimited-text rows: one per class, then the averages and accuracy."""
        out = [["class", "precision", "recall", "f1", "support"]]
        for k, m in self.classes.items():
            out.append([str(k), m.precision, m.recall, m.f1, m.support])
        for name, avg in (("macro_avg", self.macro()), ("weighted_avg", self.weighted())):
            out.append([name, avg["precision"], avg["recall"], avg["f1"], self.n])
        out.append(["accuracy", "", "", self.accuracy, self.n])
        return out

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "classes": {str(k): vars(m) for k, m in self.classes.items()},
            "macro_avg": self.macro(),
            "weighted_avg": self.weighted(),
            "confusion": self.confusion.tolist(),
            "flags": self.flags,
        }


def _ratio(num: float, den: float, flag: str, flags: list) -> float:
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def evaluate(predictions, labels) -> MetricsTable:
    """Per-class precision, recall and F1 from the 2x2 confusion matrix.

    Zero denominators give 0 and add a flag naming the metric.
    """
    p = np.asarray(predictions).astype(int)
    t = np.asarray(labels).astype(int)
    if p.shape != t.shape:
        raise ShapeError("predictions and labels differ in length")
    conf = np.zeros((2, 2), dtype=np.int64)
    np.add.at(conf, (t, p), 1)
    flags: list[str] = []
    classes = {}
    for c in (0, 1):
        tp = conf[c, c]
        prec = _ratio(tp, conf[:, c].sum(), f"precision_{c}", flags)
        rec = _ratio(tp, conf[c, :].sum(), f"recall_{c}", flags)
        f1 = _ratio(2 * prec * rec, prec + rec, f"f1_{c}", flags)
        classes[c] = ClassMetrics(float(prec), float(rec), float(f1), int(conf[c, :].sum()))
    acc = float(np.trace(conf) / conf.sum()) if conf.sum() else 0.0
    return MetricsTable(classes, acc, conf, flags)


# ---- grid search ------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    grid: dict
    scoring: str = "accuracy"

    def combinations(self) -> list[dict]:
        if not self.grid:
            return [{}]
        keys = list(self.grid)
        for k in keys:
            if not len(self.grid[k]):
                raise ConfigurationError(f"grid entry {k!r} has no values")
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.grid[k] for k in keys))]

    def size(self) -> int:
        return int(np.prod([len(v) for v in self.grid.values()])) if self.grid else 1


@dataclass
class GridResult:
    best: dict
    best_score: float
    leaderboard: list[dict]  # {"params", "score", "fold_scores"} sorted by score then config text
    n_evaluated: int


def _score(scoring: str, pred: np.ndarray, y: np.ndarray) -> float:
    m = evaluate(pred, y)
    if scoring == "accuracy":
        return m.accuracy
    if scoring == "f1_macro":
        return m.macro()["f1"]
    raise ConfigurationError(f"unknown scoring {scoring!r}")


def grid_search(kind: str, grid: GridSpec, X, y, folds: FoldSpec, base_params: dict | None = None,
                seed: int = 0, threads: int = 1) -> GridResult:
    """Mean fold score per combination; the first listed combination wins ties."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    combos = grid.combinations()
    if grid.scoring not in ("accuracy", "f1_macro"):
        raise ConfigurationError(f"unknown scoring {grid.scoring!r}")

    def run(params):
        spec = LearnerSpec(kind, {**(base_params or {}), **params})
        scores = []
        try:
            for train_idx, test_idx in folds:
                model = fit_learner(spec, X[train_idx], y[train_idx], seed=seed)
                pred = (positive_proba(model, X[test_idx]) > 0.5).astype(int)
                scores.append(_score(grid.scoring, pred, y[test_idx]))
        except (GasError, ValueError) as exc:
            log.info("grid combination %s failed: %s", params, exc)
            return None
        return scores

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, combos))
    else:
        results = [run(c) for c in combos]
    board = []
    best, best_score = None, -np.inf
    for params, scores in zip(combos, results):
        if scores is None:
            continue
        mean = float(np.mean(scores))
        board.append({"params": params, "score": mean, "fold_scores": scores})
        if mean > best_score:
            best, best_score = params, mean
    if best is None:
        raise SearchFailure(f"all {len(combos)} {kind} grid combinations failed to train")
    board.sort(key=lambda r: (-r["score"], json.dumps(r["params"], sort_keys=True)))
    return GridResult(best, best_score, board, len(combos))
