"""Pipeline configuration: YAML in, validated and fully defaulted models out.

Precedence, lowest first: built-in defaults, the ``--profile`` preset, the
config file, command-line flags.  Unknown keys are rejected.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigurationError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataConfig(_Strict):
    ohlcv: str
    news: Optional[str] = None
    imputation: Literal["forward_fill"] = "forward_fill"
    date_column: str = "Date"


class LabelConfig(_Strict):
    threshold: float = Field(0.001, ge=0)
    price: Literal["close", "adj_close"] = "close"


class SplitConfig(_Strict):
    test_frac: float = Field(0.2, gt=0, lt=1)
    val_frac_of_train: float = Field(0.1, ge=0, lt=1)


class IndicatorSection(_Strict):
    ma_windows: list[int] = [5, 10, 20, 30, 60, 120]
    momentum_windows: list[int] = [1, 5, 10, 20, 30]
    cum_windows: list[int] = [3, 5, 10, 20, 40, 60, 110, 140]
    rsi_period: int = 14
    kdj: tuple[int, int, int] = (9, 3, 3)
    kama: tuple[int, int, int] = (10, 2, 30)
    macd: tuple[int, int, int] = (12, 26, 9)
    boll: tuple[int, float] = (20, 2.0)
    cci_window: int = 14
    atr_period: int = 14
    willr_window: int = 14


class SentimentSection(_Strict):
    enabled: bool = True
    windows: list[int] = [7, 30]
    extended: bool = True
    restrict: bool = True


class GpSection(_Strict):
    population_size: Optional[int] = None
    tournament_size: Optional[int] = None
    generations: Optional[int] = None
    elite_keep: Optional[int] = None
    pool_cap: Optional[int] = None
    dedup_corr_threshold: float = 0.7
    max_depth: int = 6
    init_depth: tuple[int, int] = (1, 4)
    ts_windows: list[int] = [3, 5, 10, 20, 40, 60]
    function_set: Optional[list[str]] = None
    p_crossover: float = 0.9
    p_subtree_mutation: float = 0.05
    p_point_mutation: float = 0.04
    p_point_replace: float = 0.05
    early_stop_eps: float = 1e-4


class BorutaSection(_Strict):
    max_iter: int = Field(20, ge=20)
    alpha: float = Field(0.05, gt=0, lt=1)
    n_estimators: int = Field(50, ge=1)
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    importance: Literal["permutation", "impurity"] = "permutation"


class SelectionSection(_Strict):
    include_base: bool = True
    stages: list[Literal["vif", "anova", "chi2", "pearson", "boruta", "shapley"]] = [
        "vif", "anova", "pearson", "boruta", "shapley"
    ]
    vif_threshold: float = 5.0
    anova_percentile: float = Field(50.0, gt=0, le=100)
    chi2_percentile: float = Field(50.0, gt=0, le=100)
    chi2_bins: int = Field(10, ge=2)
    pearson_threshold: float = Field(0.9, gt=0, le=1)
    boruta: BorutaSection = BorutaSection()
    keep_tentative: bool = False
    top_k: int = Field(34, ge=1)
    shapley_rows: int = Field(200, ge=1)
    shapley_samples: int = Field(50, ge=1)
    shapley_trees: int = Field(50, ge=1)


class LearnerSection(_Strict):
    kind: Literal["forest", "level_wise", "leaf_wise"]
    params: dict[str, Any] = {}


def _default_base() -> list[LearnerSection]:
    return [LearnerSection(kind=k) for k in ("forest", "level_wise", "leaf_wise")]


class EnsembleSection(_Strict):
    mode: Literal["blend_holdout", "stack_oof", "soft_vote"] = "blend_holdout"
    base: list[LearnerSection] = Field(default_factory=_default_base)
    meta: LearnerSection = LearnerSection(kind="leaf_wise", params={"n_estimators": 100})
    stack_folds: int = Field(5, ge=1)
    # family -> {param: [values]}; searched over TSCV folds of the training block
    grid: dict[Literal["forest", "level_wise", "leaf_wise"], dict[str, list[Any]]] = {}
    grid_folds: int = Field(3, ge=2)
    grid_scoring: Literal["accuracy", "f1_macro"] = "accuracy"


class BacktestSection(_Strict):
    cost_bps: float = Field(0.0, ge=0)
    factor_sweep: bool = True


class PipelineConfig(_Strict):
    data: DataConfig
    label: LabelConfig = LabelConfig()
    split: SplitConfig = SplitConfig()
    indicators: IndicatorSection = IndicatorSection()
    sentiment: SentimentSection = SentimentSection()
    gp: GpSection = GpSection()
    selection: SelectionSection = SelectionSection()
    ensemble: EnsembleSection = EnsembleSection()
    backtest: BacktestSection = BacktestSection()
    seed: int = 0
    out: str = "runs/default"


# scale presets; explicit config values win over them
PROFILES = {
    "desk": {
        "gp": {"population_size": 500, "tournament_size": 100, "elite_keep": 100, "pool_cap": 350, "generations": 5},
        "learners": {"forest": {"n_estimators": 100}, "level_wise": {"n_estimators": 200},
                     "leaf_wise": {"n_estimators": 200}},
    },
    "paper": {
        "gp": {"population_size": 5000, "tournament_size": 1000, "elite_keep": 1000, "pool_cap": 350,
               "generations": 5},
        "learners": {"forest": {"n_estimators": 500}, "level_wise": {"n_estimators": 200},
                     "leaf_wise": {"n_estimators": 1000}},
    },
}


def _format_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"])
        parts.append(f"{path}: {err['msg']}")
    return "invalid config: " + "; ".join(parts)


def apply_profile(cfg: PipelineConfig, profile: str) -> PipelineConfig:
    """Fill unset GP sizes and learner sizes from the named profile."""
    if profile not in PROFILES:
        raise ConfigurationError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    preset = PROFILES[profile]
    gp = cfg.gp.model_copy(update={k: v for k, v in preset["gp"].items() if getattr(cfg.gp, k) is None})

    def fill(section: LearnerSection) -> LearnerSection:
        return section.model_copy(update={"params": {**preset["learners"][section.kind], **section.params}})

    ens = cfg.ensemble.model_copy(update={"base": [fill(b) for b in cfg.ensemble.base]})
    return cfg.model_copy(update={"gp": gp, "ensemble": ens})


def load_config(path: str | Path, profile: str = "desk", seed: int | None = None,
                out: str | None = None) -> tuple[PipelineConfig, Path, Path]:
    """Parse and validate.

    Returns the config, the folder that relative data paths resolve against
    (the config's own) and the output folder (``out`` from the command line
    resolves against the working directory, the config's ``out`` against the
    config's folder).
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config file {path} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config file {path} must contain a mapping")
    try:
        cfg = PipelineConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(_format_error(exc)) from None
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    base = path.resolve().parent
    out_dir = Path(out).resolve() if out is not None else (base / cfg.out).resolve()
    cfg = apply_profile(cfg, profile)
    return cfg, base, out_dir


def config_echo(cfg: PipelineConfig) -> dict:
    """Effective settings; the output location is left out so relocated runs compare equal."""
    return cfg.model_dump(mode="json", exclude={"out"})
