"""Leakage-safe standardization and the feature-selection battery."""

from .boruta import BorutaConfig, BorutaResult, boruta
from .filters import (
    abs_corr_matrix,
    anova_f_scores,
    chi_square_scores,
    pearson_prune,
    select_percentile,
    vif_prune,
    vif_scores,
)
from .pipeline import SelectionConfig, SelectionReport, StageReport, select_pipeline
from .shapley import shapley_importance, shapley_values
from .standardize import Standardizer, fit_standardizer

__all__ = [
    "BorutaConfig", "BorutaResult", "SelectionConfig", "SelectionReport", "StageReport", "Standardizer",
    "abs_corr_matrix", "anova_f_scores", "boruta", "chi_square_scores", "fit_standardizer", "pearson_prune",
    "select_percentile", "select_pipeline", "shapley_importance", "shapley_values", "vif_prune", "vif_scores",
]
