"""From-scratch tree learners: CART, random forests and gradient-boosted trees."""

from .boosting import BoostConfig, BoostedModel, fit_boosted, leaf_weight, log_loss, sigmoid, split_gain
from .forest import ForestModel, fit_forest, forest_importance
from .serialize import dumps_model, load_model, loads_model, save_model
from .tree import TreeModel, fit_tree


def predict_proba(model, X):
    """Two-column class-probability matrix for any fitted model."""
    return model.predict_proba(X)


__all__ = [
    "BoostConfig", "BoostedModel", "ForestModel", "TreeModel", "dumps_model", "fit_boosted", "fit_forest",
    "fit_tree", "forest_importance", "leaf_weight", "load_model", "loads_model", "log_loss", "predict_proba",
    "save_model", "sigmoid", "split_gain",
]
