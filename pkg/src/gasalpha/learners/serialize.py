"""Versioned JSON round-trip for fitted models (predictions reload exactly)."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .boosting import BoostConfig, BoostedModel
from .forest import ForestModel
from .tree import TreeModel

FORMAT_VERSION = 1
_ARRAYS = ("feature", "threshold", "left", "right", "value", "weight", "impurity", "n_samples")


def _tree_dict(t: TreeModel) -> dict:
    out = {k: getattr(t, k).tolist() for k in _ARRAYS}
    out["n_features"] = t.n_features
    return out


def _tree_from(d: dict) -> TreeModel:
    ints = {"feature", "left", "right", "n_samples"}
    arrays = {k: np.array(d[k], dtype=np.int64 if k in ints else float) for k in _ARRAYS}
    return TreeModel(**arrays, n_features=int(d["n_features"]))


def model_to_dict(model) -> dict:
    if isinstance(model, TreeModel):
        body = {"kind": "tree", "tree": _tree_dict(model)}
    elif isinstance(model, ForestModel):
        body = {
            "kind": "forest",
            "seed": model.seed,
            "max_features": model.max_features,
            "bootstrap": model.bootstrap,
            "params": model.params,
            "trees": [_tree_dict(t) for t in model.trees],
            "oob_indices": [i.tolist() for i in model.oob_indices],
        }
    elif isinstance(model, BoostedModel):
        body = {
            "kind": "boosted",
            "config": asdict(model.config),
            "base_score": model.base_score,
            "n_features": model.n_features,
            "loss_history": model.loss_history,
            "trees": [_tree_dict(t) for t in model.trees],
        }
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return {"format_version": FORMAT_VERSION, **body}


def model_from_dict(d: dict):
    if d.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {d.get('format_version')!r}")
    kind = d.get("kind")
    if kind == "tree":
        return _tree_from(d["tree"])
    if kind == "forest":
        return ForestModel(
            [_tree_from(t) for t in d["trees"]],
            d["seed"],
            d["max_features"],
            d["bootstrap"],
            [np.array(i, dtype=np.int64) for i in d["oob_indices"]],
            d["params"],
        )
    if kind == "boosted":
        return BoostedModel(
            [_tree_from(t) for t in d["trees"]],
            d["base_score"],
            BoostConfig(**d["config"]),
            d["n_features"],
            d["loss_history"],
        )
    raise FormatError(f"unknown model kind {kind!r}")


def dumps_model(model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True)


def loads_model(text: str):
    return model_from_dict(json.loads(text))


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model) + "\n", encoding="utf-8")


def load_model(path: str | Path):
    return loads_model(Path(path).read_text(encoding="utf-8"))
