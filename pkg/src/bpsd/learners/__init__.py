"""Decision-tree ensembles (RF, ERT) and multinomial logistic regression."""
from __future__ import annotations

import numpy as np

from .forest import Forest, ForestParams, Tree, fit_forest
from .logistic import LogisticModel, LogisticParams, fit_logistic, softmax


def predict_proba(model, x: np.ndarray) -> np.ndarray:
    """Class probabilities for one vector or a batch of rows."""
    return model.predict_proba(x)


def model_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "forest":
        return Forest.from_dict(d)
    if kind == "logistic":
        return LogisticModel.from_dict(d)
    raise ValueError(f"unknown model kind {kind!r}")


__all__ = [
    "Forest",
    "ForestParams",
    "LogisticModel",
    "LogisticParams",
    "Tree",
    "fit_forest",
    "fit_logistic",
    "model_from_dict",
    "predict_proba",
    "softmax",
]
