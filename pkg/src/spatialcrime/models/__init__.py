"""From-scratch binary classifiers with a common fit / score interface.

>>> from spatialcrime.models import fit_all, ensemble_score
>>> members = fit_all(X_train, y_train)            # doctest: +SKIP
>>> ensemble_score(members, X_test)                # doctest: +SKIP
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import DimensionMismatchError, SchemaError
from .forest import RfModel, RfParams, Tree, rf_fit, rf_score
from .linear import (LrModel, LrParams, SvmModel, SvmParams, balanced_weights, fit_margin_squash, lr_fit,
                     lr_objective, lr_score, svm_fit, svm_objective, svm_score)

__all__ = [
    "LrParams", "LrModel", "lr_fit", "lr_score", "lr_objective",
    "SvmParams", "SvmModel", "svm_fit", "svm_score", "svm_objective", "fit_margin_squash",
    "RfParams", "RfModel", "Tree", "rf_fit", "rf_score",
    "EnsembleModel", "ensemble_score", "fit_all", "MODEL_NAMES", "score", "n_features",
    "balanced_weights", "save_model", "load_model", "model_to_dict", "model_from_dict",
]

MODEL_NAMES = ("LR", "RF", "SVM", "Ensemble")
MODEL_SCHEMA = "spatialcrime.model/v1"


@dataclass(frozen=True)
class EnsembleModel:
    lr: LrModel
    svm: SvmModel
    rf: RfModel

    @property
    def members(self) -> tuple:
        return (self.lr, self.svm, self.rf)


def n_features(m) -> int:
    if isinstance(m, RfModel):
        return m.n_features
    if isinstance(m, EnsembleModel):
        return n_features(m.lr)
    return len(m.weights)


def score(m, x):
    """Positive-class score in [0, 1] from any fitted model."""
    if isinstance(m, LrModel):
        return lr_score(m, x)
    if isinstance(m, SvmModel):
        return svm_score(m, x)
    if isinstance(m, RfModel):
        return rf_score(m, x)
    if isinstance(m, EnsembleModel):
        return ensemble_score(m.members, x)
    raise TypeError(f"not a fitted model: {type(m).__name__}")


def ensemble_score(members, x):
    """Unweighted mean of the member scores (soft voting)."""
    if isinstance(members, EnsembleModel):
        members = members.members
    members = tuple(members)
    if not members:
        raise ValueError("ensemble needs at least one member")
    dims = {n_features(m) for m in members}
    if len(dims) != 1:
        raise SchemaError(f"ensemble members were fitted on different feature counts: {sorted(dims)}")
    return sum(np.asarray(score(m, x), dtype=float) for m in members) / len(members)


def fit_all(X, y, lr: LrParams | None = None, svm: SvmParams | None = None,
            rf: RfParams | None = None) -> EnsembleModel:
    return EnsembleModel(lr_fit(X, y, lr), svm_fit(X, y, svm), rf_fit(X, y, rf))


# --- serialization ---------------------------------------------------------

def _floats(a) -> list:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def model_to_dict(m) -> dict:
    """JSON-safe dict; floats round-trip exactly through ``json``."""
    if isinstance(m, LrModel):
        return {"kind": "LR", "params": asdict(m.params), "weights": _floats(m.weights), "bias": m.bias,
                "n_epochs": m.n_epochs}
    if isinstance(m, SvmModel):
        return {"kind": "SVM", "params": asdict(m.params), "weights": _floats(m.weights), "bias": m.bias,
                "squash": [m.squash_a, m.squash_c], "objective_trace": list(m.objective_trace)}
    if isinstance(m, RfModel):
        trees = [{"feature": t.feature.tolist(), "threshold": _floats(t.threshold), "left": t.left.tolist(),
                  "right": t.right.tolist(), "value": _floats(t.value)} for t in m.trees]
        return {"kind": "RF", "params": asdict(m.params), "n_features": m.n_features, "trees": trees}
    if isinstance(m, EnsembleModel):
        return {"kind": "Ensemble", "members": [model_to_dict(x) for x in m.members]}
    raise TypeError(f"not a fitted model: {type(m).__name__}")


def model_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "LR":
        return LrModel(np.array(d["weights"], dtype=float), float(d["bias"]), LrParams(**d["params"]),
                       int(d.get("n_epochs", 0)))
    if kind == "SVM":
        a, c = d["squash"]
        return SvmModel(np.array(d["weights"], dtype=float), float(d["bias"]), float(a), float(c),
                        SvmParams(**d["params"]), tuple(d.get("objective_trace", ())))
    if kind == "RF":
        trees = tuple(Tree(np.array(t["feature"], dtype=np.intp), np.array(t["threshold"], dtype=float),
                           np.array(t["left"], dtype=np.intp), np.array(t["right"], dtype=np.intp),
                           np.array(t["value"], dtype=float)) for t in d["trees"])
        return RfModel(trees, int(d["n_features"]), RfParams(**d["params"]))
    if kind == "Ensemble":
        lr, svm, rf = (model_from_dict(x) for x in d["members"])
        if len({n_features(lr), n_features(svm), n_features(rf)}) != 1:
            raise DimensionMismatchError("ensemble members disagree on feature count")
        return EnsembleModel(lr, svm, rf)
    raise SchemaError(f"unknown model kind {kind!r}")


def save_model(m, path, extra: dict | None = None) -> None:
    doc = {"schema": MODEL_SCHEMA, "model": model_to_dict(m)}
    if extra:
        doc["meta"] = extra
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_model(path):
    """Returns ``(model, meta)``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != MODEL_SCHEMA:
        raise SchemaError(f"{path}: unsupported model schema {doc.get('schema')!r}")
    return model_from_dict(doc["model"]), doc.get("meta", {})
