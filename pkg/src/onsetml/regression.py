"""Multiple linear regression on the rain-gated features, plus R2 / MSE / MAE."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import FEATURE_NAMES, EngineeredFeatures
from .errors import ConstantTarget, FeatureMismatch, SingularDesign, SingularMatrix, TooFewRows
from .numerics import solve_spd

RIDGE_FALLBACK = 1e-10
# relative pivots this small are rounding noise: the columns are exactly dependent
EXACT_COLLINEAR = 1e-14


@dataclass(frozen=True)
class LinearModel:
    intercept: float
    coefficients: tuple[float, ...]
    feature_names: tuple[str, ...] = FEATURE_NAMES
    target: str = "td"
    standardized: bool = False

    def predict(self, features) -> float:
        return predict_mlr(self, features)

    def predict_many(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, len(self.coefficients))
        return self.intercept + x @ np.asarray(self.coefficients)

    def to_dict(self, **extra) -> dict:
        doc = {
            "model_type": "mlr",
            "target": self.target,
            "features": list(self.feature_names),
            "intercept": self.intercept,
            "coefficients": list(self.coefficients),
            "standardized": self.standardized,
        }
        doc.update(extra)
        return doc

    @classmethod
    def from_dict(cls, d: Mapping) -> "LinearModel":
        return cls(
            intercept=float(d["intercept"]),
            coefficients=tuple(float(c) for c in d["coefficients"]),
            feature_names=tuple(d["features"]),
            target=d["target"],
            standardized=bool(d.get("standardized", False)),
        )


def fit_mlr(x, y, feature_names: Sequence[str] = FEATURE_NAMES, target: str = "td") -> LinearModel:
    """Ordinary least squares through the normal equations.

    A near-singular normal matrix gets one retry with ``RIDGE_FALLBACK`` on
    the diagonal; exactly dependent columns are rejected straight away.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float).reshape(-1)
    n, d = x.shape
    if len(feature_names) != d:
        raise FeatureMismatch(f"FeatureMismatch: {d} columns but {len(feature_names)} names")
    if y.shape[0] != n:
        raise ValueError("x and y differ in length")
    if n < d + 1:
        raise TooFewRows(f"TooFewRows: {n} rows for {d} features plus intercept")
    design = np.column_stack([np.ones(n), x])
    gram = design.T @ design
    rhs = design.T @ y
    try:
        beta = solve_spd(gram, rhs)
    except SingularMatrix as exc:
        if abs(exc.relative_pivot) <= EXACT_COLLINEAR:
            raise SingularDesign("SingularDesign: feature columns are exactly collinear") from None
        try:
            beta = solve_spd(gram + RIDGE_FALLBACK * np.eye(d + 1), rhs)
        except SingularMatrix:
            raise SingularDesign("SingularDesign: feature columns are collinear") from None
    return LinearModel(float(beta[0]), tuple(float(b) for b in beta[1:]), tuple(feature_names), target)


def _feature_vector(model: LinearModel, features) -> np.ndarray:
    if isinstance(features, Mapping):
        missing = [n for n in model.feature_names if n not in features]
        if missing or len(features) != len(model.feature_names):
            raise FeatureMismatch(f"FeatureMismatch: expected {list(model.feature_names)}, got {sorted(features)}")
        return np.array([features[n] for n in model.feature_names], dtype=float)
    if isinstance(features, EngineeredFeatures) and tuple(model.feature_names) != FEATURE_NAMES:
        raise FeatureMismatch(f"FeatureMismatch: model expects {list(model.feature_names)}")
    vec = np.asarray(features, dtype=float).reshape(-1)
    if vec.size != len(model.coefficients):
        raise FeatureMismatch(f"FeatureMismatch: expected {len(model.coefficients)} features, got {vec.size}")
    return vec


def predict_mlr(model: LinearModel, features) -> float:
    vec = _feature_vector(model, features)
    return float(model.intercept + vec @ np.asarray(model.coefficients))


def r2(y_actual, y_pred) -> float:
    y = np.asarray(y_actual, dtype=float).reshape(-1)
    p = np.asarray(y_pred, dtype=float).reshape(-1)
    if y.size != p.size:
        raise ValueError("vectors differ in length")
    if y.size < 2:
        raise ValueError("r2 needs at least 2 values")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ConstantTarget("ConstantTarget: actual values have zero variance")
    return 1.0 - float(np.sum((y - p) ** 2)) / ss_tot


def mse(y_actual, y_pred) -> float:
    y = np.asarray(y_actual, dtype=float).reshape(-1)
    p = np.asarray(y_pred, dtype=float).reshape(-1)
    if y.size != p.size or y.size == 0:
        raise ValueError("need two non-empty vectors of equal length")
    return float(np.mean((y - p) ** 2))


def mae(y_actual, y_pred) -> float:
    y = np.asarray(y_actual, dtype=float).reshape(-1)
    p = np.asarray(y_pred, dtype=float).reshape(-1)
    if y.size != p.size or y.size == 0:
        raise ValueError("need two non-empty vectors of equal length")
    return float(np.mean(np.abs(y - p)))
