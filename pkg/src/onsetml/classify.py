"""Binary failure classification: gradient-trained logistic regression,
soft-margin linear SVC, and confusion-matrix metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import FEATURE_NAMES, EngineeredFeatures, ExperimentRecord, ExperimentTable, Standardizer, engineer_features, standardize
from .errors import (
    DimensionMismatch,
    Diverged,
    EmptyMatrix,
    FeatureMismatch,
    LabelOutOfRange,
    NoClassVariation,
    NoConvergence,
    NotStandardized,
)

DEFAULT_ETA = 0.05
DEFAULT_MAX_ITER = 50_000
DEFAULT_TOL = 1e-8
DEFAULT_THRESHOLD = 0.5


class _Undefined:
    """Marker for a metric whose denominator is zero."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Undefined"

    def __str__(self):
        return "undefined"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_Undefined, ())


UNDEFINED = _Undefined()


def is_undefined(value) -> bool:
    return value is UNDEFINED


def sigmoid(x):
    """Logistic function, evaluated without overflow for either sign of ``x``."""
    if np.ndim(x) == 0:
        x = float(x)
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y).reshape(-1)
    if y.size and not np.all((y == 0) | (y == 1)):
        raise LabelOutOfRange("LabelOutOfRange: labels must be 0 or 1")
    return y.astype(int)


# -- logistic regression -----------------------------------------------------


def log_likelihood(params, x, y) -> float:
    """Mean Bernoulli log-likelihood; ``params[0]`` is the intercept."""
    x = np.asarray(x, dtype=float)
    z = params[0] + x @ np.asarray(params[1:])
    y = np.asarray(y, dtype=float)
    # log sigma(z) = -log(1 + e^-z)
    return float(np.mean(-y * np.logaddexp(0.0, -z) - (1.0 - y) * np.logaddexp(0.0, z)))


def log_likelihood_gradient(params, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    z = params[0] + x @ np.asarray(params[1:])
    resid = np.asarray(y, dtype=float) - sigmoid(z)
    n = x.shape[0]
    return np.concatenate([[resid.sum()], x.T @ resid]) / n


@dataclass(frozen=True)
class LogisticModel:
    intercept: float
    coefficients: tuple[float, ...]
    standardizer: Standardizer
    threshold: float = DEFAULT_THRESHOLD
    eta: float = DEFAULT_ETA
    iterations: int = 0
    grad_norm: float = 0.0
    converged: bool = True
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if not all(math.isfinite(c) for c in (self.intercept, *self.coefficients)):
            raise Diverged("Diverged: non-finite coefficients")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.intercept, *self.coefficients])

    def logit_standardized(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.intercept + z @ np.asarray(self.coefficients)

    def probability_features(self, features) -> np.ndarray:
        """Probabilities for raw (unstandardized) engineered feature rows."""
        f = np.asarray(features, dtype=float)
        if f.shape[-1] != len(self.coefficients):
            raise FeatureMismatch(f"FeatureMismatch: expected {len(self.coefficients)} features, got {f.shape[-1]}")
        return sigmoid(self.logit_standardized(self.standardizer.transform(f)))

    def predict_features(self, features) -> np.ndarray:
        return (self.probability_features(features) >= self.threshold).astype(int)

    def predict_table(self, table: ExperimentTable) -> np.ndarray:
        return self.predict_features(table.features())

    def with_threshold(self, threshold: float) -> "LogisticModel":
        return replace(self, threshold=threshold)

    def to_dict(self, **extra) -> dict:
        doc = {
            "model_type": "logistic",
            "features": list(self.feature_names),
            "intercept": self.intercept,
            "coefficients": list(self.coefficients),
            "standardizer": self.standardizer.to_dict(),
            "threshold": self.threshold,
            "training": {
                "eta": self.eta,
                "iterations": self.iterations,
                "grad_norm": self.grad_norm,
                "converged": self.converged,
            },
        }
        doc.update(extra)
        return doc

    @classmethod
    def from_dict(cls, d: Mapping) -> "LogisticModel":
        meta = d.get("training", {})
        return cls(
            intercept=float(d["intercept"]),
            coefficients=tuple(float(c) for c in d["coefficients"]),
            standardizer=Standardizer.from_dict(d["standardizer"]),
            threshold=float(d.get("threshold", DEFAULT_THRESHOLD)),
            eta=float(meta.get("eta", DEFAULT_ETA)),
            iterations=int(meta.get("iterations", 0)),
            grad_norm=float(meta.get("grad_norm", 0.0)),
            converged=bool(meta.get("converged", True)),
            feature_names=tuple(d.get("features", FEATURE_NAMES)),
        )


def fit_logistic(
    x,
    y,
    eta: float = DEFAULT_ETA,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    standardizer: Standardizer | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    feature_names: Sequence[str] | None = None,
    on_iteration: Callable[[int, np.ndarray], None] | None = None,
) -> LogisticModel:
    """Batch gradient ascent on the mean log-likelihood from all-zero start.

    ``x`` must already be standardized; ``standardizer`` is the transform that
    produced it and is stored on the model for scoring raw inputs. Stops once
    the largest gradient component drops below ``tol``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = _check_labels(y)
    if y.size != x.shape[0]:
        raise ValueError("x and y differ in length")
    if y.size == 0 or np.all(y == y[0]):
        raise NoClassVariation("NoClassVariation: both classes must be present")
    if np.max(np.abs(x.mean(axis=0))) > 1e-6:
        raise NotStandardized("NotStandardized: feature means must be 0 (standardize first)")
    d = x.shape[1]
    names = tuple(feature_names) if feature_names is not None else (
        FEATURE_NAMES if d == 3 else tuple(f"x{i + 1}" for i in range(d))
    )
    if standardizer is None:
        standardizer = Standardizer.identity(names)

    params = np.zeros(d + 1)
    grad = log_likelihood_gradient(params, x, y)
    it = 0
    while it < max_iter and np.max(np.abs(grad)) >= tol:
        params = params + eta * grad
        it += 1
        if not np.all(np.isfinite(params)):
            raise Diverged(f"Diverged: non-finite coefficients after {it} iterations (eta={eta})")
        if on_iteration is not None:
            on_iteration(it, params)
        grad = log_likelihood_gradient(params, x, y)
    gnorm = float(np.max(np.abs(grad)))
    return LogisticModel(
        intercept=float(params[0]),
        coefficients=tuple(float(p) for p in params[1:]),
        standardizer=standardizer,
        threshold=threshold,
        eta=eta,
        iterations=it,
        grad_norm=gnorm,
        converged=gnorm < tol,
        feature_names=names,
    )


def train_logistic(table: ExperimentTable, **kwargs) -> LogisticModel:
    """Engineer the rain-gated products, standardize them on ``table``, fit."""
    z, scaler = standardize(table.features(), FEATURE_NAMES)
    return fit_logistic(z, table.labels(), standardizer=scaler, feature_names=FEATURE_NAMES, **kwargs)


def _features_of(model: LogisticModel, record) -> np.ndarray:
    if isinstance(record, ExperimentRecord):
        if tuple(model.feature_names) != FEATURE_NAMES:
            raise FeatureMismatch(f"FeatureMismatch: model expects {list(model.feature_names)}")
        return np.asarray(engineer_features(record), dtype=float)
    if isinstance(record, Mapping):
        try:
            return np.array([record[n] for n in model.feature_names], dtype=float)
        except KeyError as exc:
            raise FeatureMismatch(f"FeatureMismatch: missing feature {exc.args[0]!r}") from None
    vec = np.asarray(record, dtype=float).reshape(-1)
    if vec.size != len(model.coefficients):
        raise FeatureMismatch(f"FeatureMismatch: expected {len(model.coefficients)} features, got {vec.size}")
    return vec


def logistic_probability(model: LogisticModel, record) -> float:
    """Failure probability for a record (or its raw engineered features)."""
    if tuple(model.standardizer.names) != tuple(model.feature_names):
        raise FeatureMismatch("FeatureMismatch: standardizer columns differ from model features")
    return float(model.probability_features(_features_of(model, record)))


def classify_probability(p: float, threshold: float = DEFAULT_THRESHOLD) -> int:
    """1 ("Infinite failure") iff ``p >= threshold``, else 0 ("No failure")."""
    return 1 if p >= threshold else 0


def logistic_predict(model: LogisticModel, record) -> int:
    return classify_probability(logistic_probability(model, record), model.threshold)


# -- linear SVC --------------------------------------------------------------

SVC_TOL = 1e-8
SVC_MAX_PASSES = 1_000_000
_TAU = 1e-12  # curvature floor for (near-)duplicate points
SUPPORT_SLACK = 1e-6


@dataclass(frozen=True)
class SvcModel:
    w: tuple[float, ...]
    b: float
    C: float
    support: tuple[int, ...]
    margin_width: float
    alphas: tuple[float, ...] = field(default=(), compare=False)
    iterations: int = field(default=0, compare=False)

    def decision(self, point) -> float:
        return svc_decision(self, point)

    def decision_many(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, len(self.w))
        return x @ np.asarray(self.w) + self.b

    def predict_many(self, x) -> np.ndarray:
        return (self.decision_many(x) >= 0).astype(int)

    def to_dict(self, **extra) -> dict:
        doc = {
            "model_type": "svc",
            "w": list(self.w),
            "b": self.b,
            "C": self.C,
            "support": list(self.support),
            "margin_width": self.margin_width,
        }
        doc.update(extra)
        return doc

    @classmethod
    def from_dict(cls, d: Mapping) -> "SvcModel":
        return cls(
            w=tuple(float(v) for v in d["w"]),
            b=float(d["b"]),
            C=float(d["C"]),
            support=tuple(int(i) for i in d["support"]),
            margin_width=float(d["margin_width"]),
        )


def svc_objective(w, b, x, y, C) -> float:
    """Soft-margin primal: 0.5*|w|^2 + C * sum of hinge losses (labels in {0, 1})."""
    x = np.asarray(x, dtype=float)
    s = 2.0 * np.asarray(y, dtype=float) - 1.0
    w = np.asarray(w, dtype=float)
    hinge = np.maximum(0.0, 1.0 - s * (x @ w + b))
    return float(0.5 * w @ w + C * hinge.sum())


def fit_svc(x, y, C: float = 1.0, tol: float = SVC_TOL, max_passes: int = SVC_MAX_PASSES) -> SvcModel:
    """Soft-margin linear SVC solved in the dual by SMO.

    Each step takes the most violating ``i`` and the partner ``j`` with the
    largest second-order gain, then moves both multipliers analytically along
    the equality constraint. The loop ends when the maximal KKT violation gap
    drops below ``tol``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = _check_labels(y)
    if y.size != x.shape[0]:
        raise DimensionMismatch("DimensionMismatch: x and y differ in length")
    if y.size == 0 or np.all(y == y[0]):
        raise NoClassVariation("NoClassVariation: both classes must be present")
    if not C > 0:
        raise ValueError("C must be > 0")
    s = 2.0 * y - 1.0
    n = y.size
    k = x @ x.T
    q = np.outer(s, s) * k
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - sum(a)

    passes = 0
    while True:
        up = ((alpha < C) & (s > 0)) | ((alpha > 0) & (s < 0))
        low = ((alpha < C) & (s < 0)) | ((alpha > 0) & (s > 0))
        score = -s * grad
        score_up = np.where(up, score, -np.inf)
        score_low = np.where(low, score, np.inf)
        i = int(np.argmax(score_up))
        gap = score_up[i] - np.min(score_low)
        if not gap > tol:
            break
        if passes >= max_passes:
            raise NoConvergence(f"NoConvergence: SMO gap {gap:.3e} after {passes} steps")
        passes += 1
        # second-order pick of j: largest guaranteed decrease b^2 / a
        b_ij = score_up[i] - score_low
        a_ij = np.maximum(k[i, i] + np.diag(k) - 2.0 * k[i], _TAU)
        gain = np.where(b_ij > 0, b_ij * b_ij / a_ij, -np.inf)
        j = int(np.argmax(gain))
        # move alpha_i += s_i t, alpha_j -= s_j t
        bound_i = C - alpha[i] if s[i] > 0 else alpha[i]
        bound_j = alpha[j] if s[j] > 0 else C - alpha[j]
        t_max = min(bound_i, bound_j)
        t = b_ij[j] / a_ij[j]
        if t >= t_max:
            t = t_max
        new_i = alpha[i] + s[i] * t
        new_j = alpha[j] - s[j] * t
        if t == bound_i:
            new_i = C if s[i] > 0 else 0.0
        if t == bound_j:
            new_j = 0.0 if s[j] > 0 else C
        di, dj = new_i - alpha[i], new_j - alpha[j]
        alpha[i], alpha[j] = new_i, new_j
        grad += q[:, i] * di + q[:, j] * dj

    yg = s * grad
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        b = -float(np.mean(yg[free]))
    else:
        # any b between the two KKT bounds is optimal; take the midpoint
        up = ((alpha < C) & (s > 0)) | ((alpha > 0) & (s < 0))
        low = ((alpha < C) & (s < 0)) | ((alpha > 0) & (s > 0))
        hi = np.max(-yg[up]) if np.any(up) else np.min(-yg[low])
        lo = np.min(-yg[low]) if np.any(low) else hi
        b = 0.5 * float(hi + lo)
    w = (alpha * s) @ x
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        raise NoConvergence("NoConvergence: weight vector is zero (classes indistinguishable)")
    margins = s * (x @ w + b)
    support = tuple(int(i) for i in np.flatnonzero(margins <= 1.0 + SUPPORT_SLACK))
    return SvcModel(
        w=tuple(float(v) for v in w),
        b=b,
        C=float(C),
        support=support,
        margin_width=2.0 / norm,
        alphas=tuple(float(a) for a in alpha),
        iterations=passes,
    )


def svc_decision(model: SvcModel, point) -> float:
    p = np.asarray(point, dtype=float).reshape(-1)
    if p.size != len(model.w):
        raise DimensionMismatch(f"DimensionMismatch: model has {len(model.w)} dimensions, point has {p.size}")
    return float(p @ np.asarray(model.w) + model.b)


def svc_predict(model: SvcModel, point) -> int:
    return 1 if svc_decision(model, point) >= 0 else 0


# -- confusion matrix --------------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class Metrics:
    precision: float | _Undefined
    accuracy: float
    threat_score: float | _Undefined

    def to_dict(self) -> dict:
        def enc(v):
            return str(v) if v is UNDEFINED else v

        return {"precision": enc(self.precision), "accuracy": self.accuracy, "threat_score": enc(self.threat_score)}


def confusion(y_actual, y_pred) -> ConfusionMatrix:
    y = _check_labels(y_actual)
    p = _check_labels(y_pred)
    if y.size != p.size:
        raise DimensionMismatch("DimensionMismatch: label vectors differ in length")
    if y.size == 0:
        raise EmptyMatrix("EmptyMatrix: no labels to compare")
    return ConfusionMatrix(
        tp=int(np.sum((y == 1) & (p == 1))),
        fp=int(np.sum((y == 0) & (p == 1))),
        fn=int(np.sum((y == 1) & (p == 0))),
        tn=int(np.sum((y == 0) & (p == 0))),
    )


def metrics(cm: ConfusionMatrix) -> Metrics:
    if cm.total == 0:
        raise EmptyMatrix("EmptyMatrix: confusion matrix is empty")
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else UNDEFINED
    ts = cm.tp / (cm.tp + cm.fp + cm.fn) if cm.tp + cm.fp + cm.fn else UNDEFINED
    return Metrics(precision, (cm.tp + cm.tn) / cm.total, ts)
