"""Hold-out evaluation and repeated, seeded K-fold cross-validation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import numerics
from .classify import (
    DEFAULT_ETA,
    DEFAULT_MAX_ITER,
    DEFAULT_THRESHOLD,
    DEFAULT_TOL,
    UNDEFINED,
    ConfusionMatrix,
    LogisticModel,
    Metrics,
    SvcModel,
    confusion,
    fit_logistic,
    fit_svc,
    metrics,
)
from .dataset import FEATURE_NAMES, ExperimentTable, Standardizer, engineer_matrix, kfold_partition, standardize
from .errors import EmptyTable, NoClassVariation, OnsetError
from .unsupervised import PcaModel, fit_pca, project


class Predictor(Protocol):
    def predict(self, x) -> np.ndarray: ...


Trainer = Callable[[np.ndarray, np.ndarray], Predictor]


# -- reference trainers ------------------------------------------------------
# Each one fits its Standardizer on the training rows it is handed, so a CV
# fold never sees statistics from its own test rows.


@dataclass(frozen=True)
class FittedLogistic:
    model: LogisticModel

    @property
    def standardizer(self) -> Standardizer:
        return self.model.standardizer

    def predict(self, x) -> np.ndarray:
        return self.model.predict_features(engineer_matrix(x))


@dataclass(frozen=True)
class LogisticTrainer:
    """Raw (d50, wev, slope, RI) rows -> rain-gated products -> logistic fit."""

    eta: float = DEFAULT_ETA
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    threshold: float = DEFAULT_THRESHOLD

    def __call__(self, x, y) -> FittedLogistic:
        z, scaler = standardize(engineer_matrix(x), FEATURE_NAMES)
        model = fit_logistic(
            z, y, eta=self.eta, max_iter=self.max_iter, tol=self.tol,
            standardizer=scaler, threshold=self.threshold, feature_names=FEATURE_NAMES,
        )
        return FittedLogistic(model)


@dataclass(frozen=True)
class FittedSvc:
    model: SvcModel
    standardizer: Standardizer
    pca: PcaModel | None = None
    n_components: int = 0

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.pca is not None:
            return project(self.pca, x, self.n_components)
        return self.standardizer.transform(x)

    def predict(self, x) -> np.ndarray:
        return self.model.predict_many(self.transform(x))


@dataclass(frozen=True)
class SvcTrainer:
    """Standardize (and optionally PCA-project) on the training rows, then fit a linear SVC."""

    C: float = 1.0
    n_components: int | None = None

    def __call__(self, x, y) -> FittedSvc:
        x = np.asarray(x, dtype=float)
        if self.n_components:
            pca = fit_pca(x, [f"c{i}" for i in range(x.shape[1])])
            scores = project(pca, x, self.n_components)
            return FittedSvc(fit_svc(scores, y, self.C), pca.standardizer, pca, self.n_components)
        z, scaler = standardize(x)
        return FittedSvc(fit_svc(z, y, self.C), scaler)


# -- evaluation --------------------------------------------------------------


def _predict(model, x) -> np.ndarray:
    if hasattr(model, "predict"):
        return np.asarray(model.predict(x)).astype(int)
    if isinstance(model, LogisticModel):
        return model.predict_features(engineer_matrix(x))
    if isinstance(model, SvcModel):
        return model.predict_many(x)
    raise TypeError(f"cannot predict with {type(model).__name__}")


def evaluate_holdout(model, test, y_test=None) -> tuple[ConfusionMatrix, Metrics]:
    """Confusion matrix and metrics of ``model`` on a test table or ``(x, y)`` pair.

    Tables are scored from their raw (d50, wev, slope, RI) columns.
    """
    if isinstance(test, ExperimentTable):
        if len(test) == 0:
            raise EmptyTable("EmptyTable: no test rows")
        x, y = test.raw_features(), test.labels()
    else:
        x, y = np.asarray(test, dtype=float), np.asarray(y_test)
        if x.shape[0] == 0:
            raise EmptyTable("EmptyTable: no test rows")
    cm = confusion(y, _predict(model, x))
    return cm, metrics(cm)


# -- cross-validation --------------------------------------------------------


@dataclass(frozen=True)
class FoldResult:
    run: int
    fold: int
    n_test: int
    accuracy: float | None
    precision: object
    threat_score: object
    warning: str = ""

    @property
    def skipped(self) -> bool:
        return self.accuracy is None


@dataclass(frozen=True)
class CvReport:
    k: int
    runs: int
    master_seed: int
    folds: tuple[FoldResult, ...]
    run_means: tuple[float, ...]
    overall_mean: float
    overall_std: float
    warnings: tuple[str, ...] = field(default=())

    def accuracies(self) -> list[float]:
        return [f.accuracy for f in self.folds if not f.skipped]

    def to_csv(self) -> str:
        def cell(v):
            if v is None:
                return ""
            if v is UNDEFINED:
                return "undefined"
            return repr(float(v))

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "fold", "n_test", "accuracy", "precision", "threat_score"])
        for f in self.folds:
            w.writerow([f.run, f.fold, f.n_test, cell(f.accuracy), cell(f.precision), cell(f.threat_score)])
        buf.write("\n")
        w.writerow(["statistic", "value"])
        w.writerow(["k", self.k])
        w.writerow(["runs", self.runs])
        w.writerow(["master_seed", self.master_seed])
        for r, m in enumerate(self.run_means, start=1):
            w.writerow([f"run_{r}_mean_accuracy", cell(m)])
        w.writerow(["overall_mean_accuracy", cell(self.overall_mean)])
        w.writerow(["overall_std_accuracy", cell(self.overall_std)])
        w.writerow(["skipped_folds", sum(f.skipped for f in self.folds)])
        w.writerow(["standardization", "per-fold, training rows only"])
        return buf.getvalue()


def run_seed(master_seed: int, run: int) -> int:
    return numerics.derive_seed(master_seed, run)


def cross_validate(trainer: Trainer, x, y, k: int = 7, runs: int = 5, master_seed: int = 42) -> CvReport:
    """Repeated K-fold CV; run ``r`` shuffles with ``derive_seed(master_seed, r)``.

    A fold whose training rows hold a single class is skipped with a warning.
    Other trainer errors propagate with the run and fold appended.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y).astype(int)
    n = len(y)
    if n == 0:
        raise EmptyTable("EmptyTable: nothing to cross-validate")
    results, warnings, run_means = [], [], []
    for r in range(1, runs + 1):
        folds = kfold_partition(n, k, run_seed(master_seed, r))
        accs = []
        for f, test_idx in enumerate(folds, start=1):
            test = np.array(test_idx)
            train = np.setdiff1d(np.arange(n), test)
            try:
                fitted = trainer(x[train], y[train])
            except NoClassVariation:
                msg = f"run {r} fold {f}: training rows hold one class, fold skipped"
                warnings.append(msg)
                results.append(FoldResult(r, f, len(test), None, UNDEFINED, UNDEFINED, msg))
                continue
            except OnsetError as exc:
                exc.args = (f"{exc} (run {r}, fold {f})",)
                exc.run, exc.fold = r, f
                raise
            cm = confusion(y[test], _predict(fitted, x[test]))
            m = metrics(cm)
            accs.append(m.accuracy)
            results.append(FoldResult(r, f, len(test), m.accuracy, m.precision, m.threat_score))
        run_means.append(float(np.mean(accs)) if accs else math.nan)
    all_acc = [fr.accuracy for fr in results if not fr.skipped]
    mean = float(np.mean(all_acc)) if all_acc else math.nan
    std = numerics.mean_std(all_acc)[1] if len(all_acc) >= 2 else 0.0
    return CvReport(k, runs, master_seed, tuple(results), tuple(run_means), mean, std, tuple(warnings))
