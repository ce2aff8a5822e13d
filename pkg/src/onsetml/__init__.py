"""Statistical-learning toolkit for post-wildfire mudflow-onset experiments."""

from .classify import (
    UNDEFINED,
    ConfusionMatrix,
    LogisticModel,
    SvcModel,
    confusion,
    fit_logistic,
    fit_svc,
    logistic_predict,
    logistic_probability,
    metrics,
    sigmoid,
    svc_decision,
    svc_predict,
    train_logistic,
)
from .dataset import (
    EngineeredFeatures,
    ExperimentRecord,
    ExperimentTable,
    Layout,
    Soil,
    Standardizer,
    correlation_matrix,
    engineer_features,
    kfold_partition,
    load_experiments,
    split_train_test,
    standardize,
    synth_generate,
)
from .numerics import eigh_sym, mean_std, pearson_corr, seeded_shuffle, solve_spd
from .regression import LinearModel, fit_mlr, mae, mse, predict_mlr, r2
from .sensitivity import SensitivityCurve, sweep, sweep_all
from .unsupervised import PcaModel, KMeansResult, align_clusters_to_labels, explained_variance_report, fit_pca, kmeans, project
from .validation import CvReport, cross_validate, evaluate_holdout

__version__ = "0.1.0"
