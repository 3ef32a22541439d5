"""Evidential binary classification with Beta-distributed evidence.

Joint estimation of class probabilities and an explicit predictive
uncertainty u_hat = 2 / (alpha + beta), plus the two uncertainty-driven
procedures built on it: sample rejection at inference and bootstrapped
training-set filtering.
"""

from .datasets import (
    Dataset,
    LabeledSample,
    generate_synthetic,
    inject_noise,
    read_csv,
    read_idx,
    split,
    write_csv,
)
from .errors import (
    ConfigError,
    DataFormatError,
    MetricUndefinedError,
    ShapeMismatchError,
    TrainingDivergedError,
    UnsupportedAnalysisError,
)
from .estimator import EvidentialClassifier
from .evidence import (
    BetaParams,
    EvidencePair,
    LambdaSchedule,
    bayes_risk_mc,
    beta_from_evidence,
    data_term,
    kl_term,
    lambda_at,
    loss_grad,
    total_loss,
)
from .metrics import (
    BootstrapReport,
    EnrichmentReport,
    Prediction,
    RejectionCurve,
    bootstrap,
    enrichment_report,
    f1_scores,
    predictions_from,
    rejection_curve,
    roc_auc,
)
from .network import (
    NetworkParams,
    TrainConfig,
    TrainedModel,
    forward,
    load_model,
    save_model,
    train,
)
from .sampling import (
    EnsembleModel,
    ensemble_evidence,
    ensemble_train,
    load_ensemble,
    mc_dropout_evidence,
    save_ensemble,
)

__version__ = "0.1.0"

__all__ = [
    "BetaParams",
    "BootstrapReport",
    "ConfigError",
    "DataFormatError",
    "Dataset",
    "EnrichmentReport",
    "EnsembleModel",
    "EvidencePair",
    "EvidentialClassifier",
    "LabeledSample",
    "LambdaSchedule",
    "MetricUndefinedError",
    "NetworkParams",
    "Prediction",
    "RejectionCurve",
    "ShapeMismatchError",
    "TrainConfig",
    "TrainedModel",
    "TrainingDivergedError",
    "UnsupportedAnalysisError",
    "bayes_risk_mc",
    "beta_from_evidence",
    "bootstrap",
    "data_term",
    "enrichment_report",
    "ensemble_evidence",
    "ensemble_train",
    "f1_scores",
    "forward",
    "generate_synthetic",
    "inject_noise",
    "kl_term",
    "lambda_at",
    "load_ensemble",
    "load_model",
    "loss_grad",
    "mc_dropout_evidence",
    "predictions_from",
    "read_csv",
    "read_idx",
    "rejection_curve",
    "roc_auc",
    "save_ensemble",
    "save_model",
    "split",
    "total_loss",
    "train",
    "write_csv",
]
