"""Time-pressure state classification for powered two-wheeler telemetry.

The heavy lifting lives in the compiled extension; this package re-exports
its surface: corpus generation, training, evaluation, single-window
prediction, the threshold state engine, and the statistics helpers.
"""

from ._core import (  # noqa: F401
    __version__,
    class_metrics_from_counts,
    classify_state,
    complexity,
    evaluate_checkpoint,
    generate_corpus,
    predict_window,
    roc_auc,
    schema_feature_names,
    schema_hash,
    train_model,
    validate_corpus_dir,
    wilson_ci,
)

__all__ = [
    "__version__",
    "class_metrics_from_counts",
    "classify_state",
    "complexity",
    "evaluate_checkpoint",
    "generate_corpus",
    "predict_window",
    "roc_auc",
    "schema_feature_names",
    "schema_hash",
    "train_model",
    "validate_corpus_dir",
    "wilson_ci",
]
