"""Breast-ultrasound image classification pipeline.

Python surface over the C++ core: dataset preparation, preprocessing,
model construction (three transfer backbones plus a custom CNN),
training, evaluation metrics, and report files.
"""

from busi._core import (  # noqa: F401
    DEFAULT_IMAGE_SIZE,
    BadRatiosError,
    BinaryCounts,
    CheckpointError,
    ClassMetrics,
    ClassTooSmallError,
    ComparisonRow,
    ComparisonTable,
    ConfusionMatrix,
    DatasetManifest,
    DecodeError,
    DivergedError,
    EmptyClassError,
    EmptyDatasetError,
    EmptyInputError,
    EmptySplitError,
    EpochRecord,
    Error,
    EvaluationReport,
    IoError,
    LabelError,
    Model,
    ModelKind,
    ModelSpec,
    NormalizePolicy,
    Normalization,
    NotFoundError,
    OptimizerKind,
    ParseError,
    RocCurve,
    Sample,
    ShapeError,
    Split,
    SplitRatios,
    TrainConfig,
    TrainHistory,
    UndefinedMetricError,
    UnknownBackboneError,
    WeightsUnavailableError,
    __version__,
    accuracy,
    argmax_rows,
    backbone_feature_dim,
    build_model,
    compare,
    confusion_matrix,
    emit_report,
    evaluate,
    evaluate_split,
    f1,
    format_comparison_table,
    load_and_resize,
    load_checkpoint,
    load_manifest,
    load_metrics_json,
    normalization_from_string,
    normalize,
    one_hot,
    one_vs_rest,
    precision,
    recall,
    registered_backbones,
    roc_curve,
    save_checkpoint,
    save_comparison_csv,
    save_manifest,
    scan_dataset,
    stratified_split,
    train,
)
