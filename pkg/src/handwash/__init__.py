"""Hand-wash detection from wrist IMU and atmospheric sensors.

Recording I/O, a synthetic generator, windowed features, a from-scratch random
forest and the evaluation harness (LOSO / personalized ablations, aligned curves).
"""

__version__ = "0.1.0"

from .evaluation import (  # noqa: E402
    AblationConfig,
    AlignedCurve,
    ResultsTable,
    bootstrap_ci,
    duration_stats,
    event_aligned_curve,
    loso_folds,
    personalized_split,
    run_ablation,
)
from .features import FeatureMatrix, assemble_matrix, channel_features, make_windows  # noqa: E402
from .forest import (  # noqa: E402
    Forest,
    ForestParams,
    dump_forest,
    load_forest,
    predict,
    train_forest,
)
from .recording import (  # noqa: E402
    Annotation,
    ChannelSeries,
    CueWarning,
    Recording,
    RecordingError,
    RecordingMeta,
    ValidationIssue,
    load_dataset,
    parse_recording,
    propose_annotations,
    validate_recording,
    write_recording,
)
from .synthgen import ResponseParams, Scenario, generate_dataset, generate_recording  # noqa: E402

__all__ = [
    "Annotation", "ChannelSeries", "CueWarning", "Recording", "RecordingError", "RecordingMeta",
    "ValidationIssue", "load_dataset", "parse_recording", "propose_annotations", "validate_recording",
    "write_recording", "ResponseParams", "Scenario", "generate_dataset", "generate_recording",
    "FeatureMatrix", "assemble_matrix", "channel_features", "make_windows", "Forest", "ForestParams",
    "load_forest", "dump_forest", "predict", "train_forest", "AblationConfig", "AlignedCurve",
    "ResultsTable", "bootstrap_ci", "duration_stats", "event_aligned_curve", "loso_folds",
    "personalized_split", "run_ablation", "__version__",
]
