"""Hard-hat compliance analytics and COCO-style detection evaluation.

The package turns raw person/hard-hat detections into wearing verdicts via
a head-keypoint containment rule (or a decision-tree baseline), tunes the
detection threshold by F1 maximization, and scores everything with a
from-scratch average-precision engine over IoU or keypoint similarity,
validated against independent brute-force oracles.
"""

from .cart import (
    DecisionTree,
    FitParams,
    GridSearchSpec,
    fit,
    grid_search,
    impurity,
    load_tree,
)
from .coco import (
    Dataset,
    ImageInfo,
    StatsReport,
    dataset_stats,
    load_detections,
    load_ground_truth,
    write_dataset,
    write_instances,
)
from .compliance import (
    HatFeatures,
    ThresholdSweepResult,
    Verdict,
    classify_dt,
    classify_rule,
    extract_features,
    filter_by_threshold,
    tune_threshold,
    verdicts_to_instances,
)
from .core import (
    AreaBucket,
    BBox,
    Category,
    Instance,
    Keypoint,
    bucket_of,
    contains,
    iou,
)
from .metrics import (
    EvalConfig,
    MatchResult,
    MetricsReport,
    PRCurve,
    ap_coco,
    ap_interpolated,
    match,
    oks,
    pr_curve,
)
from .oracle import OracleResult, oracle_ap, oracle_f1_sweep
from .pipeline import derive_ground_truth, pipeline_classify_then_evaluate
from .synth import Scene, SceneSpec, generate, generate_scene

__version__ = "0.1.0"

__all__ = [
    "AreaBucket", "BBox", "Category", "Dataset", "DecisionTree", "EvalConfig",
    "FitParams", "GridSearchSpec", "HatFeatures", "ImageInfo", "Instance",
    "Keypoint", "MatchResult", "MetricsReport", "OracleResult", "PRCurve",
    "Scene", "SceneSpec", "StatsReport", "ThresholdSweepResult", "Verdict",
    "ap_coco", "ap_interpolated", "bucket_of", "classify_dt", "classify_rule",
    "contains", "dataset_stats", "derive_ground_truth", "extract_features",
    "filter_by_threshold", "fit", "generate", "generate_scene", "grid_search",
    "impurity", "iou", "load_detections", "load_ground_truth", "load_tree",
    "match", "oks", "oracle_ap", "oracle_f1_sweep",
    "pipeline_classify_then_evaluate", "pr_curve", "tune_threshold",
    "verdicts_to_instances", "write_dataset", "write_instances",
]
