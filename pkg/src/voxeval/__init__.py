"""Volumetric 3D object-detection evaluation and benchmarking.

The package covers the full path from medical volumes to method rankings:
NIfTI-1 I/O, isotropic resampling and intensity normalization, box algebra
and mask-to-instance extraction, protocol-faithful prediction matching,
mAP and FROC metrics, prediction post-processing, paired bootstrap ranking
of methods, dataset/prediction manifests, and a CLI driving batch runs.
"""
from .geometry import (
    BoundingBox3D,
    GroundTruthObject,
    InstanceMap,
    box_center,
    box_iou,
    boxes_to_array,
    connected_components,
    instances_to_objects,
    iou_matrix,
)
from .manifest import (
    DatasetManifest,
    ImageEntry,
    ManifestError,
    PredictionFile,
    PredictionFileError,
    load_manifest,
    load_predictions,
)
from .matching import Detection, MatchCriterion, MatchResult, match_image
from .metrics import (
    DEFAULT_FPPI_THRESHOLDS,
    EvalConfig,
    EvaluationResult,
    PRCurve,
    average_precision,
    evaluate_detections,
    froc,
    mean_average_precision,
    pr_curve,
)
from .postprocessing import PostprocessConfig, apply_postprocess, nms
from .preprocessing import (
    CT_DEFAULT,
    MRI_DEFAULT,
    PreprocessConfig,
    clip_percentiles,
    preprocess,
    resample,
    zscore_normalize,
)
from .ranking import MethodRun, RankingDistribution, bootstrap_rank, delta_vs_baseline
from .report import (
    evaluation_csv,
    rank_deltas_csv,
    rank_histograms_csv,
    render_figures,
    write_evaluation,
    write_json,
    write_ranking,
)
from .volume_io import (
    BadMagicError,
    DimensionError,
    NiftiFormatError,
    TruncatedPayloadError,
    UnsupportedDatatypeError,
    Volume,
    read_volume,
    write_volume,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox3D",
    "GroundTruthObject",
    "InstanceMap",
    "box_center",
    "box_iou",
    "boxes_to_array",
    "connected_components",
    "instances_to_objects",
    "iou_matrix",
    "DatasetManifest",
    "ImageEntry",
    "ManifestError",
    "PredictionFile",
    "PredictionFileError",
    "load_manifest",
    "load_predictions",
    "Detection",
    "MatchCriterion",
    "MatchResult",
    "match_image",
    "DEFAULT_FPPI_THRESHOLDS",
    "EvalConfig",
    "EvaluationResult",
    "PRCurve",
    "average_precision",
    "evaluate_detections",
    "froc",
    "mean_average_precision",
    "pr_curve",
    "PostprocessConfig",
    "apply_postprocess",
    "nms",
    "CT_DEFAULT",
    "MRI_DEFAULT",
    "PreprocessConfig",
    "clip_percentiles",
    "preprocess",
    "resample",
    "zscore_normalize",
    "MethodRun",
    "RankingDistribution",
    "bootstrap_rank",
    "delta_vs_baseline",
    "evaluation_csv",
    "rank_deltas_csv",
    "rank_histograms_csv",
    "render_figures",
    "write_evaluation",
    "write_json",
    "write_ranking",
    "BadMagicError",
    "DimensionError",
    "NiftiFormatError",
    "TruncatedPayloadError",
    "UnsupportedDatatypeError",
    "Volume",
    "read_volume",
    "write_volume",
    "__version__",
]
