"""facerank: re-rank object proposals by facial-part response layout.

Pipeline: partness maps (files or the synthetic generator) -> integral images
-> per-part faceness ratios -> combined window scores -> re-ranking, NMS, and
detection evaluation. Split parameters are fitted by exhaustive MAP grid
search against labeled windows.
"""

from .errors import FacerankError
from .evaluation import (
    EvalReport,
    PRCurve,
    RefinementTarget,
    denormalize_target,
    detection_rate,
    make_report,
    pr_curve,
    prepare_refinement_targets,
    recall_vs_proposals,
)
from .faceness import (
    Aggregate,
    FacenessScore,
    SpatialConfig,
    SplitGeometry,
    combined_faceness,
    part_faceness,
    score_windows,
)
from .fit import FitResult, GridSpec, TrainingSample, fit_all, fit_map, likelihood
from .geometry import Ellipse, Window, ellipse_to_box, iou
from .pmap import (
    Channel,
    IntegralImage,
    PartnessMap,
    build_integral,
    fuse_face_map,
    integral_stack,
    read_pmap,
    rect_sum,
    write_pmap,
)
from .ranking import PartDetection, RankedList, localize_parts, nms_boxes, rerank
from .synth import (
    FaceSpec,
    PartLayout,
    SceneSpec,
    SyntheticScene,
    default_spec,
    generate,
    read_scene,
    sample_proposals,
    sample_training,
    write_scene,
)

__version__ = "0.1.0"

__all__ = [
    "Aggregate",
    "Channel",
    "Ellipse",
    "EvalReport",
    "FaceSpec",
    "FacenessScore",
    "FacerankError",
    "FitResult",
    "GridSpec",
    "IntegralImage",
    "PRCurve",
    "PartDetection",
    "PartLayout",
    "PartnessMap",
    "RankedList",
    "RefinementTarget",
    "SceneSpec",
    "SpatialConfig",
    "SplitGeometry",
    "SyntheticScene",
    "TrainingSample",
    "Window",
    "build_integral",
    "combined_faceness",
    "default_spec",
    "denormalize_target",
    "detection_rate",
    "ellipse_to_box",
    "fit_all",
    "fit_map",
    "fuse_face_map",
    "generate",
    "integral_stack",
    "iou",
    "likelihood",
    "localize_parts",
    "make_report",
    "nms_boxes",
    "part_faceness",
    "pr_curve",
    "prepare_refinement_targets",
    "read_pmap",
    "read_scene",
    "recall_vs_proposals",
    "rect_sum",
    "rerank",
    "sample_proposals",
    "sample_training",
    "score_windows",
    "write_pmap",
    "write_scene",
]
