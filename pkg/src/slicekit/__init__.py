"""slicekit: detector-agnostic sliced inference and dataset slicing for
small-object detection."""

__version__ = "0.1.0"

from slicekit.boxes import BBox, Detection, iou
from slicekit.coco import (
    Annotation,
    Category,
    CocoDataset,
    CocoFormatError,
    ImageRecord,
    load_coco,
    load_predictions,
    save_coco,
    save_predictions,
)
from slicekit.detectors import (
    DetectRequest,
    ExternalDetector,
    OracleDetector,
    ReplayDetector,
    VisibilityModel,
)
from slicekit.evaluation import EvalConfig, EvalResult, compare_runs, evaluate
from slicekit.grid import GridSpec, SliceRect, compute_slice_grid, coverage_check
from slicekit.merge import MergeConfig, merge_sources, nms
from slicekit.pipeline import PipelineConfig, remap_detection, run_sliced_inference
from slicekit.slicer import SliceJobConfig, build_finetune_dataset, clip_annotations
from slicekit.synthbench import SceneConfig, generate_scene_dataset, run_benchmark

__all__ = [
    "BBox",
    "Detection",
    "iou",
    "Annotation",
    "Category",
    "CocoDataset",
    "CocoFormatError",
    "ImageRecord",
    "load_coco",
    "load_predictions",
    "save_coco",
    "save_predictions",
    "DetectRequest",
    "ExternalDetector",
    "OracleDetector",
    "ReplayDetector",
    "VisibilityModel",
    "EvalConfig",
    "EvalResult",
    "compare_runs",
    "evaluate",
    "GridSpec",
    "SliceRect",
    "compute_slice_grid",
    "coverage_check",
    "MergeConfig",
    "merge_sources",
    "nms",
    "PipelineConfig",
    "remap_detection",
    "run_sliced_inference",
    "SliceJobConfig",
    "build_finetune_dataset",
    "clip_annotations",
    "SceneConfig",
    "generate_scene_dataset",
    "run_benchmark",
]
