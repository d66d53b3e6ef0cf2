"""Sliced-inference orchestration: slice, detect per patch, remap, merge."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from slicekit.boxes import BBox, Detection
from slicekit.coco import CocoDataset, predictions_to_dicts
from slicekit.detectors import DetectorIface, DetectRequest
from slicekit.grid import GridSpec, SliceRect, compute_slice_grid
from slicekit.merge import MergeConfig, canonical_sort, merge_sources

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything that determines a sliced-inference run."""

    grid: GridSpec
    # None resolves to 2x the patch width (patches are upscaled before
    # detection so small objects gain apparent size).
    target_width: int | None = None
    full_inference: bool = False
    fi_target_width: int = 1333
    merge: MergeConfig = field(default_factory=MergeConfig)
    seed: int = 0
    parallelism: int = 1

    def __post_init__(self):
        if self.target_width is not None and self.target_width < 1:
            raise ValueError("target_width must be >= 1")
        if self.fi_target_width < 1:
            raise ValueError("fi_target_width must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    @property
    def resolved_target_width(self) -> int:
        return self.target_width if self.target_width is not None else 2 * self.grid.patch_w


def remap_detection(
    det: Detection, slice_rect: SliceRect, image_w: int, image_h: int
) -> Detection | None:
    """Map a resized-patch detection back to original-image coordinates.

    Boxes are clamped to the image; a box degenerate after clamping is
    dropped (None) with a warning.
    """
    scale = slice_rect.resize_scale
    rect = slice_rect.rect
    x0 = det.bbox.x_min / scale + rect.x_min
    y0 = det.bbox.y_min / scale + rect.y_min
    x1 = det.bbox.x_max / scale + rect.x_min
    y1 = det.bbox.y_max / scale + rect.y_min
    x0, x1 = max(0.0, min(x0, image_w)), max(0.0, min(x1, image_w))
    y0, y1 = max(0.0, min(y0, image_h)), max(0.0, min(y1, image_h))
    if x1 <= x0 or y1 <= y0:
        logger.warning("dropping detection degenerate after clamping to %dx%d", image_w, image_h)
        return None
    return Detection(
        category_id=det.category_id,
        score=det.score,
        bbox=BBox(x0, y0, x1, y1),
        source=slice_rect.index,
    )


def run_sliced_inference(
    image_ref: str,
    image_id: int,
    image_w: int,
    image_h: int,
    config: PipelineConfig,
    detector: DetectorIface,
    slices: list[SliceRect] | None = None,
    strict: bool = True,
) -> list[Detection]:
    """SAHI for one image: per-patch detect, remap, optional FI, NMS merge.

    `slices` overrides the computed grid (used to verify order
    invariance); results are identical for any permutation and any
    parallelism because detections are canonically sorted before merging.
    """
    if slices is None:
        slices = compute_slice_grid(image_w, image_h, config.grid)
    target_width = config.resolved_target_width
    slices = [replace(s, resize_scale=target_width / s.rect.width) for s in slices]

    def detect_patch(s: SliceRect) -> list[Detection]:
        request = DetectRequest(
            image_ref=image_ref,
            region=s.rect,
            target_width=target_width,
            request_id=s.index,
            image_id=image_id,
        )
        try:
            raw = detector.detect(request)
        except Exception:
            if strict:
                raise
            logger.warning("patch %d failed; skipping", s.index, exc_info=True)
            return []
        return [d for d in (remap_detection(r, s, image_w, image_h) for r in raw) if d]

    if config.parallelism > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            per_patch = list(pool.map(detect_patch, slices))
    else:
        per_patch = [detect_patch(s) for s in slices]
    patch_dets = [d for dets in per_patch for d in dets]

    fi_dets: list[Detection] = []
    if config.full_inference:
        full = SliceRect(
            rect=BBox(0, 0, image_w, image_h),
            index=-1,
            resize_scale=config.fi_target_width / image_w,
        )
        request = DetectRequest(
            image_ref=image_ref,
            region=full.rect,
            target_width=config.fi_target_width,
            request_id=-1,
            image_id=image_id,
        )
        raw = detector.detect(request)
        fi_dets = [
            replace(d, source=None)
            for d in (remap_detection(r, full, image_w, image_h) for r in raw)
            if d
        ]

    return merge_sources(canonical_sort(patch_dets), fi_dets, config.merge)


def run_dataset_inference(
    dataset: CocoDataset,
    images_dir: str | Path | None,
    config: PipelineConfig,
    detector: DetectorIface,
    out_path: str | Path,
    report_path: str | Path | None = None,
    strict: bool = True,
) -> list[tuple[int, Detection]]:
    """Run sliced inference over a whole dataset, writing a COCO results
    file plus an optional per-image timing/patch-count report."""
    images_dir = Path(images_dir) if images_dir is not None else None
    all_preds: list[tuple[int, Detection]] = []
    report_rows = []
    t_start = time.perf_counter()
    try:
        for im in dataset.images:
            ref = str(images_dir / im.file_name) if images_dir else im.file_name
            n_patches = len(compute_slice_grid(im.width, im.height, config.grid))
            t0 = time.perf_counter()
            dets = run_sliced_inference(
                ref, im.id, im.width, im.height, config, detector, strict=strict
            )
            report_rows.append(
                {
                    "image_id": im.id,
                    "patch_count": n_patches,
                    "detections": len(dets),
                    "seconds": round(time.perf_counter() - t0, 6),
                }
            )
            all_preds.extend((im.id, d) for d in dets)
    finally:
        # flush whatever completed, even on abort
        Path(out_path).write_text(json.dumps(predictions_to_dicts(all_preds), indent=2) + "\n")
        if report_path is not None:
            report = {
                "images": report_rows,
                "total_patches": sum(r["patch_count"] for r in report_rows),
                "total_seconds": round(time.perf_counter() - t_start, 6),
            }
            Path(report_path).write_text(json.dumps(report, indent=2) + "\n")
    return all_preds
