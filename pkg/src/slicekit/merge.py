"""Greedy NMS merging of patch and full-image detections."""

from __future__ import annotations

from dataclasses import dataclass

from slicekit.boxes import Detection, iou


@dataclass(frozen=True)
class MergeConfig:
    """NMS matching threshold, score floor and class-awareness.

    A pair with IoU exactly equal to t_m is NOT suppressed (strict
    inequality), except for exact duplicates (IoU == 1), which are always
    suppressed so t_m = 1 still removes copies.
    """

    t_m: float = 0.5
    t_d: float = 0.0
    class_aware: bool = True

    def __post_init__(self):
        if not 0.0 < self.t_m <= 1.0:
            raise ValueError(f"t_m {self.t_m} outside (0, 1]")
        if not 0.0 <= self.t_d <= 1.0:
            raise ValueError(f"t_d {self.t_d} outside [0, 1]")


def canonical_sort(detections: list[Detection]) -> list[Detection]:
    """Total order pinning NMS behaviour: score desc, then coordinates.

    The full box, category and source take part so that even coincident
    detections from different patches order deterministically.
    """
    return sorted(
        detections,
        key=lambda d: (
            -d.score,
            d.bbox.x_min,
            d.bbox.y_min,
            d.category_id,
            d.bbox.x_max,
            d.bbox.y_max,
            -1 if d.source is None else d.source,
        ),
    )


def nms(detections: list[Detection], config: MergeConfig) -> list[Detection]:
    """Greedy non-maximum suppression over canonically sorted detections."""
    kept: list[Detection] = []
    for det in canonical_sort(detections):
        if det.score < config.t_d:
            continue
        suppressed = False
        for k in kept:
            if config.class_aware and k.category_id != det.category_id:
                continue
            overlap = iou(det.bbox, k.bbox)
            if overlap > config.t_m or overlap == 1.0:
                suppressed = True
                break
        if not suppressed:
            kept.append(det)
    return kept


def merge_sources(
    patch_dets: list[Detection],
    fi_dets: list[Detection],
    config: MergeConfig,
) -> list[Detection]:
    """Fuse patch and full-image detections; scores alone decide priority."""
    return nms(list(patch_dets) + list(fi_dets), config)
