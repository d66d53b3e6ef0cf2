"""AP50 evaluation following the MS COCO protocol.

Single IoU threshold (0.5 by default), per-image detection cap, greedy
highest-IoU matching, 101-point interpolated AP averaged over categories,
and the standard small/medium/large area breakdown. Ground truth outside
a size bin is ignored for that bin (not counted as a false negative), and
predictions matching only ignored GT are neither TP nor FP. `iscrowd`
ground truth is always ignored in matching.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from slicekit.boxes import Detection, iou
from slicekit.coco import Annotation, CocoDataset

SIZE_BINS: dict[str, tuple[float, float]] = {
    "small": (0.0, 32.0**2),
    "medium": (32.0**2, 96.0**2),
    "large": (96.0**2, float("inf")),
}


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    max_detections: int = 500

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold outside (0, 1]")
        if self.max_detections < 1:
            raise ValueError("max_detections must be >= 1")


@dataclass
class EvalResult:
    ap50: float
    # None when the corresponding size bin holds no ground truth at all
    ap50_small: float | None
    ap50_medium: float | None
    ap50_large: float | None
    per_category_ap: dict[int, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ap50": self.ap50,
            "ap50_small": self.ap50_small,
            "ap50_medium": self.ap50_medium,
            "ap50_large": self.ap50_large,
            "per_category_ap": {str(k): v for k, v in self.per_category_ap.items()},
            "counts": self.counts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalResult":
        return cls(
            ap50=d["ap50"],
            ap50_small=d["ap50_small"],
            ap50_medium=d["ap50_medium"],
            ap50_large=d["ap50_large"],
            per_category_ap={int(k): v for k, v in d.get("per_category_ap", {}).items()},
            counts=dict(d.get("counts", {})),
        )


def _gt_area(ann: Annotation) -> float:
    return ann.area if ann.area > 0 else ann.bbox.area()


def _cap_per_image(
    preds: list[tuple[int, Detection]], max_detections: int
) -> dict[int, list[Detection]]:
    by_image: dict[int, list[Detection]] = {}
    for image_id, det in preds:
        by_image.setdefault(image_id, []).append(det)
    for image_id, dets in by_image.items():
        dets.sort(key=lambda d: (-d.score, d.bbox.x_min, d.bbox.y_min, d.category_id))
        by_image[image_id] = dets[:max_detections]
    return by_image


def _match_category(
    gts_by_image: dict[int, list[Annotation]],
    dets_by_image: dict[int, list[Detection]],
    category_id: int,
    iou_threshold: float,
    area_range: tuple[float, float] | None,
) -> tuple[list[tuple[float, int, int, str]], int, int]:
    """Greedy per-image matching for one category.

    Returns (records, n_evaluable_gt, n_matched_gt) where each record is
    (score, image_id, order, kind) and kind is "tp", "fp" or "ignored".
    """
    records: list[tuple[float, int, int, str]] = []
    n_gt = 0
    n_matched = 0
    image_ids = set(gts_by_image) | set(dets_by_image)
    for image_id in sorted(image_ids):
        gts = [g for g in gts_by_image.get(image_id, []) if g.category_id == category_id]
        evaluable, ignored = [], []
        for g in gts:
            # size bins are half-open: [lo, hi)
            is_ignored = g.iscrowd or (
                area_range is not None
                and not (area_range[0] <= _gt_area(g) < area_range[1])
            )
            (ignored if is_ignored else evaluable).append(g)
        n_gt += len(evaluable)
        dets = [d for d in dets_by_image.get(image_id, []) if d.category_id == category_id]
        dets.sort(key=lambda d: (-d.score, d.bbox.x_min, d.bbox.y_min))
        taken = [False] * len(evaluable)
        for order, det in enumerate(dets):
            best_iou, best_j = iou_threshold, -1
            for j, g in enumerate(evaluable):
                if taken[j]:
                    continue
                v = iou(det.bbox, g.bbox)
                if v >= best_iou and (best_j == -1 or v > best_iou):
                    best_iou, best_j = v, j
            if best_j >= 0:
                taken[best_j] = True
                n_matched += 1
                records.append((det.score, image_id, order, "tp"))
            elif any(iou(det.bbox, g.bbox) >= iou_threshold for g in ignored):
                records.append((det.score, image_id, order, "ignored"))
            else:
                records.append((det.score, image_id, order, "fp"))
    return records, n_gt, n_matched


def _average_precision(records: list[tuple[float, int, int, str]], n_gt: int) -> float:
    """101-point interpolated AP from per-detection match records."""
    if n_gt == 0:
        return 0.0
    records = sorted(records, key=lambda r: (-r[0], r[1], r[2]))
    recalls: list[float] = []
    precisions: list[float] = []
    tp = fp = 0
    for score, _img, _order, kind in records:
        if kind == "ignored":
            continue
        if kind == "tp":
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    if not recalls:
        return 0.0
    # precision envelope: max precision achievable at recall >= r
    envelope = precisions[:]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    total = 0.0
    for k in range(101):
        r = k / 100.0
        i = bisect.bisect_left(recalls, r)
        total += envelope[i] if i < len(recalls) else 0.0
    return total / 101.0


def evaluate(
    gt: CocoDataset,
    predictions: list[tuple[int, Detection]],
    config: EvalConfig | None = None,
) -> EvalResult:
    """COCO-protocol AP50 with size-wise breakdown."""
    config = config or EvalConfig()
    gt.validate()
    image_ids = {im.id for im in gt.images}
    category_ids = sorted(c.id for c in gt.categories)
    cat_id_set = set(category_ids)
    for image_id, det in predictions:
        if image_id not in image_ids:
            raise ValueError(f"prediction references missing image_id {image_id}")
        if det.category_id not in cat_id_set:
            raise ValueError(f"prediction references missing category_id {det.category_id}")

    gts_by_image = gt.annotations_by_image()
    dets_by_image = _cap_per_image(predictions, config.max_detections)

    per_category_ap: dict[int, float] = {}
    counts = {
        "gt_total": 0,
        "gt_matched": 0,
        "pred_total": sum(len(v) for v in dets_by_image.values()),
        "pred_matched": 0,
        "pred_unmatched": 0,
        "pred_ignored": 0,
    }
    bin_aps: dict[str, list[float]] = {name: [] for name in SIZE_BINS}

    for cat in category_ids:
        records, n_gt, n_matched = _match_category(
            gts_by_image, dets_by_image, cat, config.iou_threshold, None
        )
        counts["gt_total"] += n_gt
        counts["gt_matched"] += n_matched
        counts["pred_matched"] += sum(1 for r in records if r[3] == "tp")
        counts["pred_unmatched"] += sum(1 for r in records if r[3] == "fp")
        counts["pred_ignored"] += sum(1 for r in records if r[3] == "ignored")
        if n_gt > 0:
            per_category_ap[cat] = _average_precision(records, n_gt)
        for name, area_range in SIZE_BINS.items():
            b_records, b_n_gt, _ = _match_category(
                gts_by_image, dets_by_image, cat, config.iou_threshold, area_range
            )
            if b_n_gt > 0:
                bin_aps[name].append(_average_precision(b_records, b_n_gt))

    ap50 = (
        sum(per_category_ap.values()) / len(per_category_ap) if per_category_ap else 0.0
    )

    def bin_mean(name: str) -> float | None:
        vals = bin_aps[name]
        return sum(vals) / len(vals) if vals else None

    return EvalResult(
        ap50=ap50,
        ap50_small=bin_mean("small"),
        ap50_medium=bin_mean("medium"),
        ap50_large=bin_mean("large"),
        per_category_ap=per_category_ap,
        counts=counts,
    )


def compare_runs(results: list[tuple[str, EvalResult]]) -> str:
    """Aligned text table of AP50/s/m/l per labeled run, with deltas
    against the first (baseline) row."""
    if not results:
        raise ValueError("no results to compare")

    def fmt(v: float | None) -> str:
        return "-" if v is None else f"{v:.4f}"

    def fmt_delta(v: float | None, base: float | None) -> str:
        if v is None or base is None:
            return "-"
        return f"{v - base:+.4f}"

    headers = ["label", "ap50", "ap50_s", "ap50_m", "ap50_l"]
    with_delta = len(results) > 1
    if with_delta:
        headers.append("d_ap50")
    base = results[0][1]
    rows = [headers]
    for label, res in results:
        row = [label, fmt(res.ap50), fmt(res.ap50_small), fmt(res.ap50_medium), fmt(res.ap50_large)]
        if with_delta:
            row.append(fmt_delta(res.ap50, base.ap50))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
