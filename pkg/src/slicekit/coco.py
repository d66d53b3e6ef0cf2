"""COCO-format dataset model and JSON (de)serialization.

Internally everything is float xyxy; COCO xywh exists only here, at the
file boundary. Box values are written with 2-decimal precision so that
repeated saves of the same dataset are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from slicekit.boxes import BBox, Detection


class CocoFormatError(ValueError):
    """Malformed, referentially broken or geometrically invalid COCO data."""


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int
    # Target resize width recorded by the dataset slicer; pixels are not
    # resized on disk, training frameworks apply it on the fly.
    resize_target_width: int | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise CocoFormatError(f"image {self.id}: non-positive dimensions")


@dataclass(frozen=True)
class Annotation:
    id: int
    image_id: int
    category_id: int
    bbox: BBox
    area: float
    iscrowd: bool = False

    def __post_init__(self):
        if self.area <= 0:
            raise CocoFormatError(f"annotation {self.id}: non-positive area")


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass
class CocoDataset:
    images: list[ImageRecord] = field(default_factory=list)
    annotations: list[Annotation] = field(default_factory=list)
    categories: list[Category] = field(default_factory=list)

    def validate(self) -> "CocoDataset":
        image_ids = {im.id for im in self.images}
        if len(image_ids) != len(self.images):
            raise CocoFormatError("duplicate image ids")
        ann_ids = {a.id for a in self.annotations}
        if len(ann_ids) != len(self.annotations):
            raise CocoFormatError("duplicate annotation ids")
        category_ids = {c.id for c in self.categories}
        for ann in self.annotations:
            if ann.image_id not in image_ids:
                raise CocoFormatError(
                    f"annotation {ann.id} references missing image_id {ann.image_id}"
                )
            if ann.category_id not in category_ids:
                raise CocoFormatError(
                    f"annotation {ann.id} references missing category_id {ann.category_id}"
                )
        return self

    def annotations_by_image(self) -> dict[int, list[Annotation]]:
        out: dict[int, list[Annotation]] = {im.id: [] for im in self.images}
        for ann in self.annotations:
            out[ann.image_id].append(ann)
        return out


def _round2(v: float) -> float:
    return round(v + 0.0, 2)


def _bbox_from_xywh(xywh, ann_id) -> BBox:
    x, y, w, h = xywh
    if w <= 0 or h <= 0:
        raise CocoFormatError(f"annotation {ann_id}: non-positive bbox size {xywh}")
    return BBox(x, y, x + w, y + h)


def load_coco(path: str | Path) -> CocoDataset:
    """Load a COCO detection JSON file into the internal model."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CocoFormatError(f"{path}: malformed JSON: {exc}") from exc

    images = [
        ImageRecord(
            id=int(im["id"]),
            file_name=str(im["file_name"]),
            width=int(im["width"]),
            height=int(im["height"]),
            resize_target_width=(
                int(im["resize_target_width"])
                if im.get("resize_target_width") is not None
                else None
            ),
        )
        for im in raw.get("images", [])
    ]
    annotations = []
    for a in raw.get("annotations", []):
        ann_id = int(a["id"])
        bbox = _bbox_from_xywh(a["bbox"], ann_id)
        annotations.append(
            Annotation(
                id=ann_id,
                image_id=int(a["image_id"]),
                category_id=int(a["category_id"]),
                bbox=bbox,
                area=float(a.get("area", bbox.area())),
                iscrowd=bool(a.get("iscrowd", 0)),
            )
        )
    categories = [
        Category(id=int(c["id"]), name=str(c["name"]))
        for c in raw.get("categories", [])
    ]
    return CocoDataset(images, annotations, categories).validate()


def dataset_to_dict(dataset: CocoDataset) -> dict:
    images = []
    for im in dataset.images:
        rec = {
            "id": im.id,
            "file_name": im.file_name,
            "width": im.width,
            "height": im.height,
        }
        if im.resize_target_width is not None:
            rec["resize_target_width"] = im.resize_target_width
        images.append(rec)
    annotations = [
        {
            "id": a.id,
            "image_id": a.image_id,
            "category_id": a.category_id,
            "bbox": [_round2(v) for v in a.bbox.as_xywh()],
            "area": _round2(a.area),
            "iscrowd": int(a.iscrowd),
        }
        for a in dataset.annotations
    ]
    categories = [{"id": c.id, "name": c.name} for c in dataset.categories]
    return {"images": images, "annotations": annotations, "categories": categories}


def save_coco(dataset: CocoDataset, path: str | Path) -> None:
    """Write the dataset as COCO detection JSON (deterministic bytes)."""
    dataset.validate()
    Path(path).write_text(json.dumps(dataset_to_dict(dataset), indent=2) + "\n")


# ---------------------------------------------------------------------------
# COCO results files (predictions)


def predictions_to_dicts(preds: list[tuple[int, Detection]]) -> list[dict]:
    return [
        {
            "image_id": image_id,
            "category_id": det.category_id,
            "bbox": [_round2(v) for v in det.bbox.as_xywh()],
            "score": round(det.score, 6),
        }
        for image_id, det in preds
    ]


def save_predictions(preds: list[tuple[int, Detection]], path: str | Path) -> None:
    Path(path).write_text(json.dumps(predictions_to_dicts(preds), indent=2) + "\n")


def load_predictions(path: str | Path) -> list[tuple[int, Detection]]:
    """Load a COCO results JSON array into (image_id, Detection) pairs."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CocoFormatError(f"{path}: malformed JSON: {exc}") from exc
    out = []
    for i, p in enumerate(raw):
        bbox = _bbox_from_xywh(p["bbox"], f"result[{i}]")
        out.append(
            (
                int(p["image_id"]),
                Detection(
                    category_id=int(p["category_id"]),
                    score=float(p["score"]),
                    bbox=bbox,
                ),
            )
        )
    return out
