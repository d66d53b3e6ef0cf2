"""Axis-aligned box geometry and detection records.

Boxes are float xyxy with a half-open convention [x_min, x_max) x
[y_min, y_max). COCO xywh appears only at the serialization boundary
(see :mod:`slicekit.coco`).
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BBox:
    """Axis-aligned rectangle in pixel coordinates.

    Zero- or negative-area boxes are rejected at construction; callers
    that clip boxes are responsible for dropping degenerate results
    before building a BBox.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(
                f"degenerate box: ({self.x_min}, {self.y_min}, "
                f"{self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def area(self) -> float:
        return self.width * self.height

    def intersect(self, other: "BBox") -> "BBox | None":
        """Geometric intersection, or None when the boxes are disjoint."""
        x0 = max(self.x_min, other.x_min)
        y0 = max(self.y_min, other.y_min)
        x1 = min(self.x_max, other.x_max)
        y1 = min(self.y_max, other.y_max)
        if x1 <= x0 or y1 <= y0:
            return None
        return BBox(x0, y0, x1, y1)

    def translate(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def scale(self, factor: float) -> "BBox":
        return BBox(
            self.x_min * factor,
            self.y_min * factor,
            self.x_max * factor,
            self.y_max * factor,
        )

    def contains(self, other: "BBox") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and self.x_max >= other.x_max
            and self.y_max >= other.y_max
        )

    def as_xyxy(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def as_xywh(self) -> list[float]:
        return [self.x_min, self.y_min, self.width, self.height]


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two valid boxes; 0 when disjoint."""
    inter = a.intersect(b)
    if inter is None:
        return 0.0
    ia = inter.area()
    return ia / (a.area() + b.area() - ia)


# Detection.source value meaning "produced by a full-image pass (or by an
# external results file that carries no provenance)".
FULL_IMAGE = None


@dataclass(frozen=True)
class Detection:
    """One prediction: category, confidence and box.

    `source` is the patch index the detection came from, or None for a
    full-image pass. It is diagnostic only and never affects merging.
    """

    category_id: int
    score: float
    bbox: BBox
    source: int | None = FULL_IMAGE

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
