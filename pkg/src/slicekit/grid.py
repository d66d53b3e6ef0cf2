"""Overlapping slice-grid computation and coverage diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from slicekit.boxes import BBox


@dataclass(frozen=True)
class GridSpec:
    """Patch dimensions and the fractional overlap between neighbours."""

    patch_w: int
    patch_h: int
    overlap_ratio: float = 0.25

    def __post_init__(self):
        if self.patch_w < 1 or self.patch_h < 1:
            raise ValueError("patch dimensions must be >= 1")
        if not 0.0 <= self.overlap_ratio < 1.0:
            raise ValueError(f"overlap_ratio {self.overlap_ratio} outside [0, 1)")


@dataclass(frozen=True)
class SliceRect:
    """One grid patch: its rectangle in original-image coordinates.

    `resize_scale` is the factor applied to the patch before detection;
    detection coordinates are divided by it to return to patch pixels.
    The grid generator emits 1.0, the pipeline substitutes the actual
    target-width scale.
    """

    rect: BBox
    index: int
    resize_scale: float = 1.0


def _axis_offsets(size: int, patch: int, overlap_ratio: float) -> tuple[list[int], int]:
    """Offsets along one axis plus the patch extent used on that axis.

    step = patch - ceil(patch * overlap_ratio), final offset clamped so
    the last patch ends flush with the image edge. A patch at least as
    large as the image collapses to a single full-extent slice.
    """
    if patch >= size:
        return [0], size
    step = patch - math.ceil(patch * overlap_ratio)
    step = max(step, 1)
    offsets: list[int] = []
    pos = 0
    while True:
        if pos + patch >= size:
            offsets.append(size - patch)
            break
        offsets.append(pos)
        pos += step
    # clamping can duplicate the previous offset; never slice twice
    deduped = sorted(set(offsets))
    return deduped, patch


def compute_slice_grid(image_w: int, image_h: int, spec: GridSpec) -> list[SliceRect]:
    """Row-major overlapping patch grid covering the full image."""
    if image_w < 1 or image_h < 1:
        raise ValueError("image dimensions must be >= 1")
    xs, w = _axis_offsets(image_w, spec.patch_w, spec.overlap_ratio)
    ys, h = _axis_offsets(image_h, spec.patch_h, spec.overlap_ratio)
    slices = []
    index = 0
    for y in ys:
        for x in xs:
            slices.append(SliceRect(rect=BBox(x, y, x + w, y + h), index=index))
            index += 1
    return slices


def coverage_check(image_w: int, image_h: int, slices: list[SliceRect]) -> bool:
    """True iff every pixel of the image lies inside at least one slice.

    Exact for arbitrary rectangles: coordinates are compressed into cells
    of uniform membership, so the check is equivalent to exhaustive
    per-pixel membership at any image size.
    """
    if not slices:
        raise ValueError("slices must be non-empty")
    rects = [s.rect for s in slices]
    xs = sorted({0.0, float(image_w)} | {r.x_min for r in rects} | {r.x_max for r in rects})
    ys = sorted({0.0, float(image_h)} | {r.y_min for r in rects} | {r.y_max for r in rects})
    xs = [v for v in xs if 0.0 <= v <= image_w]
    ys = [v for v in ys if 0.0 <= v <= image_h]
    xa = np.asarray(xs)
    ya = np.asarray(ys)
    covered = np.zeros((len(ys) - 1, len(xs) - 1), dtype=bool)
    for r in rects:
        ix0 = int(np.searchsorted(xa, max(r.x_min, 0.0)))
        ix1 = int(np.searchsorted(xa, min(r.x_max, image_w)))
        iy0 = int(np.searchsorted(ya, max(r.y_min, 0.0)))
        iy1 = int(np.searchsorted(ya, min(r.y_max, image_h)))
        covered[iy0:iy1, ix0:ix1] = True
    if covered.all():
        return True
    # an uncovered cell [a, b) only matters if it contains an integer
    # pixel coordinate, i.e. ceil(a) < b
    uy, ux = np.nonzero(~covered)
    for iy, ix in zip(uy.tolist(), ux.tolist()):
        has_px_x = math.ceil(xs[ix]) < xs[ix + 1]
        has_px_y = math.ceil(ys[iy]) < ys[iy + 1]
        if has_px_x and has_px_y:
            return False
    return True
