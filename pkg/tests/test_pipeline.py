import random

import pytest

from slicekit.boxes import BBox, Detection
from slicekit.coco import Annotation, Category, CocoDataset, ImageRecord
from slicekit.detectors import OracleDetector, VisibilityModel
from slicekit.grid import GridSpec, SliceRect, compute_slice_grid
from slicekit.merge import MergeConfig, nms
from slicekit.pipeline import PipelineConfig, remap_detection, run_sliced_inference


def det(x0, y0, x1, y1, score=0.9, cat=1):
    return Detection(category_id=cat, score=score, bbox=BBox(x0, y0, x1, y1))


def make_gt(boxes, w=2048, h=2048):
    anns = [
        Annotation(id=i + 1, image_id=1, category_id=1, bbox=b, area=b.area())
        for i, b in enumerate(boxes)
    ]
    return CocoDataset([ImageRecord(1, "im.png", w, h)], anns, [Category(1, "c")]).validate()


def test_remap_identity():
    s = SliceRect(rect=BBox(0, 0, 512, 512), index=0, resize_scale=1.0)
    d = det(20, 20, 40, 40)
    out = remap_detection(d, s, 512, 512)
    assert out.bbox == d.bbox
    assert out.source == 0


def test_remap_scaled_offset():
    s = SliceRect(rect=BBox(100, 200, 612, 712), index=2, resize_scale=2.0)
    out = remap_detection(det(20, 20, 40, 40), s, 2048, 2048)
    assert out.bbox.as_xyxy() == pytest.approx([110, 210, 120, 220])


def test_remap_clamps_to_image():
    s = SliceRect(rect=BBox(0, 0, 512, 512), index=0, resize_scale=1.0)
    out = remap_detection(det(500, 10, 522, 30), s, 512, 512)
    assert out.bbox.x_max == 512


def test_remap_drops_degenerate():
    s = SliceRect(rect=BBox(512, 0, 1024, 512), index=1, resize_scale=1.0)
    # entirely right of a 512-wide image after offset
    assert remap_detection(det(100, 10, 120, 30), s, 512, 512) is None


def test_remap_round_trip_fuzz():
    rng = random.Random(11)
    for _ in range(1000):
        x0 = rng.randint(0, 1500)
        y0 = rng.randint(0, 1500)
        w = rng.randint(32, 500)
        h = rng.randint(32, 500)
        scale = rng.uniform(0.25, 4.0)
        s = SliceRect(rect=BBox(x0, y0, x0 + w, y0 + h), index=0, resize_scale=scale)
        bx0 = rng.uniform(0, w - 2)
        by0 = rng.uniform(0, h - 2)
        bx1 = rng.uniform(bx0 + 0.5, w)
        by1 = rng.uniform(by0 + 0.5, h)
        original = BBox(x0 + bx0, y0 + by0, x0 + bx1, y0 + by1)
        in_patch = original.translate(-x0, -y0).scale(scale)
        out = remap_detection(det(*in_patch.as_xyxy()), s, 4096, 4096)
        assert out.bbox.as_xyxy() == pytest.approx(original.as_xyxy(), abs=1e-6)


class SingleBoxDetector:
    """Returns one fixed box in resized-patch coordinates, any region."""

    def detect(self, request):
        return [det(1, 1, 9, 9, score=0.7)]


def test_degenerate_grid_equals_plain_call():
    config = PipelineConfig(grid=GridSpec(512, 512), target_width=512)
    detector = SingleBoxDetector()
    merged = run_sliced_inference("im.png", 1, 512, 512, config, detector)
    expected = nms([det(1, 1, 9, 9, score=0.7)], config.merge)
    assert [(d.bbox, d.score) for d in merged] == [(d.bbox, d.score) for d in expected]


def test_small_object_found_by_sahi_not_fi():
    gt = make_gt([BBox(1000, 1000, 1016, 1016)])
    vis = VisibilityModel(min_apparent_px=32)
    oracle = OracleDetector(gt, vis)

    sahi = PipelineConfig(grid=GridSpec(512, 512, 0.25), target_width=1024)
    merged = run_sliced_inference("im.png", 1, 2048, 2048, sahi, oracle)
    assert len(merged) == 1
    assert merged[0].bbox.as_xyxy() == pytest.approx([1000, 1000, 1016, 1016])

    fi_only = PipelineConfig(grid=GridSpec(2048, 2048), target_width=1024)
    assert run_sliced_inference("im.png", 1, 2048, 2048, fi_only, oracle) == []


def test_order_invariance_and_parallelism():
    rng = random.Random(3)
    boxes = []
    while len(boxes) < 15:
        x = rng.randint(0, 2020)
        y = rng.randint(0, 2020)
        b = BBox(x, y, x + rng.randint(8, 24), y + rng.randint(8, 24))
        if all(b.intersect(o) is None for o in boxes):
            boxes.append(b)
    gt = make_gt(boxes)
    oracle = OracleDetector(gt, VisibilityModel(min_apparent_px=32))
    config = PipelineConfig(grid=GridSpec(256, 256, 0.25), target_width=1024)

    slices = compute_slice_grid(2048, 2048, config.grid)
    base = run_sliced_inference("im.png", 1, 2048, 2048, config, oracle, slices=slices)
    for _ in range(3):
        shuffled = slices[:]
        rng.shuffle(shuffled)
        assert run_sliced_inference("im.png", 1, 2048, 2048, config, oracle, slices=shuffled) == base
    par = PipelineConfig(grid=GridSpec(256, 256, 0.25), target_width=1024, parallelism=8)
    assert run_sliced_inference("im.png", 1, 2048, 2048, par, oracle) == base


def test_fi_adds_large_object():
    gt = make_gt([BBox(500, 500, 900, 900)])  # 400 px, never fits a 256 patch
    oracle = OracleDetector(gt, VisibilityModel(min_apparent_px=32))
    sahi = PipelineConfig(grid=GridSpec(256, 256, 0.25), target_width=1024)
    with_fi = PipelineConfig(
        grid=GridSpec(256, 256, 0.25), target_width=1024,
        full_inference=True, fi_target_width=1024,
    )
    base = run_sliced_inference("im.png", 1, 2048, 2048, sahi, oracle)
    plus = run_sliced_inference("im.png", 1, 2048, 2048, with_fi, oracle)
    exact = [d for d in plus if d.bbox.as_xyxy() == pytest.approx([500, 500, 900, 900])]
    assert exact and exact[0].source is None
    assert not any(
        d.bbox.as_xyxy() == pytest.approx([500, 500, 900, 900]) for d in base
    )


class FailingDetector:
    def __init__(self):
        self.calls = 0

    def detect(self, request):
        self.calls += 1
        if self.calls == 2:
            raise RuntimeError("boom")
        return [det(1, 1, 9, 9, score=0.7)]


def test_strict_propagates_patch_failure():
    config = PipelineConfig(grid=GridSpec(256, 256, 0.25), target_width=512)
    with pytest.raises(RuntimeError):
        run_sliced_inference("im.png", 1, 1024, 1024, config, FailingDetector(), strict=True)
    merged = run_sliced_inference("im.png", 1, 1024, 1024, config, FailingDetector(), strict=False)
    assert merged  # remaining patches still contribute
