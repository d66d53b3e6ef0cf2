import random

import pytest

from slicekit.boxes import BBox, Detection
from slicekit.coco import Annotation, Category, CocoDataset, ImageRecord
from slicekit.evaluation import EvalConfig, EvalResult, compare_runs, evaluate

from reference_eval import evaluate_ref

SMALL = (0.0, 32.0**2)
MEDIUM = (32.0**2, 96.0**2)
LARGE = (96.0**2, float("inf"))


def build(gt_rows, n_images=1, categories=(1,), size=(1000, 1000)):
    """gt_rows: (image_id, category_id, xyxy, iscrowd)."""
    images = [ImageRecord(i + 1, f"im{i}.png", size[0], size[1]) for i in range(n_images)]
    anns = []
    for i, (image_id, cat, xyxy, iscrowd) in enumerate(gt_rows):
        b = BBox(*xyxy)
        anns.append(Annotation(i + 1, image_id, cat, b, b.area(), bool(iscrowd)))
    cats = [Category(c, f"c{c}") for c in categories]
    return CocoDataset(images, anns, cats).validate()


def pred(image_id, cat, xyxy, score):
    return (image_id, Detection(category_id=cat, score=score, bbox=BBox(*xyxy)))


def test_single_perfect_match():
    gt = build([(1, 1, (10, 10, 50, 50), 0)])
    # overlapping but not exact: (10,10,50,50) vs (10,18,50,50) -> IoU 0.8
    res = evaluate(gt, [pred(1, 1, (10, 18, 50, 50), 0.9)])
    assert res.ap50 == 1.0


def test_no_predictions():
    gt = build([(1, 1, (10, 10, 50, 50), 0)])
    assert evaluate(gt, []).ap50 == 0.0


def test_three_prediction_hand_example():
    gt = build([(1, 1, (0, 0, 20, 20), 0), (1, 1, (100, 100, 120, 120), 0)])
    preds = [
        pred(1, 1, (0, 0, 20, 20), 0.9),                # TP
        pred(1, 1, (400, 400, 420, 420), 0.8),          # FP, no overlap
        pred(1, 1, (100, 100, 120, 120), 0.7),          # TP
    ]
    res = evaluate(gt, preds)
    # PR points (1.0, 0.5), (0.5, 0.5), (2/3, 1.0); 101-point interpolation:
    # 51 thresholds at precision 1.0, 50 at 2/3 -> 253/303
    assert res.ap50 == pytest.approx(253 / 303, abs=1e-9)


def test_perfect_prediction_identity():
    rng = random.Random(4)
    rows = []
    for image_id in (1, 2):
        for cat in (1, 2):
            for _ in range(4):
                x0 = rng.uniform(0, 900)
                y0 = rng.uniform(0, 900)
                side = rng.choice([10, 50, 200])  # one per size bin
                rows.append((image_id, cat, (x0, y0, x0 + side, y0 + side), 0))
    gt = build(rows, n_images=2, categories=(1, 2))
    preds = [(a.image_id, Detection(a.category_id, 1.0, a.bbox)) for a in gt.annotations]
    res = evaluate(gt, preds)
    assert res.ap50 == 1.0
    assert res.ap50_small == 1.0
    assert res.ap50_medium == 1.0
    assert res.ap50_large == 1.0


def test_empty_bin_reported_absent():
    gt = build([(1, 1, (0, 0, 10, 10), 0)])  # area 100: small bin only
    res = evaluate(gt, [pred(1, 1, (0, 0, 10, 10), 0.9)])
    assert res.ap50_small == 1.0
    assert res.ap50_medium is None
    assert res.ap50_large is None


def test_size_bins_half_open():
    # area exactly 32^2 belongs to medium, not small
    gt = build([(1, 1, (0, 0, 32, 32), 0)])
    res = evaluate(gt, [pred(1, 1, (0, 0, 32, 32), 0.9)])
    assert res.ap50_small is None
    assert res.ap50_medium == 1.0


def test_out_of_bin_gt_not_fn_and_its_match_not_fp():
    # one small GT (matched) and one large GT whose prediction must not
    # count as FP in the small bin
    gt = build([(1, 1, (0, 0, 10, 10), 0), (1, 1, (100, 100, 300, 300), 0)])
    preds = [
        pred(1, 1, (100, 100, 300, 300), 0.95),  # matches large GT
        pred(1, 1, (0, 0, 10, 10), 0.9),
    ]
    res = evaluate(gt, preds)
    assert res.ap50_small == 1.0
    assert res.ap50_large == 1.0


def test_iscrowd_ignored():
    gt = build([(1, 1, (0, 0, 10, 10), 1), (1, 1, (50, 50, 60, 60), 0)])
    preds = [
        pred(1, 1, (0, 0, 10, 10), 0.95),   # matches only the crowd region
        pred(1, 1, (50, 50, 60, 60), 0.9),
    ]
    res = evaluate(gt, preds)
    assert res.ap50 == 1.0  # crowd match is neither TP nor FP
    assert res.counts["pred_ignored"] == 1


def test_removing_fp_never_lowers_ap():
    gt = build([(1, 1, (0, 0, 20, 20), 0), (1, 1, (100, 100, 120, 120), 0)])
    preds = [
        pred(1, 1, (0, 0, 20, 20), 0.9),
        pred(1, 1, (400, 400, 420, 420), 0.8),
        pred(1, 1, (100, 100, 120, 120), 0.7),
    ]
    with_fp = evaluate(gt, preds).ap50
    without_fp = evaluate(gt, [preds[0], preds[2]]).ap50
    assert without_fp >= with_fp


def test_max_detections_cap_is_per_image():
    gt = build([(1, 1, (0, 0, 20, 20), 0)])
    # 3 junk predictions above the real one; cap 3 drops the lowest-scored (the TP)
    preds = [pred(1, 1, (500 + i * 30, 500, 520 + i * 30, 520), 0.9 - i * 0.01) for i in range(3)]
    preds.append(pred(1, 1, (0, 0, 20, 20), 0.5))
    capped = evaluate(gt, preds, EvalConfig(max_detections=3))
    uncapped = evaluate(gt, preds, EvalConfig(max_detections=500))
    assert capped.ap50 == 0.0
    assert uncapped.ap50 > 0.0


def test_dangling_prediction_rejected():
    gt = build([(1, 1, (0, 0, 20, 20), 0)])
    with pytest.raises(ValueError, match="image_id 9"):
        evaluate(gt, [pred(9, 1, (0, 0, 20, 20), 0.9)])


def _random_instance(rng):
    n_images = rng.randint(1, 10)
    categories = (1, 2)
    rows = []
    n_boxes = rng.randint(1, 30)
    for _ in range(n_boxes):
        x0 = rng.uniform(0, 900)
        y0 = rng.uniform(0, 900)
        rows.append(
            (
                rng.randint(1, n_images),
                rng.choice(categories),
                (x0, y0, x0 + rng.uniform(4, 120), y0 + rng.uniform(4, 120)),
                rng.random() < 0.1,
            )
        )
    gt = build(rows, n_images=n_images, categories=categories)
    scores = rng.sample(range(1, 10_000), k=rng.randint(0, 30))
    preds = []
    for s in scores:
        base = rng.choice(gt.annotations).bbox
        dx = rng.uniform(-15, 15)
        dy = rng.uniform(-15, 15)
        preds.append(
            pred(
                rng.randint(1, n_images),
                rng.choice(categories),
                (base.x_min + dx, base.y_min + dy, base.x_max + dx, base.y_max + dy),
                s / 10_000,
            )
        )
    return gt, preds


def as_ref(gt, preds):
    gt_rows = [
        (a.image_id, a.category_id, tuple(a.bbox.as_xyxy()), a.area, a.iscrowd)
        for a in gt.annotations
    ]
    pred_rows = [
        (image_id, d.category_id, tuple(d.bbox.as_xyxy()), d.score) for image_id, d in preds
    ]
    return gt_rows, pred_rows


def test_reference_equivalence_fuzz():
    rng = random.Random(2024)
    for _ in range(30):
        gt, preds = _random_instance(rng)
        res = evaluate(gt, preds)
        gt_rows, pred_rows = as_ref(gt, preds)
        ref_ap, ref_per_cat = evaluate_ref(gt_rows, pred_rows)
        assert res.ap50 == pytest.approx(ref_ap, abs=1e-6)
        for cat, ap in ref_per_cat.items():
            assert res.per_category_ap[cat] == pytest.approx(ap, abs=1e-6)
        for attr, bin_range in [
            ("ap50_small", SMALL), ("ap50_medium", MEDIUM), ("ap50_large", LARGE)
        ]:
            ref_bin, _ = evaluate_ref(gt_rows, pred_rows, area_range=bin_range)
            got = getattr(res, attr)
            if got is not None:
                assert got == pytest.approx(ref_bin, abs=1e-6)


def test_compare_runs_table():
    a = EvalResult(0.258, 0.142, 0.396, 0.451)
    b = EvalResult(0.290, 0.189, 0.415, 0.464)
    table = compare_runs([("baseline", a), ("sliced", b)])
    assert "baseline" in table and "sliced" in table
    assert "+0.0320" in table

    single = compare_runs([("only", a)])
    assert "d_ap50" not in single

    same = compare_runs([("x", a), ("y", a)])
    assert "+0.0000" in same


def test_eval_result_round_trip():
    r = EvalResult(0.5, 0.25, None, 1.0, {1: 0.5}, {"gt_total": 3})
    assert EvalResult.from_dict(r.to_dict()) == r
