import json

from slicekit.detectors import VisibilityModel
from slicekit.synthbench import SceneConfig, default_benchmark_configs, generate_scene_dataset, run_benchmark


def small_scene(**kw):
    base = dict(image_size=(1024, 1024), n_images=3, objects_per_image=(5, 10), seed=7)
    base.update(kw)
    return SceneConfig(**base)


def test_empty_scene(tmp_path):
    cfg = small_scene(n_images=1, objects_per_image=(0, 0))
    ds = generate_scene_dataset(cfg, tmp_path)
    assert len(ds.images) == 1
    assert ds.annotations == []
    assert (tmp_path / "images" / "scene_0001.png").exists()


def test_scene_determinism(tmp_path):
    cfg = small_scene()
    generate_scene_dataset(cfg, tmp_path / "a")
    generate_scene_dataset(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "annotations.json").read_bytes() == (
        tmp_path / "b" / "annotations.json"
    ).read_bytes()
    assert (tmp_path / "a" / "images" / "scene_0001.png").read_bytes() == (
        tmp_path / "b" / "images" / "scene_0001.png"
    ).read_bytes()


def test_small_objects_under_one_percent(tmp_path):
    cfg = SceneConfig(image_size=(2048, 2048), n_images=2, seed=1)
    ds = generate_scene_dataset(cfg, tmp_path)
    for a in ds.annotations:
        assert a.bbox.width / 2048 < 0.012
        assert a.bbox.height / 2048 < 0.012


def test_objects_do_not_overlap(tmp_path):
    ds = generate_scene_dataset(small_scene(), tmp_path)
    by_image = ds.annotations_by_image()
    for anns in by_image.values():
        for i, a in enumerate(anns):
            for b in anns[i + 1:]:
                assert a.bbox.intersect(b.bbox) is None


def test_run_benchmark_shape_and_determinism(tmp_path):
    scene = small_scene(n_images=2)
    configs = default_benchmark_configs(image_w=1024, patch=256, target_width=1024)
    vis = VisibilityModel(min_apparent_px=32)
    report_a = run_benchmark(scene, configs, vis, tmp_path / "a")
    run_benchmark(scene, configs, vis, tmp_path / "b")
    assert [r["label"] for r in report_a["runs"]] == ["FI", "SAHI", "SAHI+PO", "SAHI+PO+FI"]
    assert (tmp_path / "a" / "report.json").read_bytes() == (
        tmp_path / "b" / "report.json"
    ).read_bytes()
    table = (tmp_path / "a" / "table.txt").read_text()
    assert "SAHI+PO" in table


def test_single_config_table(tmp_path):
    scene = small_scene(n_images=1)
    configs = default_benchmark_configs(image_w=1024)[:1]
    report = run_benchmark(scene, configs, VisibilityModel(min_apparent_px=32), tmp_path)
    assert len(report["runs"]) == 1
    assert "d_ap50" not in (tmp_path / "table.txt").read_text()


def test_report_patch_counts(tmp_path):
    scene = small_scene(n_images=2)
    configs = [default_benchmark_configs(image_w=1024, patch=256)[2]]  # SAHI+PO
    report = run_benchmark(scene, configs, VisibilityModel(min_apparent_px=32), tmp_path)
    # 1024/256 with 25% overlap: step 192 -> offsets {0,192,...,768}; 5x5 grid? verify via grid
    from slicekit.grid import GridSpec, compute_slice_grid

    per_image = len(compute_slice_grid(1024, 1024, GridSpec(256, 256, 0.25)))
    assert report["runs"][0]["patch_count"] == 2 * per_image
