"""Synthetic small-object scenes and the FI/SAHI comparison benchmark.

Objects are solid colored rectangles: the oracle detector reads ground
truth, so pixel realism buys nothing; pixels exist so file-based backends
can be exercised end to end. A configurable fraction of objects is placed
straddling patch seams to stress the overlap machinery.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from slicekit.boxes import BBox
from slicekit.coco import Annotation, Category, CocoDataset, ImageRecord, save_coco
from slicekit.detectors import OracleDetector, VisibilityModel
from slicekit.evaluation import EvalConfig, EvalResult, compare_runs, evaluate
from slicekit.grid import GridSpec, compute_slice_grid
from slicekit.merge import MergeConfig
from slicekit.pipeline import PipelineConfig, run_sliced_inference
from slicekit.seeding import derive_seed

_PALETTE = [(220, 60, 40), (60, 200, 80), (70, 110, 230)]
_BACKGROUND = (24, 24, 24)


@dataclass(frozen=True)
class SceneConfig:
    image_size: tuple[int, int] = (2048, 2048)
    n_images: int = 100
    objects_per_image: tuple[int, int] = (10, 25)
    small_size_range: tuple[int, int] = (8, 24)
    large_size_range: tuple[int, int] = (200, 400)
    large_object_fraction: float = 0.0
    # fraction of small objects centered on a seam of the no-overlap grid
    straddle_fraction: float = 0.25
    seam_stride: int = 256
    seed: int = 7

    def __post_init__(self):
        w, h = self.image_size
        if self.large_object_fraction and (
            self.large_size_range[1] >= w or self.large_size_range[1] >= h
        ):
            raise ValueError("object sizes must be smaller than the image")
        if not 0.0 <= self.large_object_fraction <= 1.0:
            raise ValueError("large_object_fraction outside [0, 1]")
        if not 0.0 <= self.straddle_fraction <= 1.0:
            raise ValueError("straddle_fraction outside [0, 1]")


def _overlaps_any(box: BBox, placed: list[BBox]) -> bool:
    return any(box.intersect(p) is not None for p in placed)


def _place_objects(cfg: SceneConfig, rng: random.Random) -> list[tuple[BBox, int]]:
    w, h = cfg.image_size
    n_objects = rng.randint(*cfg.objects_per_image)
    placed: list[BBox] = []
    out: list[tuple[BBox, int]] = []
    seams = list(range(cfg.seam_stride, max(w, h), cfg.seam_stride))
    for _ in range(n_objects):
        is_large = rng.random() < cfg.large_object_fraction
        size_range = cfg.large_size_range if is_large else cfg.small_size_range
        for _attempt in range(50):
            ow = rng.randint(*size_range)
            oh = rng.randint(*size_range)
            if not is_large and rng.random() < cfg.straddle_fraction and seams:
                # center the object on a patch seam of the no-overlap grid
                if rng.random() < 0.5:
                    seam = rng.choice([s for s in seams if s < w])
                    x0 = min(max(seam - ow // 2, 0), w - ow)
                    y0 = rng.randint(0, h - oh)
                else:
                    seam = rng.choice([s for s in seams if s < h])
                    y0 = min(max(seam - oh // 2, 0), h - oh)
                    x0 = rng.randint(0, w - ow)
            else:
                x0 = rng.randint(0, w - ow)
                y0 = rng.randint(0, h - oh)
            box = BBox(x0, y0, x0 + ow, y0 + oh)
            if not _overlaps_any(box, placed):
                placed.append(box)
                out.append((box, rng.randrange(len(_PALETTE)) + 1))
                break
        # bounded retries exhausted: emit fewer objects for this image
    return out


def generate_scene_dataset(config: SceneConfig, out_dir: str | Path) -> CocoDataset:
    """Render the scene images and write exact COCO annotations.

    Fully determined by the seed: two runs produce byte-identical
    `annotations.json` and PNGs.
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    w, h = config.image_size

    images: list[ImageRecord] = []
    annotations: list[Annotation] = []
    next_ann_id = 1
    for i in range(config.n_images):
        image_id = i + 1
        rng = random.Random(derive_seed(config.seed, "scene", image_id))
        objects = _place_objects(config, rng)
        canvas = np.empty((h, w, 3), dtype=np.uint8)
        canvas[:] = _BACKGROUND
        for box, category_id in objects:
            x0, y0, x1, y1 = (int(v) for v in box.as_xyxy())
            canvas[y0:y1, x0:x1] = _PALETTE[category_id - 1]
            annotations.append(
                Annotation(
                    id=next_ann_id,
                    image_id=image_id,
                    category_id=category_id,
                    bbox=box,
                    area=box.area(),
                )
            )
            next_ann_id += 1
        name = f"scene_{image_id:04d}.png"
        Image.fromarray(canvas).save(images_dir / name)
        images.append(ImageRecord(id=image_id, file_name=f"images/{name}", width=w, height=h))

    categories = [Category(i + 1, f"block-{i + 1}") for i in range(len(_PALETTE))]
    dataset = CocoDataset(images, annotations, categories).validate()
    save_coco(dataset, out_dir / "annotations.json")
    return dataset


def default_benchmark_configs(
    image_w: int = 2048,
    patch: int = 256,
    target_width: int = 1024,
) -> list[tuple[str, PipelineConfig]]:
    """The FI / SAHI ablation matrix run by the default benchmark."""
    merge = MergeConfig(t_m=0.5, t_d=0.0, class_aware=True)

    def cfg(patch_size, overlap, fi):
        return PipelineConfig(
            grid=GridSpec(patch_size, patch_size, overlap),
            target_width=target_width,
            full_inference=fi,
            fi_target_width=target_width,
            merge=merge,
        )

    return [
        ("FI", cfg(image_w, 0.0, False)),
        ("SAHI", cfg(patch, 0.0, False)),
        ("SAHI+PO", cfg(patch, 0.25, False)),
        ("SAHI+PO+FI", cfg(patch, 0.25, True)),
    ]


def run_benchmark(
    scene: SceneConfig,
    configs: list[tuple[str, PipelineConfig]],
    visibility: VisibilityModel,
    out_dir: str | Path,
    eval_config: EvalConfig | None = None,
) -> dict:
    """Generate the scene once, run every configuration, compare.

    Writes `report.json` (deterministic), `table.txt` and `timings.json`
    (wall-clock, excluded from the determinism contract) under `out_dir`.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = generate_scene_dataset(scene, out_dir / "dataset")
    detector = OracleDetector(dataset, visibility, seed=scene.seed)

    results: list[tuple[str, EvalResult]] = []
    runs = []
    timings = {}
    for label, config in configs:
        t0 = time.perf_counter()
        preds = []
        patch_count = 0
        for im in dataset.images:
            patch_count += len(compute_slice_grid(im.width, im.height, config.grid))
            dets = run_sliced_inference(
                im.file_name, im.id, im.width, im.height, config, detector
            )
            preds.extend((im.id, d) for d in dets)
        result = evaluate(dataset, preds, eval_config)
        results.append((label, result))
        runs.append(
            {
                "label": label,
                "patch_count": patch_count,
                "predictions": len(preds),
                "metrics": result.to_dict(),
            }
        )
        timings[label] = round(time.perf_counter() - t0, 6)

    table = compare_runs(results)
    report = {
        "scene": {
            "image_size": list(scene.image_size),
            "n_images": scene.n_images,
            "seed": scene.seed,
        },
        "runs": runs,
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    (out_dir / "table.txt").write_text(table)
    (out_dir / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    return report
