"""Fine-tuning dataset generation: patch extraction with clipped labels.

Each source image is sliced into an overlapping grid with per-image
random patch dimensions; annotations are intersected with each patch and
kept when enough of their area survives. Original images can be carried
over so large objects stay represented.
"""

from __future__ import annotations

import logging
import random
import shutil
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from slicekit.boxes import BBox
from slicekit.coco import Annotation, CocoDataset, ImageRecord
from slicekit.grid import GridSpec, SliceRect, compute_slice_grid
from slicekit.seeding import derive_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SliceJobConfig:
    # (M_min, M_max, N_min, N_max): patch width/height sampling ranges
    dims_range: tuple[int, int, int, int] = (480, 640, 480, 640)
    overlap_ratio: float = 0.25
    # keep a clipped annotation iff clipped_area / original_area >= this
    min_area_ratio: float = 0.1
    include_originals: bool = True
    resize_width_range: tuple[int, int] = (800, 1333)
    seed: int = 0

    def __post_init__(self):
        m0, m1, n0, n1 = self.dims_range
        if m0 > m1 or n0 > n1 or m0 < 1 or n0 < 1:
            raise ValueError(f"invalid dims_range {self.dims_range}")
        if not 0.0 <= self.min_area_ratio <= 1.0:
            raise ValueError("min_area_ratio outside [0, 1]")
        if self.resize_width_range[0] > self.resize_width_range[1]:
            raise ValueError("invalid resize_width_range")


def sample_patch_dims(rng: random.Random, dims_range: tuple[int, int, int, int]) -> tuple[int, int]:
    """Uniform (M, N) from the configured ranges, advancing `rng`."""
    m0, m1, n0, n1 = dims_range
    return rng.randint(m0, m1), rng.randint(n0, n1)


def clip_annotations(
    annotations: list[Annotation],
    slice_rect: SliceRect,
    min_area_ratio: float,
    next_id: int = 1,
) -> list[Annotation]:
    """Intersect annotations with a patch, shifting to patch-local origin.

    Retention: clipped_area / original_area >= min_area_ratio. New ids
    are assigned sequentially from `next_id`.
    """
    rect = slice_rect.rect
    out: list[Annotation] = []
    for ann in annotations:
        clipped = ann.bbox.intersect(rect)
        if clipped is None:
            continue
        ratio = clipped.area() / ann.bbox.area()
        if ratio < min_area_ratio:
            continue
        local = clipped.translate(-rect.x_min, -rect.y_min)
        out.append(
            Annotation(
                id=next_id,
                image_id=ann.image_id,
                category_id=ann.category_id,
                bbox=local,
                area=local.area(),
                iscrowd=ann.iscrowd,
            )
        )
        next_id += 1
    return out


def build_finetune_dataset(
    dataset: CocoDataset,
    image_root: str | Path,
    out_dir: str | Path,
    config: SliceJobConfig,
    strict: bool = True,
) -> CocoDataset:
    """Produce the augmented dataset: patch images plus clipped labels.

    Patch files are written as PNG (lossless, encoder-stable) under
    `<out_dir>/images/` with names `{stem}_{x}_{y}_{w}_{h}.png`; originals
    are copied verbatim when configured. A per-image resize target width,
    sampled from `resize_width_range`, is recorded on each output record;
    pixels are not resized. The COCO JSON is written to
    `<out_dir>/annotations.json`.
    """
    image_root = Path(image_root)
    out_dir = Path(out_dir)
    images_out = out_dir / "images"
    images_out.mkdir(parents=True, exist_ok=True)

    anns_by_image = dataset.annotations_by_image()
    out_images: list[ImageRecord] = []
    out_anns: list[Annotation] = []
    next_image_id = 1
    next_ann_id = 1

    for im in sorted(dataset.images, key=lambda r: r.id):
        src = image_root / im.file_name
        try:
            pixels = Image.open(src)
            pixels.load()
        except (OSError, FileNotFoundError) as exc:
            if strict:
                raise OSError(f"cannot read image {src}") from exc
            logger.warning("skipping unreadable image %s: %s", src, exc)
            continue

        rng = random.Random(derive_seed(config.seed, "dims", im.id))
        patch_w, patch_h = sample_patch_dims(rng, config.dims_range)
        grid = compute_slice_grid(im.width, im.height, GridSpec(patch_w, patch_h, config.overlap_ratio))

        for s in grid:
            r = s.rect
            x, y = int(r.x_min), int(r.y_min)
            w, h = int(r.width), int(r.height)
            name = f"{Path(im.file_name).stem}_{x}_{y}_{w}_{h}.png"
            pixels.crop((x, y, x + w, y + h)).save(images_out / name)
            resize_rng = random.Random(derive_seed(config.seed, "resize", im.id, s.index))
            record = ImageRecord(
                id=next_image_id,
                file_name=f"images/{name}",
                width=w,
                height=h,
                resize_target_width=resize_rng.randint(*config.resize_width_range),
            )
            clipped = clip_annotations(anns_by_image[im.id], s, config.min_area_ratio, next_ann_id)
            clipped = [
                Annotation(a.id, record.id, a.category_id, a.bbox, a.area, a.iscrowd)
                for a in clipped
            ]
            next_ann_id += len(clipped)
            out_images.append(record)
            out_anns.extend(clipped)
            next_image_id += 1

        if config.include_originals:
            dest = images_out / Path(im.file_name).name
            if src.resolve() != dest.resolve():
                shutil.copyfile(src, dest)
            resize_rng = random.Random(derive_seed(config.seed, "resize-original", im.id))
            record = ImageRecord(
                id=next_image_id,
                file_name=f"images/{Path(im.file_name).name}",
                width=im.width,
                height=im.height,
                resize_target_width=resize_rng.randint(*config.resize_width_range),
            )
            for a in anns_by_image[im.id]:
                out_anns.append(
                    Annotation(next_ann_id, record.id, a.category_id, a.bbox, a.area, a.iscrowd)
                )
                next_ann_id += 1
            out_images.append(record)
            next_image_id += 1

    return CocoDataset(out_images, out_anns, list(dataset.categories)).validate()
