"""slicekit command line: grid, slice, predict, merge, evaluate, compare, bench.

Every subcommand accepts --config <file.json>; explicit flags override
config values, which override built-in defaults. Commands that write
outputs also write a run manifest (resolved configuration, input digests,
timings, seed) next to their primary output. Exit codes: 0 success,
1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

from slicekit import __version__
from slicekit.boxes import Detection
from slicekit.coco import (
    CocoFormatError,
    load_coco,
    load_predictions,
    save_coco,
    save_predictions,
)
from slicekit.detectors import (
    DetectorError,
    ExternalDetector,
    OracleDetector,
    ReplayDetector,
    VisibilityModel,
)
from slicekit.evaluation import EvalConfig, EvalResult, compare_runs, evaluate
from slicekit.grid import GridSpec, compute_slice_grid
from slicekit.merge import MergeConfig, nms
from slicekit.pipeline import PipelineConfig, run_dataset_inference
from slicekit.slicer import SliceJobConfig, build_finetune_dataset
from slicekit.synthbench import (
    SceneConfig,
    VisibilityModel as _Vis,  # noqa: F401  (re-export convenience)
    default_benchmark_configs,
    run_benchmark,
)


class CliError(ValueError):
    """User/validation error: exits with code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(anchor: Path, command: str, resolved: dict, inputs: list, seed, t0: float):
    manifest = {
        "tool": "slicekit",
        "version": __version__,
        "command": command,
        "resolved_config": resolved,
        "input_digests": {str(p): _sha256(Path(p)) for p in inputs if Path(p).is_file()},
        "seed": seed,
        "wall_seconds": round(time.perf_counter() - t0, 6),
    }
    if anchor.is_dir():
        path = anchor / "manifest.json"
    else:
        path = anchor.with_name(anchor.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < --config file < explicit flags."""
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            file_values = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"--config {config_path}: {exc}")
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise CliError(f"--config {config_path}: unknown keys {sorted(unknown)}")
        resolved.update(file_values)
    for key, value in vars(args).items():
        if key in defaults and value is not None:
            resolved[key] = value
    return resolved


def _add_common(p: _Parser):
    p.add_argument("--config", help="JSON file with defaults for this subcommand")


# ---------------------------------------------------------------------------
# subcommands

GRID_DEFAULTS = {"width": None, "height": None, "patch": 640, "overlap": 0.25}


def cmd_grid(args) -> int:
    o = _resolve(args, GRID_DEFAULTS)
    if o["width"] is None or o["height"] is None:
        raise CliError("--width and --height are required")
    slices = compute_slice_grid(
        o["width"], o["height"], GridSpec(o["patch"], o["patch"], o["overlap"])
    )
    rects = [
        {"index": s.index, "rect": [int(v) for v in s.rect.as_xyxy()]} for s in slices
    ]
    print(json.dumps(rects, indent=2))
    return 0


SLICE_DEFAULTS = {
    "coco": None, "images": None, "out": None,
    "patch_min": 480, "patch_max": 640, "overlap": 0.25,
    "min_area_ratio": 0.1, "include_originals": False,
    "resize_min": 800, "resize_max": 1333, "seed": 0, "strict": False,
}


def cmd_slice(args) -> int:
    t0 = time.perf_counter()
    o = _resolve(args, SLICE_DEFAULTS)
    for key in ("coco", "images", "out"):
        if not o[key]:
            raise CliError(f"--{key} is required")
    config = SliceJobConfig(
        dims_range=(o["patch_min"], o["patch_max"], o["patch_min"], o["patch_max"]),
        overlap_ratio=o["overlap"],
        min_area_ratio=o["min_area_ratio"],
        include_originals=o["include_originals"],
        resize_width_range=(o["resize_min"], o["resize_max"]),
        seed=o["seed"],
    )
    dataset = load_coco(o["coco"])
    out_dir = Path(o["out"])
    result = build_finetune_dataset(dataset, o["images"], out_dir, config, strict=o["strict"])
    save_coco(result, out_dir / "annotations.json")
    print(f"wrote {len(result.images)} images, {len(result.annotations)} annotations to {out_dir}")
    _write_manifest(out_dir, "slice", o, [o["coco"]], o["seed"], t0)
    return 0


PREDICT_DEFAULTS = {
    "coco": None, "images": None, "backend": "oracle",
    "exec_cmd": None, "replay_store": None,
    "patch": 640, "overlap": 0.25, "target_width": None,
    "fi": False, "fi_target_width": 1333,
    "tm": 0.5, "td": 0.0, "class_aware": True,
    "min_apparent_px": 32.0, "score_saturation_px": 64.0,
    "score_floor": 0.05, "noise": 0.0,
    "out": None, "report": None, "seed": 0, "parallelism": 1,
    "strict": False, "timeout": 300.0,
}


def cmd_predict(args) -> int:
    t0 = time.perf_counter()
    o = _resolve(args, PREDICT_DEFAULTS)
    if not o["coco"] or not o["out"]:
        raise CliError("--coco and --out are required")
    config = PipelineConfig(
        grid=GridSpec(o["patch"], o["patch"], o["overlap"]),
        target_width=o["target_width"],
        full_inference=o["fi"],
        fi_target_width=o["fi_target_width"],
        merge=MergeConfig(t_m=o["tm"], t_d=o["td"], class_aware=o["class_aware"]),
        seed=o["seed"],
        parallelism=o["parallelism"],
    )
    dataset = load_coco(o["coco"])
    external = None
    if o["backend"] == "oracle":
        visibility = VisibilityModel(
            min_apparent_px=o["min_apparent_px"],
            score_saturation_px=o["score_saturation_px"],
            score_floor=o["score_floor"],
            localization_noise_px=o["noise"],
        )
        detector = OracleDetector(dataset, visibility, seed=o["seed"])
    elif o["backend"] == "replay":
        if not o["replay_store"]:
            raise CliError("--replay-store is required with --backend replay")
        detector = ReplayDetector.from_file(o["replay_store"], strict=o["strict"])
    elif o["backend"] == "exec":
        if not o["exec_cmd"]:
            raise CliError("--exec-cmd is required with --backend exec")
        detector = external = ExternalDetector(o["exec_cmd"], timeout=o["timeout"])
    else:
        raise CliError(f"unknown backend {o['backend']!r}")
    try:
        preds = run_dataset_inference(
            dataset, o["images"], config, detector,
            out_path=o["out"], report_path=o["report"], strict=o["strict"],
        )
    finally:
        if external is not None:
            external.close()
    print(f"wrote {len(preds)} predictions to {o['out']}")
    _write_manifest(Path(o["out"]), "predict", o, [o["coco"]], o["seed"], t0)
    return 0


MERGE_DEFAULTS = {"inputs": None, "tm": 0.5, "td": 0.0, "class_aware": True, "out": None}


def cmd_merge(args) -> int:
    t0 = time.perf_counter()
    o = _resolve(args, MERGE_DEFAULTS)
    if not o["inputs"] or not o["out"]:
        raise CliError("--in and --out are required")
    config = MergeConfig(t_m=o["tm"], t_d=o["td"], class_aware=o["class_aware"])
    by_image: dict[int, list[Detection]] = {}
    for path in o["inputs"]:
        for image_id, det in load_predictions(path):
            by_image.setdefault(image_id, []).append(det)
    merged: list[tuple[int, Detection]] = []
    for image_id in sorted(by_image):
        merged.extend((image_id, d) for d in nms(by_image[image_id], config))
    save_predictions(merged, o["out"])
    print(f"wrote {len(merged)} merged predictions to {o['out']}")
    _write_manifest(Path(o["out"]), "merge", o, o["inputs"], None, t0)
    return 0


EVALUATE_DEFAULTS = {
    "gt": None, "preds": None, "iou": 0.5, "max_dets": 500,
    "label": None, "out": None,
}


def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    o = _resolve(args, EVALUATE_DEFAULTS)
    if not o["gt"] or not o["preds"]:
        raise CliError("--gt and --preds are required")
    gt = load_coco(o["gt"])
    preds = load_predictions(o["preds"])
    result = evaluate(gt, preds, EvalConfig(iou_threshold=o["iou"], max_detections=o["max_dets"]))
    payload = {"label": o["label"] or Path(o["preds"]).stem, **result.to_dict()}
    print(json.dumps(payload, indent=2))
    if o["out"]:
        Path(o["out"]).write_text(json.dumps(payload, indent=2) + "\n")
        _write_manifest(Path(o["out"]), "evaluate", o, [o["gt"], o["preds"]], None, t0)
    return 0


def cmd_compare(args) -> int:
    if not args.runs:
        raise CliError("--runs requires at least one result file")
    rows = []
    for path in args.runs:
        payload = json.loads(Path(path).read_text())
        rows.append((payload.get("label", Path(path).stem), EvalResult.from_dict(payload)))
    sys.stdout.write(compare_runs(rows))
    return 0


BENCH_DEFAULTS = {
    "scene": "default", "out": None, "seed": 7, "configs": None,
    "n_images": 100, "image_size": 2048, "large_object_fraction": 0.0,
    "min_apparent_px": 32.0, "noise": 0.0,
}


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    o = _resolve(args, BENCH_DEFAULTS)
    if not o["out"]:
        raise CliError("--out is required")
    if o["scene"] != "default":
        raise CliError(f"unknown scene {o['scene']!r}")
    scene = SceneConfig(
        image_size=(o["image_size"], o["image_size"]),
        n_images=o["n_images"],
        large_object_fraction=o["large_object_fraction"],
        seed=o["seed"],
    )
    if o["configs"]:
        raw = json.loads(Path(o["configs"]).read_text())
        configs = []
        for entry in raw:
            configs.append(
                (
                    entry["label"],
                    PipelineConfig(
                        grid=GridSpec(
                            entry.get("patch", 256),
                            entry.get("patch", 256),
                            entry.get("overlap", 0.25),
                        ),
                        target_width=entry.get("target_width", 1024),
                        full_inference=entry.get("fi", False),
                        fi_target_width=entry.get("fi_target_width", 1024),
                        merge=MergeConfig(
                            t_m=entry.get("tm", 0.5),
                            t_d=entry.get("td", 0.0),
                            class_aware=entry.get("class_aware", True),
                        ),
                    ),
                )
            )
    else:
        configs = default_benchmark_configs(image_w=o["image_size"])
    visibility = VisibilityModel(
        min_apparent_px=o["min_apparent_px"], localization_noise_px=o["noise"]
    )
    out_dir = Path(o["out"])
    run_benchmark(scene, configs, visibility, out_dir)
    sys.stdout.write((out_dir / "table.txt").read_text())
    _write_manifest(out_dir, "bench", {**o, "visibility": asdict(visibility)}, [], o["seed"], t0)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="slicekit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"slicekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid", help="print the slice grid for an image size")
    _add_common(p)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--patch", type=int, help="patch size in px (default 640)")
    p.add_argument("--overlap", type=float, help="overlap ratio (default 0.25)")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("slice", help="build a slicing-augmented fine-tuning dataset")
    _add_common(p)
    p.add_argument("--coco")
    p.add_argument("--images")
    p.add_argument("--out")
    p.add_argument("--patch-min", dest="patch_min", type=int)
    p.add_argument("--patch-max", dest="patch_max", type=int)
    p.add_argument("--overlap", type=float)
    p.add_argument("--min-area-ratio", dest="min_area_ratio", type=float)
    p.add_argument("--include-originals", dest="include_originals", action="store_true", default=None)
    p.add_argument("--resize-min", dest="resize_min", type=int)
    p.add_argument("--resize-max", dest="resize_max", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--strict", action="store_true", default=None)
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("predict", help="sliced inference over a dataset")
    _add_common(p)
    p.add_argument("--coco")
    p.add_argument("--images")
    p.add_argument("--backend", choices=["oracle", "replay", "exec"])
    p.add_argument("--exec-cmd", dest="exec_cmd")
    p.add_argument("--replay-store", dest="replay_store")
    p.add_argument("--patch", type=int, help="patch size in px (default 640)")
    p.add_argument("--overlap", type=float, help="overlap ratio (default 0.25)")
    p.add_argument("--target-width", dest="target_width", type=int)
    p.add_argument("--fi", action="store_true", default=None, help="add a full-image pass")
    p.add_argument("--fi-target-width", dest="fi_target_width", type=int)
    p.add_argument("--tm", type=float, help="NMS matching IoU threshold (default 0.5)")
    p.add_argument("--td", type=float, help="minimum detection score (default 0.0)")
    p.add_argument("--class-aware", dest="class_aware", action="store_true", default=None)
    p.add_argument("--no-class-aware", dest="class_aware", action="store_false", default=None)
    p.add_argument("--min-apparent-px", dest="min_apparent_px", type=float)
    p.add_argument("--score-saturation-px", dest="score_saturation_px", type=float)
    p.add_argument("--score-floor", dest="score_floor", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--out")
    p.add_argument("--report")
    p.add_argument("--seed", type=int)
    p.add_argument("--parallelism", type=int)
    p.add_argument("--strict", action="store_true", default=None)
    p.add_argument("--timeout", type=float)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("merge", help="NMS-merge COCO results files")
    _add_common(p)
    p.add_argument("--in", dest="inputs", nargs="+")
    p.add_argument("--tm", type=float)
    p.add_argument("--td", type=float)
    p.add_argument("--class-aware", dest="class_aware", action="store_true", default=None)
    p.add_argument("--no-class-aware", dest="class_aware", action="store_false", default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("evaluate", help="COCO-protocol AP50 evaluation")
    _add_common(p)
    p.add_argument("--gt")
    p.add_argument("--preds")
    p.add_argument("--iou", type=float)
    p.add_argument("--max-dets", dest="max_dets", type=int)
    p.add_argument("--label")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="tabulate evaluation results side by side")
    p.add_argument("--runs", nargs="+", required=False)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="synthetic FI/SAHI comparison benchmark")
    _add_common(p)
    p.add_argument("--scene")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--configs", help="JSON list of pipeline configs to run")
    p.add_argument("--n-images", dest="n_images", type=int)
    p.add_argument("--image-size", dest="image_size", type=int)
    p.add_argument("--large-object-fraction", dest="large_object_fraction", type=float)
    p.add_argument("--min-apparent-px", dest="min_apparent_px", type=float)
    p.add_argument("--noise", type=float)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return int(exc.code or 0)
        return args.func(args)
    except (CliError, ValueError, CocoFormatError) as exc:
        print(f"slicekit: error: {exc}", file=sys.stderr)
        return 1
    except (DetectorError, OSError) as exc:
        print(f"slicekit: runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
