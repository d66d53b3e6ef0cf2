"""Pluggable detection backends.

All backends speak the same contract: given a region of an image and a
target resize width, return detections in *resized-patch* coordinates.
The pipeline owns the conversion back to image coordinates, so backends
stay ignorant of global geometry.
"""

from __future__ import annotations

import json
import logging
import queue
import random
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Protocol

from slicekit.boxes import BBox, Detection
from slicekit.coco import CocoDataset
from slicekit.seeding import derive_seed

logger = logging.getLogger(__name__)

PROTOCOL_NAME = "slicekit-detect"
PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class DetectRequest:
    image_ref: str
    region: BBox
    target_width: int
    request_id: int = 0
    image_id: int | None = None

    def __post_init__(self):
        if self.target_width < 1:
            raise ValueError("target_width must be >= 1")

    @property
    def resize_scale(self) -> float:
        return self.target_width / self.region.width

    @property
    def resized_w(self) -> float:
        return float(self.target_width)

    @property
    def resized_h(self) -> float:
        return self.region.height * self.resize_scale


class DetectorIface(Protocol):
    def detect(self, request: DetectRequest) -> list[Detection]: ...


class DetectorError(RuntimeError):
    """Backend failure (protocol breakage, missing data under strict mode)."""


@dataclass(frozen=True)
class VisibilityModel:
    """Apparent-size visibility for the ground-truth oracle.

    An object is detectable iff the min side of its (clipped) box, after
    the region resize, is at least `min_apparent_px`. Confidence grows
    linearly with apparent size and saturates at `score_saturation_px`.
    """

    min_apparent_px: float = 32.0
    score_saturation_px: float = 64.0
    score_floor: float = 0.05
    localization_noise_px: float = 0.0

    def __post_init__(self):
        if self.min_apparent_px < 0:
            raise ValueError("min_apparent_px must be >= 0")
        if not 0.0 <= self.score_floor <= 1.0:
            raise ValueError("score_floor outside [0, 1]")
        if self.localization_noise_px < 0:
            raise ValueError("localization_noise_px must be >= 0")

    def score(self, apparent_min_side: float) -> float:
        return min(1.0, max(self.score_floor, apparent_min_side / self.score_saturation_px))


class OracleDetector:
    """Returns ground truth filtered by the visibility model.

    GT boxes intersecting the region are clipped to it; a clipped box is
    returned iff its apparent min side (clipped size times resize scale)
    passes the visibility threshold. Jitter, when enabled, is seeded per
    (seed, image_id, region, annotation), so results are independent of
    call order.
    """

    def __init__(self, ground_truth: CocoDataset, visibility: VisibilityModel, seed: int = 0):
        self._by_image = ground_truth.annotations_by_image()
        self.visibility = visibility
        self.seed = seed

    def detect(self, request: DetectRequest) -> list[Detection]:
        if request.image_id not in self._by_image:
            raise DetectorError(f"oracle: unknown image id {request.image_id}")
        vis = self.visibility
        region = request.region
        scale = request.resize_scale
        out: list[Detection] = []
        for ann in self._by_image[request.image_id]:
            clipped = ann.bbox.intersect(region)
            if clipped is None:
                continue
            apparent = min(clipped.width, clipped.height) * scale
            if apparent < vis.min_apparent_px:
                continue
            box = clipped.translate(-region.x_min, -region.y_min).scale(scale)
            if vis.localization_noise_px > 0:
                rng = random.Random(
                    derive_seed(
                        self.seed, request.image_id,
                        region.x_min, region.y_min, region.x_max, region.y_max,
                        ann.id,
                    )
                )
                n = vis.localization_noise_px
                x0 = box.x_min + rng.uniform(-n, n)
                y0 = box.y_min + rng.uniform(-n, n)
                x1 = box.x_max + rng.uniform(-n, n)
                y1 = box.y_max + rng.uniform(-n, n)
                x0 = max(0.0, min(x0, request.resized_w))
                y0 = max(0.0, min(y0, request.resized_h))
                x1 = max(0.0, min(x1, request.resized_w))
                y1 = max(0.0, min(y1, request.resized_h))
                if x1 <= x0 or y1 <= y0:
                    continue
                box = BBox(x0, y0, x1, y1)
            out.append(Detection(category_id=ann.category_id, score=vis.score(apparent), bbox=box))
        return out


def replay_key(image_id: int, region: BBox, target_width: int) -> str:
    coords = ":".join(f"{v:g}" for v in region.as_xyxy())
    return f"{image_id}:{coords}:{target_width}"


class ReplayDetector:
    """Pure lookup of previously recorded per-region predictions."""

    def __init__(self, store: dict[str, list[dict]], strict: bool = False):
        self.store = store
        self.strict = strict

    @classmethod
    def from_file(cls, path, strict: bool = False) -> "ReplayDetector":
        with open(path) as fh:
            return cls(json.load(fh), strict=strict)

    def detect(self, request: DetectRequest) -> list[Detection]:
        key = replay_key(request.image_id, request.region, request.target_width)
        if key not in self.store:
            if self.strict:
                raise DetectorError(f"replay: no predictions stored for key {key!r}")
            logger.warning("replay: no predictions stored for key %r", key)
            return []
        return [
            Detection(
                category_id=int(d["category_id"]),
                score=float(d["score"]),
                bbox=BBox(*d["bbox"]),
            )
            for d in self.store[key]
        ]


class ExternalDetector:
    """Child-process backend speaking line-delimited JSON over stdio.

    One request line, one response line; responses are matched to
    requests by id. Out-of-bounds boxes are clamped to the resized region
    with a warning; degenerate boxes after clamping are dropped.
    """

    def __init__(self, command: str, timeout: float = 300.0):
        self.command = command
        self.timeout = timeout
        self._lock = threading.Lock()
        self._proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        hello = self._next_line()
        try:
            hello = json.loads(hello)
        except json.JSONDecodeError as exc:
            raise DetectorError(f"{command}: bad handshake line: {hello!r}") from exc
        if hello.get("protocol") != PROTOCOL_NAME or hello.get("version") != PROTOCOL_VERSION:
            raise DetectorError(f"{command}: unexpected handshake {hello!r}")

    def _read_loop(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _next_line(self) -> str:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self.close()
            raise DetectorError(f"{self.command}: response timeout ({self.timeout}s)")
        if line is None:
            raise DetectorError(f"{self.command}: child closed stdout")
        return line

    def detect(self, request: DetectRequest) -> list[Detection]:
        msg = {
            "id": request.request_id,
            "image": request.image_ref,
            "region": request.region.as_xyxy(),
            "target_width": request.target_width,
        }
        with self._lock:
            try:
                self._proc.stdin.write(json.dumps(msg) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise DetectorError(f"{self.command}: child process gone") from exc
            line = self._next_line()
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DetectorError(f"{self.command}: malformed response line: {line!r}") from exc
        if resp.get("id") != request.request_id:
            raise DetectorError(
                f"{self.command}: response id {resp.get('id')} != request id {request.request_id}"
            )
        out: list[Detection] = []
        w, h = request.resized_w, request.resized_h
        for d in resp.get("detections", []):
            x0, y0, x1, y1 = d["bbox"]
            cx0, cy0 = max(0.0, min(x0, w)), max(0.0, min(y0, h))
            cx1, cy1 = max(0.0, min(x1, w)), max(0.0, min(y1, h))
            if (cx0, cy0, cx1, cy1) != (x0, y0, x1, y1):
                logger.warning(
                    "external: clamped out-of-bounds box %s to region %sx%s", d["bbox"], w, h
                )
            if cx1 <= cx0 or cy1 <= cy0:
                logger.warning("external: dropped degenerate box %s after clamping", d["bbox"])
                continue
            out.append(
                Detection(
                    category_id=int(d["category_id"]),
                    score=float(d["score"]),
                    bbox=BBox(cx0, cy0, cx1, cy1),
                )
            )
        return out

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
