"""Trivial stdio detector used to exercise the external-backend protocol.

Emits the handshake, then answers every request with one deterministic
in-bounds box. With --oob it also returns a box exceeding the resized
region by 2 px, which the parent must clamp. Run as:

    python -m slicekit.echo_detector [--oob] [--empty]
"""

from __future__ import annotations

import argparse
import json
import sys


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="echo-detector")
    parser.add_argument("--oob", action="store_true", help="also emit an out-of-bounds box")
    parser.add_argument("--empty", action="store_true", help="return no detections")
    args = parser.parse_args(argv)

    _emit({"protocol": "slicekit-detect", "version": 1})
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        x0, y0, x1, y1 = req["region"]
        scale = req["target_width"] / (x1 - x0)
        w = float(req["target_width"])
        h = (y1 - y0) * scale
        detections = []
        if not args.empty:
            detections.append(
                {"bbox": [0.0, 0.0, min(10.0, w), min(10.0, h)], "score": 0.5, "category_id": 1}
            )
            if args.oob:
                detections.append(
                    {"bbox": [-2.0, -2.0, w + 2.0, h + 2.0], "score": 0.4, "category_id": 1}
                )
        _emit({"id": req["id"], "detections": detections})
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
