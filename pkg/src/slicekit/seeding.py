"""Stable seed derivation: every random stream hangs off one root seed."""

from __future__ import annotations

import hashlib


def derive_seed(*parts) -> int:
    """Derive a 64-bit sub-seed from a root seed plus purpose labels.

    Stable across processes and Python versions (unlike hash()).
    """
    payload = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")
