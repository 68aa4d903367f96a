"""Labelled sub-seeding: every random consumer gets its own stream from one master seed."""

from __future__ import annotations

import hashlib
import random


def derive_seed(seed: int, *labels: object) -> int:
    """Stable 64-bit seed for the stream identified by ``labels`` under ``seed``."""
    key = "/".join([str(int(seed))] + [str(label) for label in labels])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")


def stream(seed: int, *labels: object) -> random.Random:
    return random.Random(derive_seed(seed, *labels))
