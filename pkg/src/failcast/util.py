"""Shared helpers."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, tag: str) -> int:
    """Stable 64-bit sub-seed for (root seed, tag); hash-based so results do
    not depend on the order sub-seeds are requested in."""
    digest = hashlib.sha256(f"{root}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(root: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, tag))
