"""Seeding and reproducibility plumbing.

Training randomness (batch choice, crops, flips) is derived functionally
from (seed, step) so interrupted runs resume bit-identically. The
PRIORLENS_DETERMINISTIC environment variable forces deterministic mode
globally regardless of per-run configuration.
"""

from __future__ import annotations

import hashlib
import os
import random

import torch

ENV_FLAG = "PRIORLENS_DETERMINISTIC"


def env_forces_deterministic() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


def resolve_deterministic(flag: bool) -> bool:
    return True if env_forces_deterministic() else bool(flag)


def apply_determinism(seed: int, deterministic: bool = True) -> None:
    random.seed(seed)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True)


def stable_seed(*parts) -> int:
    """Deterministic 63-bit seed from arbitrary hashable parts."""
    digest = hashlib.sha256("/".join(repr(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)
