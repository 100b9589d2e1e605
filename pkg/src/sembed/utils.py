"""Small shared helpers."""

from __future__ import annotations

import hashlib
import json
import os


def worker_count() -> int:
    """Worker-thread cap for data generation and fold parallelism.

    Controlled by the SEMBED_THREADS environment variable; defaults to
    min(4, cpu count).
    """
    env = os.environ.get("SEMBED_THREADS")
    if env is not None:
        n = int(env)
        if n < 1:
            raise ValueError(f"SEMBED_THREADS must be >= 1, got {n}")
        return n
    return min(4, os.cpu_count() or 1)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def stable_hash(obj) -> str:
    """Deterministic short hex digest of a JSON-serializable object."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]
