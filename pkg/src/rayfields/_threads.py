"""Worker-count resolution and deterministic chunked execution.

Randomness is always drawn before work is split, and chunks write disjoint
rows of preallocated outputs, so the worker count can never change a result
bit.  OBSURF_THREADS caps the pool ("0" or unset means auto).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV_VAR = "OBSURF_THREADS"


def resolve_workers() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if raw in ("", "0"):
        return min(8, os.cpu_count() or 1)
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from None
    if value < 0:
        raise ValueError(f"{THREADS_ENV_VAR} must be >= 0")
    return value


def chunked_row_map(fn, n_rows: int, min_chunk: int = 512) -> None:
    """Call ``fn(lo, hi)`` over contiguous row spans covering [0, n_rows)."""
    workers = resolve_workers()
    if workers <= 1 or n_rows <= min_chunk:
        fn(0, n_rows)
        return
    chunk = max(min_chunk, -(-n_rows // workers))
    spans = [(lo, min(lo + chunk, n_rows)) for lo in range(0, n_rows, chunk)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for _ in pool.map(lambda span: fn(*span), spans):
            pass
