"""Segmentation and reconstruction metrics."""

from __future__ import annotations

import numpy as np

__all__ = ["ari", "mse"]


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Joint label-count table; labels may be any integers."""
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    n_a = int(ai.max()) + 1
    n_b = int(bi.max()) + 1
    return np.bincount(ai * n_b + bi, minlength=n_a * n_b).reshape(n_a, n_b)


def _comb2(x) -> int:
    x = int(x)
    return x * (x - 1) // 2


def ari(pred, truth, restrict_to_fg: bool = False) -> float:
    """Adjusted Rand index between two label maps (chance-corrected pair
    agreement, invariant to label permutation).

    With ``restrict_to_fg`` only pixels where ``truth`` > 0 are scored.
    Computed in exact integer arithmetic before the final division; when the
    chance correction degenerates (both maps one cluster, or both all
    singletons) the value is 1 for identical partitions and 0 otherwise.
    """
    p = np.asarray(pred)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise ValueError(f"label maps differ in shape: {p.shape} vs {t.shape}")
    p = p.ravel()
    t = t.ravel()
    if restrict_to_fg:
        keep = t > 0
        p = p[keep]
        t = t[keep]
    n = p.shape[0]
    if n < 2:
        raise ValueError("need at least two pixels to score")

    table = _contingency(p, t)
    sum_cells = int(sum(_comb2(v) for v in table.ravel()))
    sum_rows = int(sum(_comb2(v) for v in table.sum(axis=1)))
    sum_cols = int(sum(_comb2(v) for v in table.sum(axis=0)))
    pairs = _comb2(n)

    # ari = (pairs * sum_cells - sum_rows * sum_cols) /
    #       (pairs * (sum_rows + sum_cols) / 2 - sum_rows * sum_cols)
    numerator = 2 * pairs * sum_cells - 2 * sum_rows * sum_cols
    denominator = pairs * (sum_rows + sum_cols) - 2 * sum_rows * sum_cols
    if denominator == 0:
        same = (np.count_nonzero(table, axis=1) <= 1).all() and (np.count_nonzero(table, axis=0) <= 1).all()
        return 1.0 if same else 0.0
    return numerator / denominator


def mse(a, b, mask=None) -> float:
    """Mean squared error over (optionally masked) pixels, all channels."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"arrays differ in shape: {x.shape} vs {y.shape}")
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != x.shape[: m.ndim]:
            raise ValueError("mask must match the leading array dimensions")
        x = x[m]
        y = y[m]
    if x.size == 0:
        raise ValueError("no pixels selected")
    diff = x - y
    return float(np.mean(diff * diff))
