"""Deterministic per-row reductions over CSR-style bond arrays.

Every per-node quantity in the force and energy kernels is a reduction over
that node's contiguous slice of the bond arrays.  The helpers here guarantee
that each row's result is a function of that row's slice alone — never of
neighboring rows, array offsets, or block boundaries — so outputs are bitwise
independent of how rows are partitioned across workers.
"""

from __future__ import annotations

import numpy as np

__all__ = ["row_sums", "row_max", "row_blocks"]


def row_sums(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Sum ``values`` over each row of a CSR layout.

    values has shape (B,) or (B, k); offsets has shape (R + 1,) with
    offsets[0] == 0 and offsets[-1] == B.  Empty rows sum to zero.
    """
    counts = np.diff(offsets)
    rows = len(counts)
    out_shape = (rows,) + values.shape[1:]
    if rows == 0 or len(values) == 0:
        return np.zeros(out_shape, dtype=values.dtype)
    if offsets[-2] == len(values):
        # Trailing empty rows would index one past the end; give reduceat a
        # sentinel element.  Earlier rows never reach it, so sums for
        # non-empty rows stay bitwise identical to the unpadded case.
        pad = np.zeros((1,) + values.shape[1:], dtype=values.dtype)
        values = np.concatenate([values, pad], axis=0)
    with np.errstate(invalid="ignore"):
        # NaNs flow through untouched; callers detect non-finite results.
        out = np.add.reduceat(values, offsets[:-1], axis=0)
    empty = counts == 0
    if empty.any():
        # reduceat emits values[start] for zero-length rows; overwrite.
        out[empty] = 0
    return out


def row_max(values: np.ndarray, offsets: np.ndarray, empty: float = 0.0) -> np.ndarray:
    """Maximum of ``values`` over each row; empty rows get ``empty``."""
    counts = np.diff(offsets)
    rows = len(counts)
    if rows == 0 or len(values) == 0:
        return np.full((rows,) + values.shape[1:], empty, dtype=float)
    if offsets[-2] == len(values):
        pad = np.full((1,) + values.shape[1:], empty, dtype=values.dtype)
        values = np.concatenate([values, pad], axis=0)
    with np.errstate(invalid="ignore"):
        out = np.maximum.reduceat(values, offsets[:-1], axis=0)
    empty_rows = counts == 0
    if empty_rows.any():
        out[empty_rows] = empty
    return out


def row_blocks(offsets: np.ndarray, n_blocks: int) -> list[tuple[int, int]]:
    """Partition rows into up to ``n_blocks`` contiguous spans of roughly
    equal bond count.  Block boundaries always align with row boundaries."""
    rows = len(offsets) - 1
    n_blocks = max(1, min(n_blocks, rows)) if rows else 1
    if rows == 0:
        return [(0, 0)]
    total = int(offsets[-1])
    targets = (np.arange(1, n_blocks) * total) // n_blocks
    cuts = np.searchsorted(offsets, targets, side="left")
    edges = np.unique(np.concatenate(([0], cuts, [rows])))
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
