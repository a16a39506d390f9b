"""Interval-overlap weights used by every resampling path.

All resamplers here are separable: a 2D resample is ``Wy @ A @ Wx.T`` with
one sparse matrix per axis.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse


def overlap_matrix(src_edges, dst_edges) -> sparse.csr_matrix:
    """Sparse ``M[dst, src]`` holding the overlap length of the two intervals.

    Both edge arrays must be strictly increasing; interval ``i`` is
    ``[edges[i], edges[i + 1])``.
    """
    src_edges = np.asarray(src_edges, dtype=np.float64)
    dst_edges = np.asarray(dst_edges, dtype=np.float64)
    n_src = src_edges.size - 1
    n_dst = dst_edges.size - 1
    lo, hi = src_edges[:-1], src_edges[1:]
    first = np.clip(np.searchsorted(dst_edges, lo, side="right") - 1, 0, n_dst - 1)
    last = np.clip(np.searchsorted(dst_edges, hi, side="left") - 1, 0, n_dst - 1)
    counts = np.maximum(last - first + 1, 0)
    src_idx = np.repeat(np.arange(n_src), counts)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    dst_idx = np.repeat(first, counts) + offsets
    overlap = np.minimum(hi[src_idx], dst_edges[dst_idx + 1]) - np.maximum(
        lo[src_idx], dst_edges[dst_idx]
    )
    keep = overlap > 0
    return sparse.csr_matrix(
        (overlap[keep], (dst_idx[keep], src_idx[keep])), shape=(n_dst, n_src)
    )


def mass_matrix(n_in: int, n_out: int) -> sparse.csr_matrix:
    """Columns sum to one: each source cell spreads its mass by overlap."""
    src = np.arange(n_in + 1) * (n_out / n_in)
    dst = np.arange(n_out + 1, dtype=np.float64)
    # source cell length in output units is n_out / n_in
    return overlap_matrix(src, dst) * (n_in / n_out)


def box_matrix(n_in: int, n_out: int, start: int = 0, stop: int | None = None):
    """Rows sum to one: each output sample is the area average of its footprint.

    ``start``/``stop`` select a column slice (source samples) so that
    callers can process one tile at a time.
    """
    stop = n_in if stop is None else stop
    src = np.arange(start, stop + 1, dtype=np.float64)
    dst = np.arange(n_out + 1) * (n_in / n_out)
    return overlap_matrix(src, dst) * (n_out / n_in)


def bilinear_matrix(n_in: int, n_out: int, start: int = 0, stop: int | None = None):
    """Half-pixel-centred linear interpolation with edge clamping."""
    stop = n_in if stop is None else stop
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0, n_in - 1)
    left = np.floor(pos).astype(np.int64)
    right = np.minimum(left + 1, n_in - 1)
    frac = pos - left
    rows = np.concatenate([np.arange(n_out), np.arange(n_out)])
    cols = np.concatenate([left, right])
    vals = np.concatenate([1.0 - frac, frac])
    keep = (cols >= start) & (cols < stop) & (vals != 0)
    return sparse.csr_matrix(
        (vals[keep], (rows[keep], cols[keep] - start)), shape=(n_out, stop - start)
    ).tocsr()


def image_matrix(n_in: int, n_out: int, start: int = 0, stop: int | None = None):
    """Box filter when shrinking (or identity), bilinear when enlarging."""
    if n_out <= n_in:
        return box_matrix(n_in, n_out, start, stop)
    return bilinear_matrix(n_in, n_out, start, stop)


def apply_separable(wy, values: np.ndarray, wx) -> np.ndarray:
    """Compute ``wy @ values @ wx.T`` for sparse axis matrices."""
    tmp = wy @ values
    return np.asarray((wx @ np.asarray(tmp).T).T)
