"""Densest-window search on a density map and its mapping back to pixels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density_map import DensityMap, GridRect
from .geometry import PixelRect, Resolution, round_half_up

# Window sums within this relative distance of the maximum count as ties.
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class WindowSumGrid:
    """``values[y, x]`` is the mass of the kernel window whose top-left cell is (x, y)."""

    values: np.ndarray
    kernel: tuple[int, int]

    @property
    def res(self) -> Resolution:
        h, w = self.values.shape
        return Resolution(w, h)


def kernel_size(w_t: int, h_t: int, w_next: int, h_next: int, dres: Resolution) -> tuple[int, int]:
    """Footprint, in density cells, of the next zoom window inside the current one."""
    kw = round_half_up(w_next / w_t * dres.w)
    kh = round_half_up(h_next / h_t * dres.h)
    return min(max(kw, 1), dres.w), min(max(kh, 1), dres.h)


def summed_area_table(values: np.ndarray) -> np.ndarray:
    """Zero-padded integral image: ``sat[y, x]`` = sum of ``values[:y, :x]``."""
    sat = np.zeros((values.shape[0] + 1, values.shape[1] + 1), dtype=np.float64)
    np.cumsum(values, axis=0, dtype=np.float64, out=sat[1:, 1:])
    np.cumsum(sat[1:, 1:], axis=1, out=sat[1:, 1:])
    return sat


def window_sums(dmap: DensityMap, kw: int, kh: int) -> WindowSumGrid:
    """All-ones valid convolution of ``dmap`` with a ``kw`` x ``kh`` kernel.

    Uses a summed-area table, so the cost does not depend on the kernel size.
    """
    res = dmap.res
    if not (1 <= kw <= res.w and 1 <= kh <= res.h):
        raise ValueError(f"kernel {kw}x{kh} does not fit density map {res}")
    sat = summed_area_table(dmap.values)
    sums = sat[kh:, kw:] - sat[:-kh, kw:] - sat[kh:, :-kw] + sat[:-kh, :-kw]
    return WindowSumGrid(np.maximum(sums, 0.0), (kw, kh))


def argmax_window(grid: WindowSumGrid | np.ndarray) -> tuple[int, int]:
    """(x, y) of the largest window sum; ties go to the first in row-major order."""
    values = grid.values if isinstance(grid, WindowSumGrid) else np.asarray(grid)
    if values.size == 0:
        raise ValueError("empty window-sum grid")
    best = values.max()
    flat = int(np.argmax(values >= best - TIE_RTOL * abs(best)))
    y, x = divmod(flat, values.shape[1])
    return x, y


def map_to_global(
    parent: PixelRect, peak: tuple[int, int], dres: Resolution, child_size: Resolution
) -> PixelRect:
    """Level-0 rect of the child window whose top-left density cell is ``peak``.

    The child is shifted (never shrunk) to lie inside ``parent``, which keeps
    zoom windows nested and therefore inside the canvas.
    """
    if child_size.w > parent.w or child_size.h > parent.h:
        raise ValueError(f"child {child_size} larger than parent {parent.size}")
    x = parent.x + round_half_up(parent.w * peak[0] / dres.w)
    y = parent.y + round_half_up(parent.h * peak[1] / dres.h)
    x = min(max(x, parent.x), parent.x1 - child_size.w)
    y = min(max(y, parent.y), parent.y1 - child_size.h)
    return PixelRect(x, y, child_size.w, child_size.h)


def footprint_in_cells(parent: PixelRect, child: PixelRect, dres: Resolution) -> tuple[float, float, float, float]:
    """Exact (real-valued) cell footprint of ``child`` inside ``parent``'s density grid."""
    sx, sy = dres.w / parent.w, dres.h / parent.h
    return (child.x - parent.x) * sx, (child.y - parent.y) * sy, child.w * sx, child.h * sy


def cell_rect_for(parent: PixelRect, child: PixelRect, dres: Resolution) -> GridRect:
    """Nearest whole-cell rect covering ``child`` inside ``parent``'s density grid."""
    x, y, w, h = footprint_in_cells(parent, child, dres)
    kw = min(max(round_half_up(w), 1), dres.w)
    kh = min(max(round_half_up(h), 1), dres.h)
    gx = min(max(round_half_up(x), 0), dres.w - kw)
    gy = min(max(round_half_up(y), 0), dres.h - kh)
    return GridRect(gx, gy, kw, kh)
