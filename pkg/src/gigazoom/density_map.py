"""Density maps: non-negative grids whose sum is a person count.

Every resizing operation here redistributes mass by area overlap, so the
total count is invariant under resampling. Interpolating point samples
(bilinear etc.) would scale the count by the area ratio instead.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from . import _resample
from .geometry import Resolution

DMAP_MAGIC = b"DMAP"
_HEADER = struct.Struct("<4sII")


class DmapFormatError(ValueError):
    """Raised when a DMAP payload is truncated, mislabelled or invalid."""


@dataclass(frozen=True)
class GridRect:
    """Rectangle in density-cell coordinates."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"grid rect must be at least 1x1, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"grid rect origin must be non-negative, got ({self.x}, {self.y})")

    @property
    def size(self) -> Resolution:
        return Resolution(self.w, self.h)

    def within(self, res: Resolution) -> bool:
        return self.x + self.w <= res.w and self.y + self.h <= res.h

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


class DensityMap:
    """Immutable row-major density grid.

    Parameters
    ----------
    values : array_like, shape (h, w)
        Non-negative, finite person-per-cell values. Stored as float64.
    """

    __slots__ = ("_values",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"density map must be a non-empty 2D grid, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("density map contains non-finite values")
        if np.any(arr < 0):
            raise ValueError("density map contains negative values")
        arr.flags.writeable = False
        self._values = arr

    @classmethod
    def zeros(cls, res: Resolution) -> "DensityMap":
        return cls(np.zeros(res.shape))

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def res(self) -> Resolution:
        h, w = self._values.shape
        return Resolution(w, h)

    def total(self) -> float:
        return total_count(self)

    def __repr__(self):
        return f"DensityMap({self.res}, total={self.total():.4f})"

    def __eq__(self, other):
        if not isinstance(other, DensityMap):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    __hash__ = None


def total_count(dmap: DensityMap) -> float:
    """Predicted count: sum over all cells, accumulated in float64."""
    return float(np.sum(dmap.values, dtype=np.float64))


def resize_mass_preserving(dmap: DensityMap, out: Resolution) -> DensityMap:
    """Resample ``dmap`` to ``out`` by area-overlap mass redistribution."""
    src = dmap.res
    if src == out:
        return dmap
    wy = _resample.mass_matrix(src.h, out.h)
    wx = _resample.mass_matrix(src.w, out.w)
    values = _resample.apply_separable(wy, dmap.values, wx)
    return DensityMap(np.maximum(values, 0.0))


def replace_region(host: DensityMap, rect: GridRect, sub: DensityMap) -> DensityMap:
    """Overwrite ``rect`` of ``host`` with ``sub`` (resized to fit if needed)."""
    if not rect.within(host.res):
        raise ValueError(f"grid rect {rect.as_list()} exceeds density map {host.res}")
    if sub.res != rect.size:
        sub = resize_mass_preserving(sub, rect.size)
    values = np.array(host.values)
    values[rect.slices()] = sub.values
    return DensityMap(values)


def paste_fractional(
    host: DensityMap, x: float, y: float, w: float, h: float, sub: DensityMap
) -> DensityMap:
    """Replace a real-valued footprint of ``host`` with ``sub``.

    Host cells partially covered by the footprint keep the uncovered share
    of their mass (mass assumed uniform within a cell); ``sub`` mass is
    spread over host cells by area overlap. For integral footprints this is
    exactly :func:`replace_region`.
    """
    res = host.res
    if x < 0 or y < 0 or w <= 0 or h <= 0 or x + w > res.w + 1e-9 or y + h > res.h + 1e-9:
        raise ValueError(f"footprint {(x, y, w, h)} exceeds density map {res}")
    host_x = np.arange(res.w + 1, dtype=np.float64)
    host_y = np.arange(res.h + 1, dtype=np.float64)
    sub_x = x + np.arange(sub.res.w + 1) * (w / sub.res.w)
    sub_y = y + np.arange(sub.res.h + 1) * (h / sub.res.h)
    # host_cells x sub_cells, normalised so every sub cell hands over all its mass
    wx = _resample.overlap_matrix(sub_x, host_x) * (sub.res.w / w)
    wy = _resample.overlap_matrix(sub_y, host_y) * (sub.res.h / h)
    cover_x = np.asarray(_resample.overlap_matrix([x, x + w], host_x).todense()).ravel()
    cover_y = np.asarray(_resample.overlap_matrix([y, y + h], host_y).todense()).ravel()
    kept = host.values * (1.0 - np.outer(cover_y, cover_x))
    values = kept + _resample.apply_separable(wy, sub.values, wx)
    return DensityMap(np.maximum(values, 0.0))


# --- DMAP binary format ------------------------------------------------------


def dmap_bytes(dmap: DensityMap) -> bytes:
    res = dmap.res
    body = np.ascontiguousarray(dmap.values, dtype="<f4").tobytes()
    return _HEADER.pack(DMAP_MAGIC, res.w, res.h) + body


def parse_dmap(payload: bytes) -> DensityMap:
    if len(payload) < _HEADER.size:
        raise DmapFormatError(f"DMAP payload too short ({len(payload)} bytes)")
    magic, w, h = _HEADER.unpack_from(payload)
    if magic != DMAP_MAGIC:
        raise DmapFormatError(f"bad DMAP magic {magic!r}")
    if w < 1 or h < 1:
        raise DmapFormatError(f"bad DMAP dimensions {w}x{h}")
    expected = _HEADER.size + 4 * w * h
    if len(payload) != expected:
        raise DmapFormatError(f"DMAP size mismatch: {len(payload)} bytes, expected {expected} for {w}x{h}")
    values = np.frombuffer(payload, dtype="<f4", offset=_HEADER.size).reshape(h, w)
    if not np.all(np.isfinite(values)):
        raise DmapFormatError("DMAP contains non-finite values")
    if np.any(values < 0):
        raise DmapFormatError("DMAP contains negative values")
    return DensityMap(values.astype(np.float64))


def write_dmap(path: str | os.PathLike, dmap: DensityMap) -> None:
    with open(path, "wb") as fh:
        fh.write(dmap_bytes(dmap))


def read_dmap(path: str | os.PathLike) -> DensityMap:
    with open(path, "rb") as fh:
        return parse_dmap(fh.read())


def heatmap_pgm(path: str | os.PathLike, dmap: DensityMap) -> None:
    """Write an 8-bit max-normalised heat map for eyeballing. Lossy."""
    from .tiled_image import write_pgm

    peak = dmap.values.max()
    scaled = dmap.values / peak * 255.0 if peak > 0 else dmap.values
    write_pgm(path, np.clip(np.rint(scaled), 0, 255).astype(np.uint8))
