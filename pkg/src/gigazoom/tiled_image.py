"""Tiled grayscale rasters too large to hold in memory at once.

A tiled image is a directory with ``manifest.json`` and binary PGM tiles
named ``tile_{row}_{col}.pgm``. Region reads only open the tiles that
intersect the requested rectangle and resample them straight into the
output buffer, so memory scales with the output, not the canvas.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import _resample
from .geometry import PixelRect, Resolution, check_rect_in_canvas

MANIFEST_NAME = "manifest.json"
MIN_TILE_SIZE = 16


class TileError(IOError):
    """Missing or malformed tile on disk."""


@dataclass(frozen=True)
class Patch:
    """8-bit grayscale raster, row-major."""

    res: Resolution
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.shape != self.res.shape:
            raise ValueError(f"patch pixels {self.pixels.shape} do not match {self.res}")
        if self.pixels.dtype != np.uint8:
            raise ValueError("patch pixels must be uint8")

    @classmethod
    def from_array(cls, pixels) -> "Patch":
        pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
        return cls(Resolution(pixels.shape[1], pixels.shape[0]), pixels)


# --- PGM ---------------------------------------------------------------------


def write_pgm(path: str | os.PathLike, pixels: np.ndarray) -> None:
    """Write a binary (P5, maxval 255) PGM."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def _pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    body = data[offset : offset + w * h]
    if len(body) != w * h:
        raise ValueError(f"{path}: truncated PGM body")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


# --- tiled image -------------------------------------------------------------


class GigaImage:
    """Read-only view of a tiled image directory.

    ``tiles_loaded`` counts tile reads; it exists so callers (and tests) can
    check that region reads stay local.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        try:
            manifest = json.loads((self.root / MANIFEST_NAME).read_text())
        except FileNotFoundError as exc:
            raise TileError(f"no {MANIFEST_NAME} in {self.root}") from exc
        if manifest.get("format") != "pgm":
            raise TileError(f"unsupported tile format {manifest.get('format')!r}")
        self.canvas = Resolution(manifest["width"], manifest["height"])
        self.tile_size = int(manifest["tile_size"])
        self._lock = threading.Lock()
        self.tiles_loaded = 0

    @property
    def grid(self) -> tuple[int, int]:
        """(rows, cols) of the tile grid."""
        return (
            math.ceil(self.canvas.h / self.tile_size),
            math.ceil(self.canvas.w / self.tile_size),
        )

    def tile_path(self, row: int, col: int) -> Path:
        return self.root / f"tile_{row}_{col}.pgm"

    def tile_rect(self, row: int, col: int) -> PixelRect:
        x, y = col * self.tile_size, row * self.tile_size
        return PixelRect(
            x, y, min(self.tile_size, self.canvas.w - x), min(self.tile_size, self.canvas.h - y)
        )

    def load_tile(self, row: int, col: int) -> np.ndarray:
        path = self.tile_path(row, col)
        try:
            pixels = read_pgm(path)
        except FileNotFoundError as exc:
            raise TileError(f"missing tile {path}") from exc
        expected = self.tile_rect(row, col)
        if pixels.shape != (expected.h, expected.w):
            raise TileError(
                f"tile {path.name} is {pixels.shape[1]}x{pixels.shape[0]}, expected {expected.w}x{expected.h}"
            )
        with self._lock:
            self.tiles_loaded += 1
        return pixels

    def read_region(self, rect: PixelRect, out: Resolution) -> Patch:
        return read_region(self, rect, out)


def read_region(img: GigaImage, rect: PixelRect, out: Resolution) -> Patch:
    """Resample ``rect`` of ``img`` to ``out`` pixels.

    Each axis is box-filtered when shrinking and bilinearly interpolated
    when enlarging.
    """
    check_rect_in_canvas(rect, img.canvas)
    ts = img.tile_size
    acc = np.zeros(out.shape, dtype=np.float64)
    rows = range(rect.y // ts, (rect.y1 - 1) // ts + 1)
    cols = range(rect.x // ts, (rect.x1 - 1) // ts + 1)
    for row in rows:
        tr = img.tile_rect(row, 0)
        y0, y1 = max(rect.y, tr.y), min(rect.y1, tr.y1)
        wy = _resample.image_matrix(rect.h, out.h, y0 - rect.y, y1 - rect.y)
        for col in cols:
            tc = img.tile_rect(0, col)
            x0, x1 = max(rect.x, tc.x), min(rect.x1, tc.x1)
            tile = img.load_tile(row, col)
            part = tile[y0 - tr.y : y1 - tr.y, x0 - tc.x : x1 - tc.x].astype(np.float64)
            wx = _resample.image_matrix(rect.w, out.w, x0 - rect.x, x1 - rect.x)
            acc += _resample.apply_separable(wy, part, wx)
    return Patch(out, np.clip(np.rint(acc), 0, 255).astype(np.uint8))


def build_tiled(
    source: np.ndarray | Callable[[PixelRect], np.ndarray],
    dest: str | os.PathLike,
    tile_size: int,
    canvas: Resolution | None = None,
) -> GigaImage:
    """Cut ``source`` into PGM tiles under ``dest`` and write the manifest.

    ``source`` is either a 2D uint8 array or a callable producing the pixels
    of a requested level-0 rect (``canvas`` is then required), which lets a
    synthetic scene be tiled without ever materialising the full canvas.
    """
    if tile_size < MIN_TILE_SIZE:
        raise ValueError(f"tile_size must be >= {MIN_TILE_SIZE}, got {tile_size}")
    if callable(source):
        if canvas is None:
            raise ValueError("canvas is required when tiling from a generator")
        produce = source
    else:
        array = np.asarray(source)
        if array.ndim != 2:
            raise ValueError("source raster must be 2D grayscale")
        canvas = Resolution(array.shape[1], array.shape[0])

        def produce(r: PixelRect) -> np.ndarray:
            return array[r.y : r.y1, r.x : r.x1]

    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    n_rows, n_cols = math.ceil(canvas.h / tile_size), math.ceil(canvas.w / tile_size)
    for row in range(n_rows):
        for col in range(n_cols):
            x, y = col * tile_size, row * tile_size
            r = PixelRect(x, y, min(tile_size, canvas.w - x), min(tile_size, canvas.h - y))
            pixels = np.asarray(produce(r))
            if pixels.shape != (r.h, r.w):
                raise TileError(f"generator produced {pixels.shape} for tile ({row}, {col}), expected {(r.h, r.w)}")
            write_pgm(dest / f"tile_{row}_{col}.pgm", pixels.astype(np.uint8))
    manifest = {"width": canvas.w, "height": canvas.h, "tile_size": tile_size, "format": "pgm"}
    (dest / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")

    img = GigaImage(dest)
    for row in range(n_rows):
        for col in range(n_cols):
            img.load_tile(row, col)  # raises TileError on dimension mismatch
    img.tiles_loaded = 0
    return img
