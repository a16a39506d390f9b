"""Synthetic crowd scenes with exact ground truth.

Heads are drawn from a mixture of uniform background and Gaussian
hot-spots; head boxes grow linearly towards the bottom of the frame to
mimic perspective. Ground-truth density places a box-truncated Gaussian
(sigma = 4 px) on every head, normalised to unit mass.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .density_map import DensityMap
from .geometry import PixelRect, Resolution, check_rect_in_canvas
from .tiled_image import Patch

GT_SIGMA = 4.0
HEAD_INTENSITY = 255
_CHUNK = 1024


@dataclass(frozen=True)
class SceneParams:
    canvas: Resolution
    count_range: tuple[int, int] = (500, 5000)
    hotspots: int = 3
    hotspot_sigma: float | None = None  # px; default 4% of the short side
    hotspot_fraction: float = 0.8
    box_top: float = 6.0  # head box height at y = 0
    box_bottom: float = 48.0  # head box height at y = H
    box_aspect: float = 0.8  # width / height
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.count_range
        if lo < 0 or hi < lo:
            raise ValueError(f"bad count range {self.count_range}")
        if self.hotspots < 0:
            raise ValueError("hotspots must be >= 0")
        if not 0.0 <= self.hotspot_fraction <= 1.0:
            raise ValueError("hotspot_fraction must be in [0, 1]")
        if self.box_top < 1 or self.box_bottom < 1:
            raise ValueError("head boxes must be at least 1 px")

    @property
    def sigma(self) -> float:
        if self.hotspot_sigma is not None:
            return float(self.hotspot_sigma)
        return 0.04 * min(self.canvas.w, self.canvas.h)


@dataclass(frozen=True, eq=False)
class Scene:
    """Head annotations on a canvas.

    ``heads`` is an ``(n, 4)`` int64 array of ``cx, cy, bw, bh``.
    ``hotspots`` holds the generator's hot-spot centres (not serialised).
    """

    canvas: Resolution
    heads: np.ndarray
    seed: int = 0
    hotspots: tuple[tuple[float, float], ...] = field(default=(), compare=False)

    def __post_init__(self):
        heads = np.array(self.heads, dtype=np.int64).reshape(-1, 4)
        if heads.size:
            cx, cy, bw, bh = heads.T
            if cx.min() < 0 or cy.min() < 0 or cx.max() >= self.canvas.w or cy.max() >= self.canvas.h:
                raise ValueError("head centre outside canvas")
            if bw.min() < 1 or bh.min() < 1:
                raise ValueError("head boxes must be at least 1x1")
        heads.flags.writeable = False
        object.__setattr__(self, "heads", heads)

    def __len__(self):
        return len(self.heads)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.canvas == other.canvas
            and self.seed == other.seed
            and np.array_equal(self.heads, other.heads)
        )

    __hash__ = None

    def read_region(self, rect: PixelRect, out: Resolution) -> Patch:
        return render_region(self, rect, out)

    # --- scene.json ---

    def to_json(self) -> str:
        doc = {
            "canvas": {"w": self.canvas.w, "h": self.canvas.h},
            "seed": int(self.seed),
            "heads": [
                {"cx": int(cx), "cy": int(cy), "bw": int(bw), "bh": int(bh)}
                for cx, cy, bw, bh in self.heads
            ],
        }
        return json.dumps(doc, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        doc = json.loads(text)
        heads = [(h["cx"], h["cy"], h["bw"], h["bh"]) for h in doc["heads"]]
        canvas = Resolution(doc["canvas"]["w"], doc["canvas"]["h"])
        return cls(canvas, np.array(heads, dtype=np.int64).reshape(-1, 4), int(doc.get("seed", 0)))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Scene":
        with open(path) as fh:
            return cls.from_json(fh.read())


def generate_scene(params: SceneParams) -> Scene:
    """Draw a scene; identical params (seed included) give identical scenes."""
    rng = np.random.default_rng(params.seed)
    W, H = params.canvas.w, params.canvas.h
    lo, hi = params.count_range
    n = int(rng.integers(lo, hi + 1))

    sigma = params.sigma
    mx = min(2 * sigma, W / 2)
    my = min(2 * sigma, H / 2)
    centers = np.column_stack(
        [rng.uniform(mx, W - mx, params.hotspots), rng.uniform(my, H - my, params.hotspots)]
    )

    if params.hotspots:
        in_spot = rng.random(n) < params.hotspot_fraction
    else:
        in_spot = np.zeros(n, dtype=bool)
    which = rng.integers(0, max(params.hotspots, 1), n)
    gauss = rng.normal(0.0, sigma, (n, 2))
    uniform = rng.uniform((0, 0), (W, H), (n, 2))
    if params.hotspots:
        spot_xy = centers[which] + gauss
    else:
        spot_xy = uniform
    xy = np.where(in_spot[:, None], spot_xy, uniform)
    cx = np.clip(np.floor(xy[:, 0]), 0, W - 1).astype(np.int64)
    cy = np.clip(np.floor(xy[:, 1]), 0, H - 1).astype(np.int64)

    frac = cy / max(H - 1, 1)
    bh = np.maximum(1, np.rint(params.box_top + (params.box_bottom - params.box_top) * frac))
    bw = np.maximum(1, np.rint(bh * params.box_aspect))
    heads = np.column_stack([cx, cy, bw.astype(np.int64), bh.astype(np.int64)])
    spots = tuple((float(x), float(y)) for x, y in centers)
    return Scene(params.canvas, heads, params.seed, spots)


def region_head_count(scene: Scene, rect: PixelRect) -> float:
    """Number of heads whose centre pixel lies inside ``rect``."""
    check_rect_in_canvas(rect, scene.canvas)
    cx, cy = scene.heads[:, 0], scene.heads[:, 1]
    inside = (cx >= rect.x) & (cx < rect.x1) & (cy >= rect.y) & (cy < rect.y1)
    return float(np.count_nonzero(inside))


# --- ground-truth density ----------------------------------------------------


def _axis_mass(center, box, canvas_len, origin, step, n_cells, sigma):
    """Per-head mass falling into each cell along one axis.

    Returns ``(cell_index, mass)`` arrays of shape ``(m, C)``. Pixel ``i``
    spans ``[i, i + 1)``; cell ``j`` spans ``[origin + j*step, origin + (j+1)*step)``.
    """
    start = np.maximum(center - box // 2, 0)
    stop = np.minimum(center - box // 2 + box, canvas_len)
    width = stop - start
    B = int(width.max())
    offs = np.arange(B)
    pix = start[:, None] + offs[None, :]
    valid = offs[None, :] < width[:, None]
    g = np.where(valid, np.exp(-((pix - center[:, None]) ** 2) / (2 * sigma * sigma)), 0.0)
    g /= g.sum(axis=1, keepdims=True)
    cum = np.zeros((g.shape[0], B + 1))
    np.cumsum(g, axis=1, out=cum[:, 1:])

    first = np.clip(np.floor((start - origin) / step).astype(np.int64), 0, n_cells - 1)
    last = np.clip(np.floor((stop - origin) / step).astype(np.int64), 0, n_cells - 1)
    C = int((last - first).max()) + 1
    j = first[:, None] + np.arange(C + 1)[None, :]
    bounds = origin + np.minimum(j, n_cells) * step

    fl = np.floor(bounds)
    k = fl.astype(np.int64) - start[:, None]
    frac = bounds - fl
    kc = np.clip(k, 0, B)
    F = np.take_along_axis(cum, kc, axis=1)
    inside = (k >= 0) & (k < B)
    F += np.where(inside, np.take_along_axis(g, np.clip(k, 0, B - 1), axis=1) * frac, 0.0)
    mass = np.diff(F, axis=1)
    idx = j[:, :-1]
    mass = np.where(idx < n_cells, mass, 0.0)
    return np.minimum(idx, n_cells - 1), np.maximum(mass, 0.0)


def density_on_grid(
    scene: Scene, x0: float, y0: float, cell_w: float, cell_h: float, nx: int, ny: int,
    sigma: float = GT_SIGMA,
) -> np.ndarray:
    """Ground-truth mass integrated over an arbitrary regular grid.

    The grid may extend past the canvas (no heads live there). Equivalent
    to rendering the full-resolution density, clipping it to the grid and
    resampling by area overlap, without ever building the full raster.
    """
    out = np.zeros(nx * ny, dtype=np.float64)
    heads = scene.heads
    if len(heads) == 0:
        return out.reshape(ny, nx)
    cx, cy, bw, bh = heads.T
    bx0, by0 = cx - bw // 2, cy - bh // 2
    x1, y1 = x0 + nx * cell_w, y0 + ny * cell_h
    hit = (bx0 + bw > x0) & (bx0 < x1) & (by0 + bh > y0) & (by0 < y1)
    heads = heads[hit]
    W, H = scene.canvas.w, scene.canvas.h
    for s in range(0, len(heads), _CHUNK):
        cx, cy, bw, bh = heads[s : s + _CHUNK].T
        ix, mx = _axis_mass(cx, bw, W, x0, cell_w, nx, sigma)
        iy, my = _axis_mass(cy, bh, H, y0, cell_h, ny, sigma)
        flat = iy[:, :, None] * nx + ix[:, None, :]
        weights = my[:, :, None] * mx[:, None, :]
        out += np.bincount(flat.ravel(), weights=weights.ravel(), minlength=nx * ny)
    return out.reshape(ny, nx)


def ground_truth_density(scene: Scene, rect: PixelRect, out: Resolution) -> DensityMap:
    """Ground-truth density of ``rect`` at ``out`` cells.

    Heads straddling the rect boundary contribute only the share of their
    mass that falls inside.
    """
    check_rect_in_canvas(rect, scene.canvas)
    values = density_on_grid(scene, rect.x, rect.y, rect.w / out.w, rect.h / out.h, out.w, out.h)
    return DensityMap(values)


# --- rendering ---------------------------------------------------------------


def _background(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    # smooth deterministic texture in absolute canvas coordinates, range ~[25, 95]
    return 60.0 + 25.0 * np.sin(ys[:, None] / 31.0) * np.cos(xs[None, :] / 23.0) + 10.0 * np.sin(
        (xs[None, :] + ys[:, None]) / 7.0
    )


def render_region(scene: Scene, rect: PixelRect, out: Resolution) -> Patch:
    """Grayscale raster of ``rect`` at ``out`` pixels: textured background
    with a filled bright ellipse per head box."""
    check_rect_in_canvas(rect, scene.canvas)
    sx, sy = out.w / rect.w, out.h / rect.h
    xs = rect.x + (np.arange(out.w) + 0.5) / sx
    ys = rect.y + (np.arange(out.h) + 0.5) / sy
    img = _background(xs, ys)

    heads = scene.heads
    if len(heads):
        cx, cy, bw, bh = heads.T.astype(np.float64)
        hit = (cx + bw / 2 > rect.x) & (cx - bw / 2 < rect.x1) & (cy + bh / 2 > rect.y) & (cy - bh / 2 < rect.y1)
        for hx, hy, hw, hh in heads[hit].astype(np.float64):
            # centre and semi-axes in output pixel units
            ux, uy = (hx + 0.5 - rect.x) * sx, (hy + 0.5 - rect.y) * sy
            ax, ay = max(hw * sx / 2, 0.5), max(hh * sy / 2, 0.5)
            c0, c1 = max(int(np.floor(ux - ax)), 0), min(int(np.ceil(ux + ax)), out.w)
            r0, r1 = max(int(np.floor(uy - ay)), 0), min(int(np.ceil(uy + ay)), out.h)
            if c0 >= c1 or r0 >= r1:
                continue
            px = (np.arange(c0, c1) + 0.5 - ux) / ax
            py = (np.arange(r0, r1) + 0.5 - uy) / ay
            mask = py[:, None] ** 2 + px[None, :] ** 2 <= 1.0
            img[r0:r1, c0:c1][mask] = HEAD_INTENSITY
            col, row = int(np.floor(ux)), int(np.floor(uy))
            if 0 <= col < out.w and 0 <= row < out.h:
                img[row, col] = HEAD_INTENSITY
    return Patch(out, np.clip(np.rint(img), 0, 255).astype(np.uint8))
