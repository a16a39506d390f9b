"""Iterative zoom-and-replace over one or more dense regions.

Forward pass: at each level, estimate density on the current window
(downsampled to the estimator patch), find the densest sub-window of the
next level's size and zoom into it. Backward pass: from the deepest level
up, resize each refined map into the footprint it occupies in its parent
and overwrite that region. Multiple chains start from k-means centres of
thresholded peaks in the smoothed coarse map; their outputs are pasted
into the coarse map in ascending chain order.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .density_map import (
    DensityMap,
    GridRect,
    paste_fractional,
    replace_region,
    resize_mass_preserving,
    total_count,
    write_dmap,
)
from .estimators import DEFAULT_STRIDE, DegradationParams, DensityEstimator, EstimatorRequest
from .geometry import PixelRect, Resolution, round_half_up
from .region import argmax_window, cell_rect_for, footprint_in_cells, kernel_size, map_to_global, window_sums
from .schedule import KINDS, ZoomSchedule, make_schedule

log = logging.getLogger(__name__)


class ChainError(RuntimeError):
    """A zoom chain aborted because its estimator failed."""

    def __init__(self, level: int, rect: PixelRect, cause: Exception):
        super().__init__(f"level {level}, rect {rect.as_list()}: {cause}")
        self.level = level
        self.rect = rect
        self.cause = cause


# --- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class MultiRegionConfig:
    enabled: bool = True
    sigma: float = 4.0
    radius: int = 7
    lam: float = 0.1  # persons per cell on the smoothed map
    k: int = 2
    iters: int = 100
    seed: int = 0
    peak_radius: int | None = None  # local-max footprint; defaults to radius

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.sigma <= 0 or self.radius < 1:
            raise ValueError("smoothing needs sigma > 0 and radius >= 1")

    @property
    def footprint(self) -> int:
        return self.radius if self.peak_radius is None else self.peak_radius


@dataclass(frozen=True)
class GigaZoomConfig:
    kind: str = "exponential"
    levels: int = 10
    overzoom: int = 0
    patch: Resolution = Resolution(2560, 1440)
    stride: int = DEFAULT_STRIDE
    multiregion: MultiRegionConfig = field(default_factory=MultiRegionConfig)
    degradation: DegradationParams = field(default_factory=DegradationParams)
    # "exact" pastes refined maps at the real-valued footprint of the child
    # window; "cells" rounds that footprint to whole cells first.
    placement: str = "exact"
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"zoom kind must be one of {KINDS}, got {self.kind!r}")
        if self.levels < 1 or self.overzoom < 0:
            raise ValueError("need levels >= 1 and overzoom >= 0")
        if self.placement not in ("cells", "exact"):
            raise ValueError(f"placement must be 'cells' or 'exact', got {self.placement!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def density_res(self) -> Resolution:
        return Resolution(self.patch.w // self.stride, self.patch.h // self.stride)

    def schedule(self, canvas: Resolution) -> ZoomSchedule:
        return make_schedule(self.kind, canvas, self.patch, self.levels, self.overzoom)

    @classmethod
    def from_dict(cls, doc: dict) -> "GigaZoomConfig":
        zoom = doc.get("zoom", {})
        patch = doc.get("patch", {})
        mr = dict(doc.get("multiregion", {}))
        if "lambda" in mr:
            mr["lam"] = mr.pop("lambda")
        defaults = cls()
        return cls(
            kind=zoom.get("kind", defaults.kind),
            levels=int(zoom.get("levels", defaults.levels)),
            overzoom=int(zoom.get("overzoom", defaults.overzoom)),
            patch=Resolution(patch.get("w", defaults.patch.w), patch.get("h", defaults.patch.h)),
            stride=int(patch.get("stride", defaults.stride)),
            multiregion=MultiRegionConfig(**mr),
            degradation=DegradationParams.from_dict(doc.get("degradation")),
            placement=doc.get("placement", defaults.placement),
            workers=int(doc.get("workers", defaults.workers)),
        )

    def to_dict(self) -> dict:
        mr = asdict(self.multiregion)
        mr["lambda"] = mr.pop("lam")
        return {
            "zoom": {"kind": self.kind, "levels": self.levels, "overzoom": self.overzoom},
            "patch": {"w": self.patch.w, "h": self.patch.h, "stride": self.stride},
            "multiregion": mr,
            "degradation": asdict(self.degradation),
            "placement": self.placement,
            "workers": self.workers,
        }

    @classmethod
    def load(cls, path: str | os.PathLike) -> "GigaZoomConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# --- region planning ---------------------------------------------------------


def _gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_smooth(dmap: DensityMap, sigma: float, radius: int) -> DensityMap:
    """Separable truncated-Gaussian blur with reflected borders. Preserves mass."""
    if sigma <= 0 or radius < 1:
        raise ValueError("need sigma > 0 and radius >= 1")
    k = _gaussian_kernel(sigma, radius)
    values = ndimage.correlate1d(dmap.values, k, axis=0, mode="reflect")
    values = ndimage.correlate1d(values, k, axis=1, mode="reflect")
    return DensityMap(np.maximum(values, 0.0))


def find_peaks(smoothed: DensityMap, lam: float, radius: int = 7) -> list[tuple[int, int]]:
    """Cells that are the maximum of their (2r+1)^2 neighbourhood and exceed ``lam``.

    Neighbourhoods are clipped at the border. Returned row-major as (x, y).
    """
    values = smoothed.values
    local_max = ndimage.maximum_filter(values, size=2 * radius + 1, mode="constant", cval=-np.inf)
    ys, xs = np.nonzero((values == local_max) & (values > lam))
    return [(int(x), int(y)) for x, y in zip(xs, ys)]


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    for _ in range(1, k):
        d2 = np.min(((points[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(points[rng.integers(len(points))])
        else:
            centers.append(points[rng.choice(len(points), p=d2 / total)])
    return np.array(centers, dtype=np.float64)


def _lloyd(points: np.ndarray, centers: np.ndarray, iters: int) -> tuple[np.ndarray, float]:
    for _ in range(iters):
        d2 = ((points[:, None, :] - centers[None]) ** 2).sum(-1)
        labels = np.argmin(d2, axis=1)
        new = centers.copy()
        for j in range(len(centers)):
            members = points[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        if np.array_equal(new, centers):
            break
        centers = new
    d2 = ((points[:, None, :] - centers[None]) ** 2).sum(-1)
    return centers, float(d2.min(axis=1).sum())


def kmeans_cluster(points, k: int, iters: int = 100, seed: int = 0, n_init: int = 8) -> np.ndarray:
    """Lloyd's k-means from k-means++ seeding; best of ``n_init`` restarts.

    Returns an ``(m, 2)`` array of (x, y) centres sorted row-major, where
    ``m = min(k, number of distinct points)``.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(pts) == 0:
        return np.zeros((0, 2))
    distinct = np.unique(pts, axis=0)
    if len(distinct) <= k:
        return distinct[np.lexsort((distinct[:, 0], distinct[:, 1]))]
    rng = np.random.default_rng(seed)
    best, best_sse = None, np.inf
    for _ in range(n_init):
        centers, sse = _lloyd(pts, _kmeans_pp(pts, k, rng), iters)
        if sse < best_sse - 1e-12:
            best, best_sse = centers, sse
    return best[np.lexsort((best[:, 0], best[:, 1]))]


def _argmax_child(parent: PixelRect, dmap: DensityMap, cur: Resolution, nxt: Resolution):
    kw, kh = kernel_size(cur.w, cur.h, nxt.w, nxt.h, dmap.res)
    peak = argmax_window(window_sums(dmap, kw, kh))
    return peak, map_to_global(parent, peak, dmap.res, nxt)


def cluster_centers(d0: DensityMap, mrc: MultiRegionConfig) -> np.ndarray:
    """Smooth, detect and threshold peaks, then cluster them. Centres in cells."""
    smoothed = gaussian_smooth(d0, mrc.sigma, mrc.radius)
    peaks = find_peaks(smoothed, mrc.lam, mrc.footprint)
    return kmeans_cluster(peaks, mrc.k, mrc.iters, mrc.seed)


def plan_regions(
    d0: DensityMap, canvas_rect: PixelRect, schedule: ZoomSchedule, mrc: MultiRegionConfig
) -> list[PixelRect]:
    """Level-1 windows at which the zoom chains start, in application order."""
    size = schedule.dims[1]
    if mrc.enabled:
        centers = cluster_centers(d0, mrc)
        if len(centers):
            dres = d0.res
            rects = []
            for cx, cy in centers:
                px = canvas_rect.x + (cx + 0.5) * canvas_rect.w / dres.w
                py = canvas_rect.y + (cy + 0.5) * canvas_rect.h / dres.h
                x = min(max(round_half_up(px - size.w / 2), canvas_rect.x), canvas_rect.x1 - size.w)
                y = min(max(round_half_up(py - size.h / 2), canvas_rect.y), canvas_rect.y1 - size.h)
                rects.append(PixelRect(x, y, size.w, size.h))
            return rects
    _, rect = _argmax_child(canvas_rect, d0, schedule.dims[0], size)
    return [rect]


# --- forward / backward ------------------------------------------------------


@dataclass(frozen=True)
class ZoomStep:
    level: int
    global_rect: PixelRect
    density: DensityMap
    child_cell_rect: GridRect | None = None
    child_footprint: tuple[float, float, float, float] | None = None
    peak: tuple[int, int] | None = None
    seconds: float = 0.0


@dataclass(frozen=True)
class ZoomTrace:
    steps: tuple[ZoomStep, ...]

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]


def _request(source, rect: PixelRect, patch: Resolution) -> EstimatorRequest:
    loader = functools.partial(source.read_region, rect, patch) if source is not None else None
    return EstimatorRequest(rect, patch, loader=loader)


def forward_pass(
    source,
    start_rect: PixelRect,
    schedule: ZoomSchedule,
    start_level: int,
    estimator: DensityEstimator,
    patch: Resolution,
) -> ZoomTrace:
    """Zoom from ``start_rect`` (level ``start_level``) down to the schedule's last level.

    ``source`` is anything with ``read_region(rect, out)`` (a tiled image or
    a scene); it is only touched when the estimator asks for pixels.
    """
    if start_rect.size != schedule.dims[start_level]:
        raise ValueError(
            f"start rect {start_rect.size} does not match schedule level {start_level} ({schedule.dims[start_level]})"
        )
    steps = []
    rect = start_rect
    for t in range(start_level, schedule.last + 1):
        tic = time.perf_counter()
        try:
            density = estimator.estimate(_request(source, rect, patch))
        except Exception as exc:
            raise ChainError(t, rect, exc) from exc
        seconds = time.perf_counter() - tic
        if t == schedule.last:
            steps.append(ZoomStep(t, rect, density, seconds=seconds))
            break
        peak, child = _argmax_child(rect, density, schedule.dims[t], schedule.dims[t + 1])
        steps.append(
            ZoomStep(
                t, rect, density,
                child_cell_rect=cell_rect_for(rect, child, density.res),
                child_footprint=footprint_in_cells(rect, child, density.res),
                peak=peak,
                seconds=seconds,
            )
        )
        rect = child
    return ZoomTrace(tuple(steps))


def _paste(host: DensityMap, step_rect: GridRect, footprint, sub: DensityMap, placement: str) -> DensityMap:
    if placement == "exact" and footprint is not None:
        return paste_fractional(host, *footprint, sub)
    return replace_region(host, step_rect, resize_mass_preserving(sub, step_rect.size))


def backward_pass(trace: ZoomTrace, placement: str = "exact") -> DensityMap:
    """Fold a trace from the deepest level up into one refined map at the first level."""
    refined = trace[-1].density
    for step in reversed(trace.steps[:-1]):
        refined = _paste(step.density, step.child_cell_rect, step.child_footprint, refined, placement)
    return refined


# --- orchestration -----------------------------------------------------------


@dataclass
class ChainResult:
    index: int
    start_rect: PixelRect
    cell_rect: GridRect
    footprint: tuple[float, float, float, float]
    trace: ZoomTrace | None = None
    refined: DensityMap | None = None
    error: str | None = None
    calls: int = 0


@dataclass
class GigaZoomResult:
    density: DensityMap
    coarse: DensityMap
    canvas: Resolution
    schedule: ZoomSchedule
    chains: list[ChainResult]
    estimator_calls: int
    coarse_seconds: float = 0.0

    @property
    def count(self) -> float:
        return total_count(self.density)

    @property
    def failed(self) -> list[ChainResult]:
        return [c for c in self.chains if c.error is not None]


def _run_chain(source, chain: ChainResult, schedule, refine, config) -> ChainResult:
    try:
        chain.trace = forward_pass(source, chain.start_rect, schedule, 1, refine, config.patch)
        chain.refined = backward_pass(chain.trace, config.placement)
        chain.calls = len(chain.trace)
    except ChainError as exc:
        log.warning("zoom chain %d failed: %s", chain.index, exc)
        chain.error = str(exc)
        chain.calls = exc.level  # levels 1..level were attempted
    return chain


def gigazoom(
    source,
    config: GigaZoomConfig,
    coarse: DensityEstimator,
    refine: DensityEstimator | None = None,
    canvas: Resolution | None = None,
) -> GigaZoomResult:
    """Count people in ``source`` (tiled image or scene).

    ``coarse`` produces the level-0 map; ``refine`` (defaults to ``coarse``)
    serves every zoomed level. A chain whose estimator fails leaves the
    coarse density untouched in its region and is reported in ``chains``.
    """
    refine = coarse if refine is None else refine
    canvas = canvas or source.canvas
    schedule = config.schedule(canvas)
    canvas_rect = PixelRect.full(canvas)

    tic = time.perf_counter()
    d0 = coarse.estimate(_request(source, canvas_rect, config.patch))
    coarse_seconds = time.perf_counter() - tic
    calls = 1

    regions = plan_regions(d0, canvas_rect, schedule, config.multiregion)
    chains = [
        ChainResult(
            i, r,
            cell_rect_for(canvas_rect, r, d0.res),
            footprint_in_cells(canvas_rect, r, d0.res),
        )
        for i, r in enumerate(regions)
    ]
    run = functools.partial(_run_chain, source, schedule=schedule, refine=refine, config=config)
    if config.workers > 1 and refine.thread_safe and len(chains) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(run, chains))
    else:
        for chain in chains:
            run(chain)

    final = d0
    for chain in chains:  # ascending index: the later chain wins on overlap
        calls += chain.calls
        if chain.refined is not None:
            final = _paste(final, chain.cell_rect, chain.footprint, chain.refined, config.placement)
    return GigaZoomResult(final, d0, canvas, schedule, chains, calls, coarse_seconds)


def write_trace_bundle(result: GigaZoomResult, dest: str | os.PathLike) -> None:
    """Dump every level's density and a JSON index for debugging."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    write_dmap(dest / "level_0.dmap", result.coarse)
    write_dmap(dest / "final.dmap", result.density)
    doc = {
        "canvas": {"w": result.canvas.w, "h": result.canvas.h},
        "schedule": {
            "kind": result.schedule.kind,
            "levels": result.schedule.levels,
            "overzoom": result.schedule.overzoom,
            "dims": [[d.w, d.h] for d in result.schedule.dims],
        },
        "coarse": {"file": "level_0.dmap", "count": total_count(result.coarse), "seconds": result.coarse_seconds},
        "count": result.count,
        "estimator_calls": result.estimator_calls,
        "chains": [],
    }
    for chain in result.chains:
        entry = {
            "index": chain.index,
            "start_rect": chain.start_rect.as_list(),
            "cell_rect": chain.cell_rect.as_list(),
            "error": chain.error,
            "levels": [],
        }
        if chain.trace is not None:
            sub = dest / f"chain_{chain.index}"
            sub.mkdir(exist_ok=True)
            for step in chain.trace:
                name = f"chain_{chain.index}/level_{step.level}.dmap"
                write_dmap(dest / name, step.density)
                entry["levels"].append(
                    {
                        "level": step.level,
                        "file": name,
                        "rect": step.global_rect.as_list(),
                        "count": total_count(step.density),
                        "kernel_rect": step.child_cell_rect.as_list() if step.child_cell_rect else None,
                        "argmax": list(step.peak) if step.peak else None,
                        "seconds": step.seconds,
                    }
                )
        doc["chains"].append(entry)
    (dest / "trace.json").write_text(json.dumps(doc, indent=2) + "\n")
