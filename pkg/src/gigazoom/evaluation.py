"""Count metrics, comparison baselines and ablation sweeps."""

from __future__ import annotations

import csv
import functools
import hashlib
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .density_map import DensityMap, resize_mass_preserving, total_count
from .estimators import DensityEstimator, EstimatorRequest, OracleEstimator, output_res
from .geometry import PixelRect, Resolution, round_half_up
from .pipeline import GigaZoomConfig, gigazoom
from .scene import Scene, SceneParams, generate_scene, region_head_count
from .tiled_image import Patch

SLIDING_SCALES = (1.0, 1 / 4, 1 / 8)


def mae_mse(preds: Sequence[float], gts: Sequence[float]) -> tuple[float, float]:
    """Mean absolute and mean squared count error."""
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    if preds.shape != gts.shape:
        raise ValueError(f"length mismatch: {preds.size} predictions, {gts.size} labels")
    if preds.size == 0:
        raise ValueError("need at least one prediction")
    diff = preds - gts
    return float(np.mean(np.abs(diff))), float(np.mean(diff * diff))


def config_fingerprint(config: GigaZoomConfig | dict) -> str:
    doc = config.to_dict() if isinstance(config, GigaZoomConfig) else config
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class EvalReport:
    records: list[dict]
    mae: float
    mse: float
    fingerprint: str = ""
    seed: int | None = None

    @classmethod
    def from_predictions(cls, ids, preds, gts, fingerprint="", seed=None) -> "EvalReport":
        mae, mse = mae_mse(preds, gts)
        records = [
            {"scene": str(i), "pred": float(p), "gt": float(g), "abs_error": abs(float(p) - float(g))}
            for i, p, g in zip(ids, preds, gts)
        ]
        return cls(records, mae, mse, fingerprint, seed)

    def recompute(self) -> tuple[float, float]:
        return mae_mse([r["pred"] for r in self.records], [r["gt"] for r in self.records])

    def to_dict(self) -> dict:
        return {
            "n": len(self.records),
            "mae": self.mae,
            "mse": self.mse,
            "config_fingerprint": self.fingerprint,
            "seed": self.seed,
            "records": self.records,
        }


# --- baselines ---------------------------------------------------------------


@dataclass
class BaselineResult:
    density: DensityMap
    calls: int
    windows: list[int] = field(default_factory=list)

    @property
    def count(self) -> float:
        return total_count(self.density)


def baseline_downsample(source, estimator: DensityEstimator, patch: Resolution,
                        canvas: Resolution | None = None) -> BaselineResult:
    """One estimate of the whole canvas squeezed into a single patch."""
    canvas = canvas or source.canvas
    rect = PixelRect.full(canvas)
    loader = functools.partial(source.read_region, rect, patch) if source is not None else None
    dmap = estimator.estimate(EstimatorRequest(rect, patch, loader=loader))
    return BaselineResult(dmap, 1, [1])


def _padded_loader(source, rect: PixelRect, content: Resolution, patch: Resolution) -> Patch:
    inner = source.read_region(rect, content)
    pixels = np.zeros(patch.shape, dtype=np.uint8)
    pixels[: content.h, : content.w] = inner.pixels
    return Patch(patch, pixels)


def _window_edges(n_small: int, n_full: int, size: int) -> list[tuple[int, int, int]]:
    """(level-0 start, level-0 stop, content length) of each window along one axis."""
    out = []
    for start in range(0, n_small, size):
        stop = min(start + size, n_small)
        x0 = round_half_up(start * n_full / n_small)
        x1 = n_full if stop == n_small else round_half_up(stop * n_full / n_small)
        out.append((x0, x1, stop - start))
    return out


def baseline_sliding_window(
    source,
    estimator: DensityEstimator,
    patch: Resolution,
    scales: Sequence[float] = SLIDING_SCALES,
    canvas: Resolution | None = None,
) -> BaselineResult:
    """Non-overlapping patch tiling at several scales, averaged.

    At each scale the canvas is downsampled, cut into patch-sized windows
    (edge windows zero-padded, their padded density discarded) and the
    per-window maps stitched. Per-scale maps are resized to the first
    scale's resolution by mass and averaged.
    """
    canvas = canvas or source.canvas
    stride_res = None
    maps, windows, calls = [], [], 0
    for s in scales:
        small = Resolution(max(1, round_half_up(canvas.w * s)), max(1, round_half_up(canvas.h * s)))
        xs = _window_edges(small.w, canvas.w, patch.w)
        ys = _window_edges(small.h, canvas.h, patch.h)
        rows = []
        for y0, y1, ch in ys:
            row = []
            for x0, x1, cw in xs:
                rect = PixelRect(x0, y0, x1 - x0, y1 - y0)
                content = Resolution(cw, ch)
                loader = (
                    functools.partial(_padded_loader, source, rect, content, patch)
                    if source is not None else None
                )
                dmap = estimator.estimate(EstimatorRequest(rect, patch, content, loader))
                calls += 1
                row.append(dmap.values)
            rows.append(np.hstack(row))
        stitched = np.vstack(rows)
        out = output_res(patch, estimator.stride)
        keep_w = math.ceil(small.w * out.w / patch.w)
        keep_h = math.ceil(small.h * out.h / patch.h)
        scale_map = DensityMap(stitched[:keep_h, :keep_w])
        stride_res = stride_res or scale_map.res
        maps.append(resize_mass_preserving(scale_map, stride_res).values)
        windows.append(len(xs) * len(ys))
    return BaselineResult(DensityMap(np.mean(maps, axis=0)), calls, windows)


# --- suites and ablations ----------------------------------------------------


@dataclass(frozen=True)
class SuiteItem:
    name: str
    scene: Scene


def load_suite(doc_or_path) -> tuple[list[SuiteItem], dict]:
    """Parse a suite description: ``{"config": {...}, "scenes": [...]}``.

    Scene entries are either ``{"path": "scene.json"}`` or generator
    parameters ``{"seed", "width", "height", "count", "hotspots"}`` (plus
    optional ``hotspot_sigma`` and ``hotspot_fraction``) where ``count``
    is an int or a ``[lo, hi]`` range.
    """
    base = Path(".")
    if not isinstance(doc_or_path, dict):
        base = Path(doc_or_path).parent
        doc_or_path = json.loads(Path(doc_or_path).read_text())
    items = []
    for entry in doc_or_path["scenes"]:
        if "path" in entry:
            path = base / entry["path"]
            items.append(SuiteItem(entry.get("name", path.stem), Scene.load(path)))
            continue
        count = entry.get("count", [500, 5000])
        count = (count, count) if isinstance(count, int) else tuple(count)
        params = SceneParams(
            Resolution(entry["width"], entry["height"]),
            count_range=count,
            hotspots=entry.get("hotspots", 3),
            hotspot_sigma=entry.get("hotspot_sigma"),
            hotspot_fraction=entry.get("hotspot_fraction", 0.8),
            seed=entry["seed"],
        )
        items.append(SuiteItem(entry.get("name", f"seed{entry['seed']}"), generate_scene(params)))
    return items, doc_or_path.get("config", {})


def _set_dotted(doc: dict, key: str, value) -> None:
    parts = key.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def evaluate_suite(suite: Sequence[SuiteItem], config: GigaZoomConfig, method: str = "gigazoom") -> EvalReport:
    """Run one method on every scene with the config's oracle degradation."""
    preds, gts, ids = [], [], []
    for item in suite:
        est = OracleEstimator(item.scene, config.degradation, config.stride)
        if method == "gigazoom":
            pred = gigazoom(item.scene, config, est).count
        elif method == "downsample":
            pred = baseline_downsample(item.scene, est, config.patch).count
        elif method == "sliding":
            pred = baseline_sliding_window(item.scene, est, config.patch).count
        else:
            raise ValueError(f"unknown method {method!r}")
        ids.append(item.name)
        preds.append(pred)
        gts.append(region_head_count(item.scene, PixelRect.full(item.scene.canvas)))
    return EvalReport.from_predictions(ids, preds, gts, config_fingerprint(config))


def run_ablation(axes: dict, suite: Sequence[SuiteItem], base: dict | None = None,
                 workers: int = 1) -> list[dict]:
    """Cross product of ``axes`` (dotted config keys -> values) over ``suite``.

    Rows are sorted by their config key. A failing cell is reported with an
    ``error`` and NaN metrics instead of aborting the sweep.
    """
    if not axes or not suite:
        raise ValueError("ablation needs at least one axis and one scene")
    keys = sorted(axes)
    cells = []
    for values in itertools.product(*(axes[k] for k in keys)):
        doc = json.loads(json.dumps(base or {}))
        for k, v in zip(keys, values):
            _set_dotted(doc, k, v)
        cells.append((dict(zip(keys, values)), doc))

    def run(cell):
        setting, doc = cell
        row = dict(setting)
        try:
            report = evaluate_suite(suite, GigaZoomConfig.from_dict(doc))
            row.update(mae=report.mae, mse=report.mse, n=len(report.records), error="")
        except Exception as exc:  # recorded, not fatal
            row.update(mae=float("nan"), mse=float("nan"), n=len(suite), error=str(exc))
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(c) for c in cells]
    return sorted(rows, key=lambda r: tuple(_sort_key(r[k]) for k in keys))


def _sort_key(value):
    # numbers numerically, everything else by its JSON text, numbers first
    if isinstance(value, (int, float)):
        return (0, float(value), "")
    return (1, 0.0, json.dumps(value, sort_keys=True))


def paper_tables(suite: Sequence[SuiteItem], base: dict | None = None) -> dict[str, list[dict]]:
    """The four ablation tables: zoom kind, zoom levels, clustering, overzoom."""
    base = base or {}
    no_mr = json.loads(json.dumps(base))
    _set_dotted(no_mr, "multiregion.enabled", False)
    tables = {
        "zoom_method": run_ablation({"zoom.kind": ["linear", "exponential"]}, suite, base),
        "zoom_levels": run_ablation({"zoom.levels": [5, 10, 20]}, suite, no_mr),
        "overzoom": run_ablation({"zoom.overzoom": [0, 1, 2]}, suite, no_mr),
    }
    off = run_ablation({"multiregion.enabled": [False]}, suite, base)
    on = run_ablation({"multiregion.k": [1, 2, 5]}, suite, {**base, "multiregion": {**base.get("multiregion", {}), "enabled": True}})
    tables["multiple_regions"] = [{"multiregion.k": "-", **r} for r in off] + [
        {"multiregion.enabled": True, **r} for r in on
    ]
    return tables


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format(value, ".10g")
    return str(value)


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    fields = list(rows[0])
    for r in rows[1:]:
        fields += [k for k in r if k not in fields]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for r in rows:
        writer.writerow([_fmt(r.get(k, "")) for k in fields])
    return buf.getvalue()
