"""Command-line interface. Exit codes: 0 ok, 1 usage error, 2 runtime failure."""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from .density_map import read_dmap, total_count, write_dmap
from .estimators import ExternalEstimator, OracleEstimator
from .evaluation import (
    EvalReport,
    baseline_downsample,
    baseline_sliding_window,
    config_fingerprint,
    load_suite,
    paper_tables,
    rows_to_csv,
    run_ablation,
)
from .geometry import PixelRect, Resolution
from .pipeline import GigaZoomConfig, gigazoom, write_trace_bundle
from .scene import Scene, SceneParams, generate_scene, ground_truth_density, region_head_count, render_region
from .tiled_image import GigaImage, build_tiled

log = logging.getLogger("gigazoom")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _count_range(text: str) -> tuple[int, int]:
    if "," in text:
        lo, hi = text.split(",")
        return int(lo), int(hi)
    return int(text), int(text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gigazoom", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-scene", help="generate a synthetic crowd scene")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--count", type=_count_range, required=True, help="N or LO,HI")
    p.add_argument("--hotspots", type=int, default=3)
    p.add_argument("--hotspot-fraction", type=float, default=0.8)
    p.add_argument("--out", required=True, help="output directory (scene.json)")

    p = sub.add_parser("build-tiles", help="render a scene into a tiled PGM image")
    p.add_argument("--scene", required=True)
    p.add_argument("--tile-size", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gt", help="ground-truth density map of a scene region")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rect", type=PixelRect.parse, help="x,y,w,h (default: full canvas)")
    p.add_argument("--res", type=Resolution.parse, help="output WxH (default: rect / stride)")
    p.add_argument("--stride", type=int, default=8)

    p = sub.add_parser("run", help="count with iterative zooming")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene")
    src.add_argument("--tiles")
    p.add_argument("--config")
    p.add_argument("--estimator", choices=["oracle", "external"], default="oracle")
    p.add_argument("--ext-cmd", help='e.g. "model.py {input} {output}"')
    p.add_argument("--ext-timeout", type=float, default=300.0)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")

    p = sub.add_parser("baseline", help="downsample-only or sliding-window baseline")
    p.add_argument("--kind", choices=["downsample", "sliding"], required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene")
    src.add_argument("--tiles")
    p.add_argument("--config")
    p.add_argument("--estimator", choices=["oracle", "external"], default="oracle")
    p.add_argument("--ext-cmd")
    p.add_argument("--ext-timeout", type=float, default=300.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="MAE/MSE of predicted maps against scenes")
    p.add_argument("--pred", action="append", required=True)
    p.add_argument("--scene", action="append", required=True)
    p.add_argument("--report", required=True)

    p = sub.add_parser("ablate", help="sweep config axes over a scene suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--axes", help="JSON of dotted config keys to value lists")
    p.add_argument("--paper-tables", action="store_true", help="run the four standard ablation tables")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    return parser


# --- helpers -----------------------------------------------------------------


def _config(path) -> GigaZoomConfig:
    return GigaZoomConfig.load(path) if path else GigaZoomConfig()


def _source_and_scene(args):
    if args.tiles:
        image = GigaImage(args.tiles)
        scene_path = Path(args.tiles) / "scene.json"
        scene = Scene.load(scene_path) if scene_path.exists() else None
        return image, scene
    scene = Scene.load(args.scene)
    return scene, scene


def _estimator(args, scene, config):
    if args.estimator == "external":
        if not args.ext_cmd:
            raise UsageError("--estimator external requires --ext-cmd")
        return ExternalEstimator(args.ext_cmd, config.stride, args.ext_timeout)
    if scene is None:
        raise UsageError("the oracle estimator needs a scene (scene.json next to the tiles)")
    return OracleEstimator(scene, config.degradation, config.stride)


def _summary(**fields):
    print(json.dumps(fields, sort_keys=True))


# --- commands ----------------------------------------------------------------


def cmd_gen_scene(args):
    params = SceneParams(
        Resolution(args.width, args.height),
        count_range=args.count,
        hotspots=args.hotspots,
        hotspot_fraction=args.hotspot_fraction,
        seed=args.seed,
    )
    scene = generate_scene(params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene.save(out / "scene.json")
    _summary(scene=str(out / "scene.json"), heads=len(scene))


def cmd_build_tiles(args):
    scene = Scene.load(args.scene)
    img = build_tiled(lambda r: render_region(scene, r, r.size).pixels, args.out, args.tile_size, scene.canvas)
    shutil.copyfile(args.scene, Path(args.out) / "scene.json")
    rows, cols = img.grid
    _summary(tiles=rows * cols, grid=[rows, cols], out=args.out)


def cmd_gt(args):
    scene = Scene.load(args.scene)
    rect = args.rect or PixelRect.full(scene.canvas)
    res = args.res or Resolution(max(1, rect.w // args.stride), max(1, rect.h // args.stride))
    dmap = ground_truth_density(scene, rect, res)
    write_dmap(args.out, dmap)
    _summary(count=total_count(dmap), heads_in_rect=region_head_count(scene, rect), res=str(res))


def cmd_run(args):
    config = _config(args.config)
    source, scene = _source_and_scene(args)
    estimator = _estimator(args, scene, config)
    result = gigazoom(source, config, estimator)
    write_dmap(args.out, result.density)
    if args.trace:
        write_trace_bundle(result, args.trace)
    _summary(
        count=result.count,
        coarse_count=total_count(result.coarse),
        estimator_calls=result.estimator_calls,
        chains=len(result.chains),
        failed_chains=[c.error for c in result.failed],
        config_fingerprint=config_fingerprint(config),
    )
    return 2 if result.failed and len(result.failed) == len(result.chains) else 0


def cmd_baseline(args):
    config = _config(args.config)
    source, scene = _source_and_scene(args)
    estimator = _estimator(args, scene, config)
    if args.kind == "downsample":
        result = baseline_downsample(source, estimator, config.patch)
    else:
        result = baseline_sliding_window(source, estimator, config.patch)
    write_dmap(args.out, result.density)
    _summary(count=result.count, estimator_calls=result.calls, windows=result.windows)


def cmd_eval(args):
    if len(args.pred) != len(args.scene):
        raise UsageError("--pred and --scene must be given the same number of times")
    preds, gts = [], []
    for pred_path, scene_path in zip(args.pred, args.scene):
        scene = Scene.load(scene_path)
        preds.append(total_count(read_dmap(pred_path)))
        gts.append(region_head_count(scene, PixelRect.full(scene.canvas)))
    report = EvalReport.from_predictions(args.scene, preds, gts)
    Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    _summary(mae=report.mae, mse=report.mse, n=len(preds))


def cmd_ablate(args):
    suite, base = load_suite(args.suite)
    if args.paper_tables:
        rows = []
        for name, table in paper_tables(suite, base).items():
            rows += [{"table": name, **r} for r in table]
    else:
        if not args.axes:
            raise UsageError("ablate needs --axes or --paper-tables")
        axes = json.loads(Path(args.axes).read_text())
        rows = run_ablation(axes, suite, base, workers=args.workers)
    out = Path(args.out)
    out.write_text(rows_to_csv(rows))
    out.with_suffix(".json").write_text(json.dumps(rows, indent=2, sort_keys=True, default=str) + "\n")
    _summary(rows=len(rows), out=str(out))


COMMANDS = {
    "gen-scene": cmd_gen_scene,
    "build-tiles": cmd_build_tiles,
    "gt": cmd_gt,
    "run": cmd_run,
    "baseline": cmd_baseline,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args) or 0
    except UsageError as exc:
        print(f"gigazoom: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.debug("command failed", exc_info=True)
        print(f"gigazoom: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
