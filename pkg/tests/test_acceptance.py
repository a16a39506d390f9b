"""Acceptance gate: one test per criterion, each at its stated tolerance.

Every test records a PASS/FAIL line that is printed in the terminal
summary, then asserts. Shared suites are built once per module.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from conftest import SAMPLE_DMAP, record_acceptance, stub_cmd
from gigazoom.density_map import DensityMap, GridRect, read_dmap, replace_region, resize_mass_preserving
from gigazoom.estimators import (
    CountingEstimator,
    EstimatorError,
    EstimatorRequest,
    ExternalEstimator,
    OracleEstimator,
)
from gigazoom.evaluation import evaluate_suite, load_suite
from gigazoom.geometry import PixelRect, Resolution
from gigazoom.pipeline import GigaZoomConfig, MultiRegionConfig, cluster_centers, gigazoom
from gigazoom.region import window_sums
from gigazoom.scene import SceneParams, generate_scene, render_region
from gigazoom.schedule import exponential_schedule, linear_schedule

SUITE_DOC = {
    "config": {"zoom": {"kind": "exponential", "levels": 6}, "patch": {"w": 1024, "h": 576, "stride": 8}},
    "scenes": [
        {"seed": s, "width": 8192, "height": 4608, "count": [500, 5000], "hotspots": 1 + s % 3} for s in range(20)
    ],
}
DEGRADED = {"blur_per_octave": 2, "bias_per_octave": 0.002, "noise_std": 0.02}


@pytest.fixture(scope="module")
def suite():
    items, base = load_suite(SUITE_DOC)
    return items, base


@pytest.fixture(scope="module")
def degraded_reports(suite):
    items, base = suite
    config = GigaZoomConfig.from_dict({**base, "degradation": DEGRADED})
    return {
        method: evaluate_suite(items, config, method) for method in ("gigazoom", "downsample", "sliding")
    } | {"linear": evaluate_suite(items, GigaZoomConfig.from_dict(
        {**base, "zoom": {"kind": "linear", "levels": 6}, "degradation": DEGRADED}))}


def shifted_sums(values, kw, kh):
    """Window sums by direct accumulation of shifted copies (no prefix sums)."""
    h, w = values.shape
    rows = np.zeros((h, w - kw + 1))
    for dx in range(kw):
        rows += values[:, dx : dx + w - kw + 1]
    out = np.zeros((h - kh + 1, w - kw + 1))
    for dy in range(kh):
        out += rows[dy : dy + h - kh + 1]
    return out


def test_criterion_01_window_sums_vs_brute_force():
    rng = np.random.default_rng(101)
    tic = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        h, w = int(rng.integers(1, 129)), int(rng.integers(1, 129))
        kw, kh = int(rng.integers(1, w + 1)), int(rng.integers(1, h + 1))
        values = rng.random((h, w)).astype(np.float32).astype(np.float64) * rng.uniform(0.01, 10)
        got = window_sums(DensityMap(values), kw, kh).values
        worst = max(worst, float(np.abs(got - shifted_sums(values, kw, kh)).max()))
    elapsed = time.perf_counter() - tic
    ok = worst <= 1e-4 and elapsed < 60
    record_acceptance(1, "window sums vs brute force", ok, f"max abs diff {worst:.2e} over 1000 cases in {elapsed:.1f} s")
    assert ok


def test_criterion_02_schedule_endpoints():
    rng = np.random.default_rng(202)
    failures = 0
    for _ in range(1000):
        wmax, hmax = int(rng.integers(1, 4000)), int(rng.integers(1, 4000))
        w0, h0 = wmax + int(rng.integers(0, 60000)), hmax + int(rng.integers(0, 60000))
        L = int(rng.integers(1, 40))
        for build in (linear_schedule, exponential_schedule):
            s = build(w0, h0, wmax, hmax, L)
            if s[0] != Resolution(w0, h0) or abs(s[L].w - wmax) > 1 or abs(s[L].h - hmax) > 1:
                failures += 1
        s = exponential_schedule(w0, h0, wmax, hmax, L)
        ratio = (wmax / w0) ** (1 / L)
        if any(abs(s[t + 1].w / s[t].w - ratio) > 2 / s[t].w for t in range(L)):
            failures += 1
    ok = failures == 0
    record_acceptance(2, "schedule endpoints and ratio", ok, f"{failures} failures over 1000 tuples x 2 kinds")
    assert ok


def test_criterion_03_mass_conservation():
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(1000):
        h, w = int(rng.integers(1, 80)), int(rng.integers(1, 80))
        dmap = DensityMap(rng.random((h, w)) * rng.uniform(0.01, 100))
        out = resize_mass_preserving(dmap, Resolution(int(rng.integers(1, 80)), int(rng.integers(1, 80))))
        worst = max(worst, abs(out.total() - dmap.total()) / dmap.total())

        rw, rh = int(rng.integers(1, w + 1)), int(rng.integers(1, h + 1))
        rect = GridRect(int(rng.integers(0, w - rw + 1)), int(rng.integers(0, h - rh + 1)), rw, rh)
        sub = DensityMap(rng.random((int(rng.integers(1, 50)), int(rng.integers(1, 50)))))
        replaced = replace_region(dmap, rect, sub)
        expected = dmap.total() - float(dmap.values[rect.slices()].sum()) + sub.total()
        worst = max(worst, abs(replaced.total() - expected) / expected)
    ok = worst <= 1e-6
    record_acceptance(3, "mass conservation", ok, f"max relative error {worst:.2e} over 1000 resize + 1000 replace")
    assert ok


def test_criterion_04_perfect_oracle_end_to_end(suite):
    items, base = suite
    config = GigaZoomConfig.from_dict(base)
    tic = time.perf_counter()
    errors = []
    for item in items:
        count = gigazoom(item.scene, config, OracleEstimator(item.scene)).count
        n = len(item.scene)
        errors.append(abs(count - n) / n)
    elapsed = time.perf_counter() - tic
    ok = max(errors) <= 0.02 and elapsed < 300
    record_acceptance(
        4, "perfect-oracle end to end", ok,
        f"max rel error {max(errors):.3%}, mean {np.mean(errors):.3%} on 20 scenes in {elapsed:.1f} s",
    )
    assert ok


def test_criterion_05_refinement_dominance(degraded_reports):
    gz, down, slide = (degraded_reports[m].mae for m in ("gigazoom", "downsample", "sliding"))
    ok = gz < down and gz < slide
    record_acceptance(
        5, "refinement dominance (degraded oracle)", ok,
        f"MAE gigazoom {gz:.2f}, downsample {down:.2f}, sliding window {slide:.2f}",
    )
    assert ok, "see the decisions ledger for why the degradation model inverts this ordering"


def test_criterion_06_zoom_method_ordering(degraded_reports):
    exp, lin = degraded_reports["gigazoom"].mae, degraded_reports["linear"].mae
    ok = exp <= lin
    record_acceptance(6, "exponential vs linear zoom", ok, f"MAE exponential {exp:.2f}, linear {lin:.2f}")
    assert ok


def test_criterion_07_inference_count():
    scene = generate_scene(SceneParams(Resolution(26908, 15024), (3000, 3000), hotspots=3, seed=7))
    counter = CountingEstimator(OracleEstimator(scene))
    result = gigazoom(scene, GigaZoomConfig(), counter)
    ok = counter.calls == 21 and result.estimator_calls == 21
    record_acceptance(7, "inference count (k=2, L=10)", ok, f"{counter.calls} estimator calls")
    assert ok


@pytest.mark.parametrize("k", [1, 2, 3])
def test_criterion_08_peak_cluster_recovery(k):
    cell = 8192 / 128
    successes, worst = 0, []
    for seed in range(20):
        scene = generate_scene(
            SceneParams(Resolution(8192, 4608), (500, 5000), hotspots=k, hotspot_fraction=1.0, seed=seed)
        )
        d0 = OracleEstimator(scene).estimate(EstimatorRequest(PixelRect(0, 0, 8192, 4608), Resolution(1024, 576)))
        centers = cluster_centers(d0, MultiRegionConfig(k=k))
        truth = np.array(scene.hotspots) / cell - 0.5  # pixel position -> cell index coordinates
        if len(centers) < k:
            worst.append(np.inf)
            continue
        dist = np.linalg.norm(truth[:, None] - centers[None], axis=2)
        rows, cols = linear_sum_assignment(dist)
        worst.append(float(dist[rows, cols].max()))
        successes += worst[-1] <= 5
    ok = successes >= 18
    _merge_criterion_8(k, successes, ok)
    assert ok, f"k={k}: {successes}/20 within 5 cells; worst distances {np.round(worst, 2).tolist()}"


_C8: dict[int, tuple[int, bool]] = {}


def _merge_criterion_8(k, successes, ok):
    _C8[k] = (successes, ok)
    detail = ", ".join(f"k={kk}: {s}/20" for kk, (s, _) in sorted(_C8.items()))
    record_acceptance(8, "peak/cluster recovery (>= 18/20 within 5 cells)", all(o for _, o in _C8.values()), detail)


def _cli(*args):
    proc = subprocess.run([sys.executable, "-m", "gigazoom.cli", *map(str, args)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc


def test_criterion_09_determinism(tmp_path):
    cfg = {**SUITE_DOC["config"], "zoom": {"kind": "exponential", "levels": 4},
           "degradation": {**DEGRADED, "seed": 5}, "multiregion": {"k": 3}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    _cli("gen-scene", "--seed", 9, "--width", 8192, "--height", 4608, "--count", "500,5000", "--out", tmp_path / "s")
    suite = {"config": cfg, "scenes": [{"seed": s, "width": 4096, "height": 2304, "count": [200, 800]} for s in range(2)]}
    (tmp_path / "suite.json").write_text(json.dumps(suite))
    (tmp_path / "axes.json").write_text(json.dumps({"zoom.kind": ["linear", "exponential"], "zoom.levels": [3, 4]}))
    outputs = []
    for i in range(2):
        _cli("run", "--scene", tmp_path / "s" / "scene.json", "--config", tmp_path / "cfg.json", "--out", tmp_path / f"run{i}.dmap")
        _cli("ablate", "--suite", tmp_path / "suite.json", "--axes", tmp_path / "axes.json", "--out", tmp_path / f"abl{i}.csv")
        outputs.append(((tmp_path / f"run{i}.dmap").read_bytes(), (tmp_path / f"abl{i}.csv").read_bytes()))
    ok = outputs[0] == outputs[1]
    record_acceptance(9, "determinism of run and ablate", ok,
                      f"DMAP {len(outputs[0][0])} bytes, CSV {len(outputs[0][1])} bytes identical across 2 invocations" if ok
                      else "outputs differ between invocations")
    assert ok


def test_criterion_10_external_protocol():
    scene = generate_scene(SceneParams(Resolution(512, 384), (50, 50), seed=1))
    rect, patch = PixelRect(0, 0, 512, 384), Resolution(64, 48)
    req = EstimatorRequest(rect, patch, loader=lambda: render_region(scene, rect, patch))

    dmap = ExternalEstimator(stub_cmd("copy", SAMPLE_DMAP)).estimate(req)
    fixture = np.frombuffer(SAMPLE_DMAP.read_bytes()[12:], "<f4")
    round_trip = dmap.values.astype("<f4").tobytes() == fixture.tobytes() and dmap == read_dmap(SAMPLE_DMAP)

    expected_errors = {
        "wrong-dims": "dimension mismatch",
        "bad-magic": "magic",
        "negative": "negative",
        "nan": "non-finite",
        "truncated": "size mismatch",
        "no-output": "no output file",
        "fail": "exited with 3",
    }
    outcomes = {}
    for mode, message in expected_errors.items():
        try:
            ExternalEstimator(stub_cmd(mode)).estimate(req)
            outcomes[mode] = "accepted"
        except EstimatorError as exc:
            outcomes[mode] = "ok" if message in str(exc) else f"wrong error: {exc}"
    try:
        ExternalEstimator(stub_cmd("sleep", "5"), timeout=0.5).estimate(req)
        outcomes["timeout"] = "accepted"
    except EstimatorError as exc:
        outcomes["timeout"] = "ok" if "timed out" in str(exc) else f"wrong error: {exc}"

    bad = {m: o for m, o in outcomes.items() if o != "ok"}
    ok = round_trip and not bad
    record_acceptance(10, "external protocol conformance", ok,
                      f"fixture round trip {'bit-exact' if round_trip else 'MISMATCH'}; "
                      f"{len(outcomes) - len(bad)}/{len(outcomes)} malformed cases raised the specified error")
    assert ok, bad
