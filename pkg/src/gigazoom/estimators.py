"""Density estimators: the contract and its implementations.

An estimator turns a ``patch_res`` grayscale patch into a density map at
``patch_res // stride``. Two implementations ship here:

* :class:`OracleEstimator` reads ground truth from a synthetic scene and
  degrades it as a function of how far the patch was downsampled.
* :class:`ExternalEstimator` shells out to any program speaking the
  PGM-in / DMAP-out file protocol.
"""

from __future__ import annotations

import math
import os
import shlex
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .density_map import DensityMap, DmapFormatError, read_dmap
from .geometry import PixelRect, Resolution
from .scene import Scene, density_on_grid
from .tiled_image import Patch, write_pgm

DEFAULT_STRIDE = 8
DEFAULT_TIMEOUT = 300.0


class EstimatorError(RuntimeError):
    """An estimator failed to produce a valid density map."""


@dataclass(frozen=True)
class EstimatorRequest:
    """One estimator call.

    ``source_rect`` is the level-0 region imaged by the patch. When the
    patch is zero-padded (edge windows of the sliding-window baseline),
    ``content_res`` is the top-left part of the patch that holds source
    pixels; otherwise it equals ``patch_res``.
    """

    source_rect: PixelRect
    patch_res: Resolution
    content_res: Resolution | None = None
    loader: Callable[[], Patch] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.content_res is None:
            object.__setattr__(self, "content_res", self.patch_res)
        if self.content_res.w > self.patch_res.w or self.content_res.h > self.patch_res.h:
            raise ValueError("content larger than patch")

    @property
    def native_scale(self) -> float:
        """Level-0 pixels per patch pixel (< 1 when overzooming)."""
        return self.source_rect.w / self.content_res.w

    @property
    def patch(self) -> Patch:
        if self.loader is None:
            raise EstimatorError("request carries no pixel loader")
        patch = self.loader()
        if patch.res != self.patch_res:
            raise EstimatorError(f"loader returned {patch.res}, expected {self.patch_res}")
        return patch


def output_res(patch_res: Resolution, stride: int) -> Resolution:
    if stride < 1 or stride > min(patch_res.w, patch_res.h):
        raise ValueError(f"stride {stride} incompatible with patch {patch_res}")
    return Resolution(patch_res.w // stride, patch_res.h // stride)


class DensityEstimator:
    """Base class. Subclasses implement :meth:`_estimate`.

    ``thread_safe`` tells the pipeline whether independent zoom chains may
    call :meth:`estimate` concurrently.
    """

    thread_safe = True

    def __init__(self, stride: int = DEFAULT_STRIDE):
        self.stride = stride

    def output_res(self, req: EstimatorRequest) -> Resolution:
        return output_res(req.patch_res, self.stride)

    def estimate(self, req: EstimatorRequest) -> DensityMap:
        expected = self.output_res(req)
        dmap = self._estimate(req)
        if dmap.res != expected:
            raise EstimatorError(f"estimator returned {dmap.res}, expected {expected}")
        return dmap

    def _estimate(self, req: EstimatorRequest) -> DensityMap:
        raise NotImplementedError


@dataclass(frozen=True)
class DegradationParams:
    blur_per_octave: float = 0.0  # cells of sigma per log2(scale)
    bias_per_octave: float = 0.0  # persons per cell per log2(scale)
    noise_std: float = 0.0  # relative, per cell
    seed: int = 0

    def __post_init__(self):
        for name in ("blur_per_octave", "bias_per_octave", "noise_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def from_dict(cls, doc: dict | None) -> "DegradationParams":
        return cls(**(doc or {}))


def _octaves(native_scale: float) -> float:
    return max(0.0, math.log2(native_scale)) if native_scale > 0 else 0.0


def oracle_estimate(
    scene: Scene,
    req: EstimatorRequest,
    deg: DegradationParams,
    stride: int = DEFAULT_STRIDE,
    native_scale: float | None = None,
) -> DensityMap:
    """Ground truth of the request's region, degraded by downsampling octaves.

    ``native_scale`` overrides the request's own scale; the pipeline never
    sets it, tests do.
    """
    out = output_res(req.patch_res, stride)
    rect = req.source_rect
    # cell size in level-0 pixels; padded cells extend past the source rect
    cell_w = rect.w / req.content_res.w * (req.patch_res.w / out.w)
    cell_h = rect.h / req.content_res.h * (req.patch_res.h / out.h)
    values = density_on_grid(scene, rect.x, rect.y, cell_w, cell_h, out.w, out.h)

    octaves = _octaves(req.native_scale if native_scale is None else native_scale)
    if octaves > 0 and deg.blur_per_octave > 0:
        values = ndimage.gaussian_filter(values, deg.blur_per_octave * octaves, mode="reflect")
    if octaves > 0 and deg.bias_per_octave > 0:
        values = values + deg.bias_per_octave * octaves
    if deg.noise_std > 0:
        key = [deg.seed, rect.x, rect.y, rect.w, rect.h, req.patch_res.w, req.patch_res.h, stride]
        rng = np.random.default_rng(key)
        values = values * (1.0 + rng.normal(0.0, deg.noise_std, values.shape))
    return DensityMap(np.maximum(values, 0.0))


class OracleEstimator(DensityEstimator):
    """Synthetic estimator backed by a scene's exact annotations."""

    def __init__(self, scene: Scene, degradation: DegradationParams | None = None,
                 stride: int = DEFAULT_STRIDE):
        super().__init__(stride)
        self.scene = scene
        self.degradation = degradation or DegradationParams()

    def _estimate(self, req: EstimatorRequest) -> DensityMap:
        return oracle_estimate(self.scene, req, self.degradation, self.stride)


def external_estimate(
    cmd_template: str,
    req: EstimatorRequest,
    stride: int = DEFAULT_STRIDE,
    timeout: float = DEFAULT_TIMEOUT,
) -> DensityMap:
    """Run ``cmd_template`` with ``{input}``/``{output}`` filled in.

    The patch is written as binary PGM to ``{input}``; the program must
    write a DMAP of ``patch_res // stride`` cells to ``{output}`` and exit 0.
    """
    if "{input}" not in cmd_template or "{output}" not in cmd_template:
        raise ValueError("command template needs {input} and {output} placeholders")
    expected = output_res(req.patch_res, stride)
    with tempfile.TemporaryDirectory(prefix="gigazoom-") as tmp:
        src = os.path.join(tmp, "patch.pgm")
        dst = os.path.join(tmp, "density.dmap")
        write_pgm(src, req.patch.pixels)
        argv = shlex.split(cmd_template.format(input=shlex.quote(src), output=shlex.quote(dst)))
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            raise EstimatorError(f"external estimator timed out after {timeout:g} s") from exc
        except OSError as exc:
            raise EstimatorError(f"cannot run external estimator: {exc}") from exc
        if proc.returncode != 0:
            stderr = proc.stderr.decode(errors="replace").strip()
            raise EstimatorError(f"external estimator exited with {proc.returncode}: {stderr}")
        if not os.path.exists(dst):
            raise EstimatorError("external estimator produced no output file")
        try:
            dmap = read_dmap(dst)
        except DmapFormatError as exc:
            raise EstimatorError(f"malformed DMAP from external estimator: {exc}") from exc
    if dmap.res != expected:
        raise EstimatorError(f"dimension mismatch: got {dmap.res}, expected {expected} (stride {stride})")
    return dmap


class ExternalEstimator(DensityEstimator):
    """Subprocess-backed estimator. Runs one process per call."""

    def __init__(self, cmd_template: str, stride: int = DEFAULT_STRIDE,
                 timeout: float = DEFAULT_TIMEOUT, thread_safe: bool = False):
        super().__init__(stride)
        if "{input}" not in cmd_template or "{output}" not in cmd_template:
            raise ValueError("command template needs {input} and {output} placeholders")
        self.cmd_template = cmd_template
        self.timeout = timeout
        self.thread_safe = thread_safe

    def _estimate(self, req: EstimatorRequest) -> DensityMap:
        return external_estimate(self.cmd_template, req, self.stride, self.timeout)


class CountingEstimator(DensityEstimator):
    """Wraps another estimator and records every request it forwards."""

    def __init__(self, inner: DensityEstimator):
        super().__init__(inner.stride)
        self.inner = inner
        self.thread_safe = inner.thread_safe
        self.requests: list[EstimatorRequest] = []
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return len(self.requests)

    def _estimate(self, req: EstimatorRequest) -> DensityMap:
        with self._lock:
            self.requests.append(req)
        return self.inner.estimate(req)
