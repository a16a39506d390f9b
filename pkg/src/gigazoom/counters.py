"""scikit-learn style wrappers: ``fit`` / ``predict`` over lists of images.

Nothing here is trained; ``fit`` only validates hyper-parameters and
freezes the configuration, so the counters compose with ``clone``,
``get_params``/``set_params`` and grid searches over those parameters.

>>> from gigazoom import GigaZoomCounter
>>> counter = GigaZoomCounter(levels=6, patch_size=(1024, 576)).fit(scenes)  # doctest: +SKIP
>>> counter.predict(scenes)  # doctest: +SKIP
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_patch, check_positive_int, check_sources
from .density_map import DensityMap
from .estimators import DegradationParams, DensityEstimator, OracleEstimator
from .evaluation import baseline_downsample, baseline_sliding_window, mae_mse, SLIDING_SCALES
from .pipeline import GigaZoomConfig, MultiRegionConfig, gigazoom
from .scene import Scene


class _CounterBase(RegressorMixin, BaseEstimator):
    """Shared estimator plumbing. ``score`` is the negated MAE."""

    def _estimator_for(self, source, spec) -> DensityEstimator:
        if spec == "oracle":
            if not isinstance(source, Scene):
                raise TypeError("the oracle estimator needs Scene inputs")
            return OracleEstimator(source, self.degradation_, self.stride)
        if isinstance(spec, DensityEstimator):
            return spec
        if callable(spec):
            return spec(source)
        raise ValueError(f"estimator must be 'oracle', a DensityEstimator or a factory, got {spec!r}")

    def _validate_common(self):
        self.patch_ = check_patch(self.patch_size)
        check_positive_int(self.stride, "stride")
        self.degradation_ = DegradationParams.from_dict(self.degradation)

    def predict(self, X) -> np.ndarray:
        return np.array([dmap.total() for dmap in self.predict_density(X)])

    def score(self, X, y, sample_weight=None) -> float:
        mae, _ = mae_mse(self.predict(X), np.asarray(y, dtype=np.float64))
        return -mae


class GigaZoomCounter(_CounterBase):
    """Crowd counter that zooms into dense regions and refines the coarse map.

    Parameters
    ----------
    zoom_kind : {"exponential", "linear"}
    levels : int
        Zoom levels from the full canvas to the estimator patch size.
    overzoom : int
        Extra levels past the 1:1 pixel ratio.
    patch_size : (int, int)
        Largest input the density estimator accepts.
    stride : int
        Ratio between patch and density-map resolution.
    multiregion : bool
        Start one zoom chain per k-means cluster of density peaks instead
        of a single chain at the densest window.
    n_clusters, smooth_sigma, smooth_radius, peak_threshold, kmeans_seed
        Region-planning settings.
    estimator : "oracle", DensityEstimator or callable
        Coarse-level estimator; a callable receives the image source.
    refine_estimator : same as ``estimator`` or None
        Estimator for zoomed levels; defaults to ``estimator``.
    degradation : dict or None
        :class:`~gigazoom.estimators.DegradationParams` for oracle estimators.
    """

    def __init__(
        self,
        zoom_kind="exponential",
        levels=10,
        overzoom=0,
        patch_size=(2560, 1440),
        stride=8,
        multiregion=True,
        n_clusters=2,
        smooth_sigma=4.0,
        smooth_radius=7,
        peak_threshold=0.1,
        kmeans_seed=0,
        placement="exact",
        estimator="oracle",
        refine_estimator=None,
        degradation=None,
        workers=1,
    ):
        self.zoom_kind = zoom_kind
        self.levels = levels
        self.overzoom = overzoom
        self.patch_size = patch_size
        self.stride = stride
        self.multiregion = multiregion
        self.n_clusters = n_clusters
        self.smooth_sigma = smooth_sigma
        self.smooth_radius = smooth_radius
        self.peak_threshold = peak_threshold
        self.kmeans_seed = kmeans_seed
        self.placement = placement
        self.estimator = estimator
        self.refine_estimator = refine_estimator
        self.degradation = degradation
        self.workers = workers

    def fit(self, X=None, y=None):
        self._validate_common()
        self.config_ = GigaZoomConfig(
            kind=self.zoom_kind,
            levels=check_positive_int(self.levels, "levels"),
            overzoom=check_positive_int(self.overzoom, "overzoom", minimum=0),
            patch=self.patch_,
            stride=self.stride,
            multiregion=MultiRegionConfig(
                enabled=bool(self.multiregion),
                sigma=self.smooth_sigma,
                radius=self.smooth_radius,
                lam=self.peak_threshold,
                k=check_positive_int(self.n_clusters, "n_clusters"),
                seed=self.kmeans_seed,
            ),
            degradation=self.degradation_,
            placement=self.placement,
            workers=check_positive_int(self.workers, "workers"),
        )
        if X is not None:
            for source in check_sources(X):
                self.config_.schedule(source.canvas)  # raises on canvas smaller than patch
        return self

    def zoom(self, source):
        """Full pipeline result (density, coarse map, chains) for one image."""
        check_is_fitted(self, "config_")
        coarse = self._estimator_for(source, self.estimator)
        refine = None if self.refine_estimator is None else self._estimator_for(source, self.refine_estimator)
        return gigazoom(source, self.config_, coarse, refine)

    def predict_density(self, X) -> list[DensityMap]:
        return [self.zoom(source).density for source in check_sources(X)]


class DownsampleCounter(_CounterBase):
    """Single estimate of the whole image shrunk to one patch."""

    def __init__(self, patch_size=(2560, 1440), stride=8, estimator="oracle", degradation=None):
        self.patch_size = patch_size
        self.stride = stride
        self.estimator = estimator
        self.degradation = degradation

    def fit(self, X=None, y=None):
        self._validate_common()
        return self

    def predict_density(self, X) -> list[DensityMap]:
        check_is_fitted(self, "patch_")
        return [
            baseline_downsample(s, self._estimator_for(s, self.estimator), self.patch_).density
            for s in check_sources(X)
        ]


class SlidingWindowCounter(_CounterBase):
    """Multi-scale non-overlapping tiling with averaged per-scale maps."""

    def __init__(self, patch_size=(2560, 1440), stride=8, scales=SLIDING_SCALES,
                 estimator="oracle", degradation=None):
        self.patch_size = patch_size
        self.stride = stride
        self.scales = scales
        self.estimator = estimator
        self.degradation = degradation

    def fit(self, X=None, y=None):
        self._validate_common()
        if not self.scales or any(s <= 0 or s > 1 for s in self.scales):
            raise ValueError(f"scales must lie in (0, 1], got {self.scales!r}")
        return self

    def predict_density(self, X) -> list[DensityMap]:
        check_is_fitted(self, "patch_")
        return [
            baseline_sliding_window(s, self._estimator_for(s, self.estimator), self.patch_, self.scales).density
            for s in check_sources(X)
        ]
