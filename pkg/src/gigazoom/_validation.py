"""Input checks shared by the estimator facade and the CLI."""

from __future__ import annotations

from collections.abc import Sequence

from .geometry import Resolution


def check_sources(X) -> list:
    """Return ``X`` as a list of image sources (scenes or tiled images)."""
    if hasattr(X, "read_region"):
        X = [X]
    if not isinstance(X, Sequence) or isinstance(X, (str, bytes)):
        raise TypeError(f"expected a sequence of scenes or tiled images, got {type(X).__name__}")
    for i, source in enumerate(X):
        if not (hasattr(source, "read_region") and hasattr(source, "canvas")):
            raise TypeError(f"item {i} ({type(source).__name__}) is not an image source")
    if not X:
        raise ValueError("need at least one image")
    return list(X)


def check_patch(patch) -> Resolution:
    if isinstance(patch, Resolution):
        return patch
    if isinstance(patch, str):
        return Resolution.parse(patch)
    w, h = patch
    return Resolution(int(w), int(h))


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
