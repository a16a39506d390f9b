"""Zoom schedules: the window size used at each zoom level."""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import Resolution, round_half_up

KINDS = ("linear", "exponential")


@dataclass(frozen=True)
class ZoomSchedule:
    kind: str
    levels: int
    overzoom: int
    start: Resolution
    target: Resolution
    dims: tuple[Resolution, ...]

    def __len__(self):
        return len(self.dims)

    def __getitem__(self, t: int) -> Resolution:
        return self.dims[t]

    @property
    def last(self) -> int:
        return len(self.dims) - 1


def _check(w0, h0, wmax, hmax, levels):
    if levels < 1:
        raise ValueError(f"zoom levels must be >= 1, got {levels}")
    if not (w0 >= wmax >= 1 and h0 >= hmax >= 1):
        raise ValueError(
            f"need canvas >= max patch >= 1 on both axes, got canvas {w0}x{h0}, patch {wmax}x{hmax}"
        )


def _linear_dim(d0: int, dmax: int, levels: int, t: int) -> float:
    return d0 - t * (d0 - dmax) / levels


def _exponential_dim(d0: int, dmax: int, levels: int, t: int) -> float:
    return d0 * (dmax / d0) ** (t / levels)


_FORMULAS = {"linear": _linear_dim, "exponential": _exponential_dim}


def _dims(kind, w0, h0, wmax, hmax, levels, count):
    formula = _FORMULAS[kind]
    out = []
    for t in range(count):
        w = formula(w0, wmax, levels, t)
        h = formula(h0, hmax, levels, t)
        if w < 1 or h < 1:
            raise ValueError(f"{kind} zoom level {t} would be below 1 px ({w:.2f}x{h:.2f})")
        out.append(Resolution(max(1, round_half_up(w)), max(1, round_half_up(h))))
    return tuple(out)


def linear_schedule(w0: int, h0: int, wmax: int, hmax: int, levels: int) -> ZoomSchedule:
    """Window sizes shrinking by a constant step per level."""
    _check(w0, h0, wmax, hmax, levels)
    dims = _dims("linear", w0, h0, wmax, hmax, levels, levels + 1)
    return ZoomSchedule("linear", levels, 0, Resolution(w0, h0), Resolution(wmax, hmax), dims)


def exponential_schedule(w0: int, h0: int, wmax: int, hmax: int, levels: int) -> ZoomSchedule:
    """Window sizes shrinking by a constant ratio per level."""
    _check(w0, h0, wmax, hmax, levels)
    dims = _dims("exponential", w0, h0, wmax, hmax, levels, levels + 1)
    return ZoomSchedule("exponential", levels, 0, Resolution(w0, h0), Resolution(wmax, hmax), dims)


def extend_overzoom(schedule: ZoomSchedule, extra: int) -> ZoomSchedule:
    """Continue the schedule's own formula for ``extra`` levels past the target.

    Levels beyond ``levels`` are smaller than the estimator patch, so their
    regions get upsampled before estimation.
    """
    if extra < 0:
        raise ValueError(f"overzoom levels must be >= 0, got {extra}")
    if extra == 0:
        return schedule
    s, t = schedule.start, schedule.target
    count = schedule.levels + schedule.overzoom + extra + 1
    dims = _dims(schedule.kind, s.w, s.h, t.w, t.h, schedule.levels, count)
    return ZoomSchedule(schedule.kind, schedule.levels, schedule.overzoom + extra, s, t, dims)


def make_schedule(
    kind: str, canvas: Resolution, patch: Resolution, levels: int, overzoom: int = 0
) -> ZoomSchedule:
    if kind not in _FORMULAS:
        raise ValueError(f"zoom kind must be one of {KINDS}, got {kind!r}")
    build = linear_schedule if kind == "linear" else exponential_schedule
    return extend_overzoom(build(canvas.w, canvas.h, patch.w, patch.h, levels), overzoom)
