"""Integer rectangles and resolutions shared by the image and density code."""

from __future__ import annotations

import math
from dataclasses import dataclass


def round_half_up(value: float) -> int:
    """Round to the nearest integer, halves away from zero for positives."""
    return int(math.floor(value + 0.5))


@dataclass(frozen=True, order=True)
class Resolution:
    w: int
    h: int

    def __post_init__(self):
        if int(self.w) != self.w or int(self.h) != self.h:
            raise ValueError(f"resolution must be integral, got {self.w}x{self.h}")
        if self.w < 1 or self.h < 1:
            raise ValueError(f"resolution must be at least 1x1, got {self.w}x{self.h}")
        object.__setattr__(self, "w", int(self.w))
        object.__setattr__(self, "h", int(self.h))

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def shape(self) -> tuple[int, int]:
        """Numpy (rows, cols) shape."""
        return (self.h, self.w)

    def __str__(self):
        return f"{self.w}x{self.h}"

    @classmethod
    def parse(cls, text: str) -> "Resolution":
        w, h = text.lower().split("x")
        return cls(int(w), int(h))


@dataclass(frozen=True)
class PixelRect:
    """Axis-aligned rectangle in level-0 pixel coordinates."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if int(value) != value:
                raise ValueError(f"rect {name} must be integral, got {value}")
            object.__setattr__(self, name, int(value))
        if self.x < 0 or self.y < 0:
            raise ValueError(f"rect origin must be non-negative, got ({self.x}, {self.y})")
        if self.w < 1 or self.h < 1:
            raise ValueError(f"rect size must be at least 1x1, got {self.w}x{self.h}")

    @classmethod
    def from_size(cls, x: int, y: int, size: Resolution) -> "PixelRect":
        return cls(x, y, size.w, size.h)

    @classmethod
    def full(cls, canvas: Resolution) -> "PixelRect":
        return cls(0, 0, canvas.w, canvas.h)

    @classmethod
    def parse(cls, text: str) -> "PixelRect":
        x, y, w, h = (int(v) for v in text.split(","))
        return cls(x, y, w, h)

    @property
    def size(self) -> Resolution:
        return Resolution(self.w, self.h)

    @property
    def x1(self) -> int:
        return self.x + self.w

    @property
    def y1(self) -> int:
        return self.y + self.h

    def within(self, canvas: Resolution) -> bool:
        return self.x1 <= canvas.w and self.y1 <= canvas.h

    def contains(self, other: "PixelRect") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )

    def intersection(self, other: "PixelRect") -> "PixelRect | None":
        x0, y0 = max(self.x, other.x), max(self.y, other.y)
        x1, y1 = min(self.x1, other.x1), min(self.y1, other.y1)
        if x1 <= x0 or y1 <= y0:
            return None
        return PixelRect(x0, y0, x1 - x0, y1 - y0)

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


def check_rect_in_canvas(rect: PixelRect, canvas: Resolution) -> None:
    if not rect.within(canvas):
        raise ValueError(f"rect {rect.as_list()} exceeds canvas {canvas}")
