"""Axis-aligned rectangles in pixel coordinates."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Rect:
    """Rectangle given as (x, y, w, h); x grows rightward, y downward."""

    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return max(self.w, 0.0) * max(self.h, 0.0)

    @property
    def x1(self) -> float:
        return self.x + self.w

    @property
    def y1(self) -> float:
        return self.y + self.h

    def intersection(self, other: "Rect") -> "Rect":
        x0 = max(self.x, other.x)
        y0 = max(self.y, other.y)
        x1 = min(self.x1, other.x1)
        y1 = min(self.y1, other.y1)
        return Rect(x0, y0, x1 - x0, y1 - y0)

    def contains_rect(self, other: "Rect") -> bool:
        return (
            other.x >= self.x
            and other.y >= self.y
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_any(cls, value) -> "Rect":
        """Accept a Rect, a (x, y, w, h) sequence, or a mapping with those keys."""
        if isinstance(value, Rect):
            return value
        if isinstance(value, dict):
            return cls(float(value["x"]), float(value["y"]), float(value["w"]), float(value["h"]))
        x, y, w, h = value
        return cls(float(x), float(y), float(w), float(h))
