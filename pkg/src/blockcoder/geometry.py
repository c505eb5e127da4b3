"""Pixel-grid geometry primitives.

Coordinates use a top-left origin with y growing downward. A box covers
the half-open pixel range [x, x + w) x [y, y + h), so two boxes that
merely share an edge do not intersect.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

Orientation = Literal["horizontal", "vertical"]

HORIZONTAL: Orientation = "horizontal"
VERTICAL: Orientation = "vertical"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel rectangle with a positive size."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box size must be positive, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"box origin must be non-negative, got ({self.x}, {self.y})")

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def contains_box(self, other: "BBox") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.right <= self.right
            and other.bottom <= self.bottom
        )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)

    @classmethod
    def from_sequence(cls, values) -> "BBox":
        x, y, w, h = (int(v) for v in values)
        return cls(x, y, w, h)


def bbox_intersects(a: BBox, b: BBox) -> bool:
    """True iff the two boxes share at least one pixel."""
    return a.x < b.right and b.x < a.right and a.y < b.bottom and b.y < a.bottom


def bbox_union(a: BBox, b: BBox) -> BBox:
    """Smallest box containing both inputs."""
    x = min(a.x, b.x)
    y = min(a.y, b.y)
    return BBox(x, y, max(a.right, b.right) - x, max(a.bottom, b.bottom) - y)


@dataclass(frozen=True)
class Line:
    """A single pixel row or column cutting through `span`.

    `offset` is a row index for horizontal lines and a column index for
    vertical ones, and must lie strictly inside the span along the cut
    axis: a line sitting on a region edge cannot split it.
    """

    orientation: Orientation
    offset: int
    span: BBox

    def __post_init__(self):
        if self.orientation == HORIZONTAL:
            lo, hi = self.span.y, self.span.bottom
        elif self.orientation == VERTICAL:
            lo, hi = self.span.x, self.span.right
        else:
            raise ValueError(f"unknown orientation: {self.orientation!r}")
        if not lo < self.offset < hi:
            raise ValueError(
                f"line offset {self.offset} not strictly inside [{lo}, {hi})"
            )


def offset_crosses_bbox(orientation: Orientation, offset: int, span: BBox, box: BBox) -> bool:
    """Line-crossing test on raw scan coordinates (see line_crosses_bbox)."""
    if orientation == HORIZONTAL:
        inside = box.y < offset < box.bottom
        overlaps = span.x < box.right and box.x < span.right
    else:
        inside = box.x < offset < box.right
        overlaps = span.y < box.bottom and box.y < span.bottom
    return inside and overlaps


def line_crosses_bbox(line: Line, box: BBox) -> bool:
    """True iff splitting at this line would cut the box in two.

    The offset must fall strictly between the box edges along the cut
    axis (grazing an edge does not split), and the line's span must
    overlap the box along the other axis.
    """
    return offset_crosses_bbox(line.orientation, line.offset, line.span, box)
