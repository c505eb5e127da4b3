"""Recursive layout-aware division of a design raster.

A region is cut along dividing lines: single pixel rows or columns that
are solid-colored along their whole span (checked on a sampled grid with
the first and last few pixels ignored), that do not cut through any text
region, and that keep a minimum distance from each other and from the
region edges. Scanning visits rows first; only if no row qualifies are
columns scanned. The search recurses into sub-regions up to a depth
limit, and undersized leaf blocks are merged into neighbors afterwards.

Two guards keep the scan sane on degenerate inputs: a region whose
sampled interior is entirely one color yields no lines at all, and a run
of consecutive same-colored solid lines (a thick divider bar, or the
whole expanse of a blank area) collapses to a single candidate at the
run's first sampled offset.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from PIL import ImageDraw

from .geometry import (
    HORIZONTAL,
    VERTICAL,
    BBox,
    Line,
    Orientation,
    bbox_intersects,
    bbox_union,
    offset_crosses_bbox,
)
from .raster import Raster
from .textregions import TextRegion

log = logging.getLogger(__name__)

DEFAULT_MIN_BLOCK_AREA = 300 * 300


@dataclass(frozen=True)
class DividerParams:
    grid_interval: int = 5
    min_line_distance: int = 50
    edge_ignore: int = 10
    max_depth: int = 3
    min_block_area: int = DEFAULT_MIN_BLOCK_AREA
    color_tolerance: int = 2

    def __post_init__(self):
        if self.grid_interval < 1:
            raise ValueError("grid_interval must be >= 1")
        if self.min_line_distance < 1:
            raise ValueError("min_line_distance must be >= 1")
        if self.edge_ignore < 0:
            raise ValueError("edge_ignore must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_block_area < 0:
            raise ValueError("min_block_area must be >= 0")
        if not 0 <= self.color_tolerance <= 255:
            raise ValueError("color_tolerance must be in [0, 255]")


@dataclass
class SplitNode:
    """One region visited during division, with the cut made there."""

    region: BBox
    direction: Optional[Orientation] = None
    offsets: list = field(default_factory=list)
    children: list = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def to_dict(self) -> dict:
        return {
            "region": list(self.region.as_tuple()),
            "direction": self.direction,
            "offsets": list(self.offsets),
            "children": [c.to_dict() for c in self.children],
        }

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class DivisionResult:
    blocks: tuple
    split_tree: SplitNode

    def to_blocks_payload(self, canvas_w: int, canvas_h: int) -> dict:
        return {
            "canvas": [canvas_w, canvas_h],
            "blocks": [list(b.as_tuple()) for b in self.blocks],
        }


def _line_samples(
    image: Raster, orientation: Orientation, offset: int, span: BBox, params: DividerParams
) -> Optional[np.ndarray]:
    """Sampled pixels along one candidate line, or None if too few."""
    if orientation == HORIZONTAL:
        lo = span.x + params.edge_ignore
        hi = span.right - params.edge_ignore
    else:
        lo = span.y + params.edge_ignore
        hi = span.bottom - params.edge_ignore
    if hi - lo < params.grid_interval + 1:
        # Fewer than two sample positions at this stride.
        return None
    if orientation == HORIZONTAL:
        return image.array[offset, lo:hi:params.grid_interval]
    return image.array[lo:hi:params.grid_interval, offset]


def _samples_solid(samples: np.ndarray, tolerance: int) -> bool:
    diff = samples.astype(np.int16) - samples[0].astype(np.int16)
    return bool(np.abs(diff).max() <= tolerance)


def is_solid_line(image: Raster, line: Line, params: DividerParams) -> bool:
    """True iff every sampled pixel matches the first one within tolerance."""
    samples = _line_samples(image, line.orientation, line.offset, line.span, params)
    if samples is None:
        return False
    return _samples_solid(samples, params.color_tolerance)


def region_is_uniform(image: Raster, region: BBox, params: DividerParams) -> bool:
    """Whether the region's sampled interior is a single color.

    Sampling uses the scan stride and skips an edge_ignore margin on all
    four sides, mirroring what the line scanner can actually see, so an
    edge defect does not make an otherwise blank region look divisible.
    """
    e = params.edge_ignore
    sub = image.array[
        region.y + e : region.bottom - e : params.grid_interval,
        region.x + e : region.right - e : params.grid_interval,
    ]
    if sub.size == 0:
        return True
    diff = sub.astype(np.int16) - sub[0, 0].astype(np.int16)
    return bool(np.abs(diff).max() <= params.color_tolerance)


def _scan_direction(
    image: Raster,
    region: BBox,
    text_regions: Sequence[TextRegion],
    params: DividerParams,
    orientation: Orientation,
) -> list:
    """One-direction scan: collapse solid runs, then apply spacing rules."""
    if orientation == HORIZONTAL:
        start, end = region.y, region.bottom
    else:
        start, end = region.x, region.right
    boxes = [t.box for t in text_regions]
    tol = params.color_tolerance

    def crosses_text(offset: int) -> bool:
        return any(offset_crosses_bbox(orientation, offset, region, b) for b in boxes)

    # Collapse each run of consecutive same-colored solid lines to one
    # candidate at the run's first sampled offset.
    candidates: list = []
    run_color: Optional[np.ndarray] = None
    for offset in range(start, end, params.grid_interval):
        samples = _line_samples(image, orientation, offset, region, params)
        if samples is None or not _samples_solid(samples, tol):
            run_color = None
            continue
        color = samples[0].astype(np.int16)
        if run_color is not None and np.abs(color - run_color).max() <= tol:
            continue
        run_color = color
        candidates.append(offset)

    # Acceptance: clear of text regions, minimum spacing from the
    # previously accepted line (initially the leading edge), and the last
    # line must keep the minimum distance to the trailing edge.
    accepted: list = []
    previous = start
    for offset in candidates:
        if offset - previous < params.min_line_distance or crosses_text(offset):
            continue
        accepted.append(offset)
        previous = offset
    if accepted and end - accepted[-1] < params.min_line_distance:
        accepted.pop()
    return [Line(orientation, offset, region) for offset in accepted]


def find_dividing_lines(
    image: Raster,
    region: BBox,
    text_regions: Sequence[TextRegion],
    params: DividerParams,
) -> list:
    """Dividing lines for one region: rows first, columns as a fallback."""
    if region_is_uniform(image, region, params):
        return []
    for orientation in (HORIZONTAL, VERTICAL):
        lines = _scan_direction(image, region, text_regions, params, orientation)
        if lines:
            return lines
    return []


def _cut_region(region: BBox, orientation: Orientation, offsets: Sequence[int]) -> list:
    """Split a region at the given offsets; each line starts the next part."""
    if orientation == HORIZONTAL:
        stops = [region.y, *offsets, region.bottom]
        return [
            BBox(region.x, stops[i], region.w, stops[i + 1] - stops[i])
            for i in range(len(stops) - 1)
        ]
    stops = [region.x, *offsets, region.right]
    return [
        BBox(stops[i], region.y, stops[i + 1] - stops[i], region.h)
        for i in range(len(stops) - 1)
    ]


def _split_region(
    image: Raster,
    region: BBox,
    text_regions: Sequence[TextRegion],
    params: DividerParams,
    depth: int,
) -> SplitNode:
    node = SplitNode(region)
    if depth > params.max_depth:
        return node
    lines = find_dividing_lines(image, region, text_regions, params)
    if not lines:
        return node
    node.direction = lines[0].orientation
    node.offsets = [line.offset for line in lines]
    for sub in _cut_region(region, node.direction, node.offsets):
        node.children.append(_split_region(image, sub, text_regions, params, depth + 1))
    return node


def divide(
    image: Raster, text_regions: Sequence[TextRegion], params: DividerParams
) -> DivisionResult:
    """Divide the full canvas into blocks; see the module docstring."""
    canvas = BBox(0, 0, image.width, image.height)
    tree = _split_region(image, canvas, text_regions, params, depth=1)
    leaves = [node.region for node in tree.walk() if node.is_leaf]
    blocks = merge_small_blocks(leaves, params, image.width, image.height)
    return DivisionResult(tuple(blocks), tree)


def _shared_edge_length(a: BBox, b: BBox) -> int:
    if a.right == b.x or b.right == a.x:
        return max(0, min(a.bottom, b.bottom) - max(a.y, b.y))
    if a.bottom == b.y or b.bottom == a.y:
        return max(0, min(a.right, b.right) - max(a.x, b.x))
    return 0


def merge_small_blocks(
    blocks: Sequence[BBox], params: DividerParams, canvas_w: int, canvas_h: int
) -> list:
    """Merge undersized blocks into neighbors until all clear the area bar.

    The smallest undersized block merges with the edge-adjacent neighbor
    sharing the longest boundary, preferring neighbors whose union stays
    an exact rectangle of the pair. When no rectangle-preserving neighbor
    exists, the union box swallows every block it now overlaps (growing
    as needed) so the output still tiles the canvas.
    """
    tiles = list(blocks)
    while len(tiles) > 1:
        small = min(
            (b for b in tiles if b.area < params.min_block_area),
            key=lambda b: (b.area, b.y, b.x),
            default=None,
        )
        if small is None:
            break
        neighbors = [
            (_shared_edge_length(small, other), other)
            for other in tiles
            if other is not small and _shared_edge_length(small, other) > 0
        ]
        if not neighbors:
            log.warning("undersized block %s has no edge-adjacent neighbor", small.as_tuple())
            break
        rectangular = [
            (length, other)
            for length, other in neighbors
            if bbox_union(small, other).area == small.area + other.area
        ]
        pool = rectangular or neighbors
        _, mate = sorted(pool, key=lambda t: (-t[0], t[1].y, t[1].x))[0]
        union = bbox_union(small, mate)
        absorbed = {small, mate}
        while True:
            touched = [
                t for t in tiles if t not in absorbed and bbox_intersects(t, union)
            ]
            if not touched:
                break
            for t in touched:
                if not union.contains_box(t):
                    union = bbox_union(union, t)
                absorbed.add(t)
        tiles = [t for t in tiles if t not in absorbed]
        tiles.append(union)
    return sorted(tiles, key=lambda b: (b.y, b.x))


_OVERLAY_PALETTE = (
    (230, 57, 70),
    (29, 53, 87),
    (42, 157, 143),
    (233, 196, 106),
    (155, 93, 229),
    (0, 119, 182),
    (214, 40, 40),
    (6, 214, 160),
)


def render_debug_overlay(image: Raster, result: DivisionResult) -> Raster:
    """Copy of the design with each block outlined and labeled by index."""
    pil = image.to_pil().copy()
    draw = ImageDraw.Draw(pil)
    for i, box in enumerate(result.blocks):
        color = _OVERLAY_PALETTE[i % len(_OVERLAY_PALETTE)]
        draw.rectangle(
            [box.x, box.y, box.right - 1, box.bottom - 1], outline=color, width=2
        )
        # Solid chip behind the label so re-drawing an overlay blends
        # against the same background and stays byte-stable.
        label = str(i)
        x0, y0 = box.x + 4, box.y + 4
        lx0, ly0, lx1, ly1 = draw.textbbox((x0, y0), label)
        draw.rectangle([lx0 - 2, ly0 - 2, lx1 + 2, ly1 + 2], fill=color)
        draw.text((x0, y0), label, fill=(255, 255, 255))
    return Raster(np.asarray(pil))
