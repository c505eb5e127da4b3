"""Text regions from an external OCR pass, plus paragraph-level merging.

OCR is consumed as data (a JSON file), never invoked in-process: the
interchange format is an array of records {"bbox": [x, y, w, h],
"text": "..."} in design-pixel coordinates.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import OcrFormatError
from .geometry import BBox, bbox_union

log = logging.getLogger(__name__)

DEFAULT_MERGE_GAP = 20


@dataclass(frozen=True)
class TextRegion:
    box: BBox
    text: Optional[str] = None


def _clamp_box(x: int, y: int, w: int, h: int, canvas_w: int, canvas_h: int) -> Optional[BBox]:
    x0 = max(0, x)
    y0 = max(0, y)
    x1 = min(canvas_w, x + w)
    y1 = min(canvas_h, y + h)
    if x1 <= x0 or y1 <= y0:
        return None
    return BBox(x0, y0, x1 - x0, y1 - y0)


def load_text_regions(source, canvas_w: int, canvas_h: int) -> list[TextRegion]:
    """Read OCR regions from a JSON document, clamped to the canvas.

    `source` may be a path or an already-decoded list of records.
    Regions that fall entirely outside the canvas are dropped with a
    warning; malformed records raise OcrFormatError naming the record.
    """
    if isinstance(source, (str, Path)):
        try:
            data = json.loads(Path(source).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise OcrFormatError(f"OCR document is not valid JSON: {exc}") from exc
    else:
        data = source
    if not isinstance(data, list):
        raise OcrFormatError("OCR document must be a JSON array of records")

    regions: list[TextRegion] = []
    for i, record in enumerate(data):
        if not isinstance(record, dict) or "bbox" not in record:
            raise OcrFormatError(f"record {i} is not an object with a 'bbox' field")
        bbox = record["bbox"]
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            raise OcrFormatError(f"record {i} has a malformed bbox: {bbox!r}")
        try:
            x, y, w, h = (int(v) for v in bbox)
        except (TypeError, ValueError):
            raise OcrFormatError(f"record {i} has non-numeric bbox values: {bbox!r}") from None
        if w <= 0 or h <= 0:
            raise OcrFormatError(f"record {i} has non-positive bbox size: {bbox!r}")
        text = record.get("text")
        if text is not None and not isinstance(text, str):
            raise OcrFormatError(f"record {i} has a non-string text field")
        clamped = _clamp_box(x, y, w, h, canvas_w, canvas_h)
        if clamped is None:
            log.warning("dropping OCR region %d at %s: outside the %dx%d canvas",
                        i, bbox, canvas_w, canvas_h)
            continue
        regions.append(TextRegion(clamped, text))
    return regions


def _within_gap(a: BBox, b: BBox, gap: int) -> bool:
    # Separation between the closed pixel rectangles along each axis;
    # negative values mean overlap. Inflating each box by gap/2 on all
    # sides makes them touch exactly when both separations are <= gap.
    sep_x = max(a.x, b.x) - min(a.right, b.right)
    sep_y = max(a.y, b.y) - min(a.bottom, b.bottom)
    return sep_x <= gap and sep_y <= gap


def merge_adjacent_regions(
    regions: Sequence[TextRegion], gap: int = DEFAULT_MERGE_GAP
) -> list[TextRegion]:
    """Merge regions closer than `gap` pixels, repeated to a fixpoint.

    Merging two boxes can bring the union within range of a third, so
    the pass loops until no pair is mergeable. Texts of merged regions
    are concatenated in reading order (top-to-bottom, then left-to-right).
    The result is sorted in reading order as well.
    """
    if gap < 0:
        raise ValueError(f"gap must be non-negative, got {gap}")

    # Each group keeps the member regions so text can be ordered at the end.
    groups: list[tuple[BBox, list[TextRegion]]] = [(r.box, [r]) for r in regions]
    changed = True
    while changed:
        changed = False
        merged: list[tuple[BBox, list[TextRegion]]] = []
        for box, members in groups:
            for i, (other_box, other_members) in enumerate(merged):
                if _within_gap(box, other_box, gap):
                    merged[i] = (bbox_union(box, other_box), other_members + members)
                    changed = True
                    break
            else:
                merged.append((box, members))
        groups = merged

    out: list[TextRegion] = []
    for box, members in groups:
        ordered = sorted(members, key=lambda r: (r.box.y, r.box.x))
        texts = [r.text for r in ordered if r.text]
        out.append(TextRegion(box, " ".join(texts) if texts else None))
    return sorted(out, key=lambda r: (r.box.y, r.box.x))
