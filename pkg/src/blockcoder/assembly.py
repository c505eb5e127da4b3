"""Assemble block code into a full page and pick the better result.

Absolute positioning (APS) places each block's fragment in a wrapper div
pinned to its bounding box; it is fast and position-exact. MLLM-based
assembly (MS) asks the model to merge the fragments guided by the design
image and the boxes; it needs a long context. When both candidates
exist, a reference-free verifier renders each one, scores it against the
design, and keeps the higher score, with ties going to APS because its
positional guarantees are stronger.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .client import ChatRequest, MllmClient, TextPart, attach_image, estimate_tokens
from .errors import ContextOverflowError, RenderError, SelectionError
from .evaluation import embedding_similarity, mae, normalize_pair, verify_score
from .geometry import BBox
from .prompts import assembly_prompt, split_prompt, wrap_fragment
from .raster import Raster
from .synthesis import BlockArtifact, HtmlDocument, extract_html

log = logging.getLogger(__name__)

APS_STRATEGY = "APS"
MS_STRATEGY = "MS"
_STRATEGY_RANK = {APS_STRATEGY: 0, MS_STRATEGY: 1}

BLOCK_INDEX_ATTR = "data-latcoder-block"
BLOCK_BBOX_ATTR = "data-latcoder-bbox"


@dataclass(frozen=True)
class VerifyReport:
    mae: float
    clip_sim: float
    verify_score: float

    def __post_init__(self):
        expected = 0.5 * (1.0 - self.mae / 255.0) + 0.5 * self.clip_sim
        if abs(self.verify_score - expected) > 1e-9:
            raise ValueError(
                f"verify_score {self.verify_score} inconsistent with mae/clip ({expected})"
            )

    @classmethod
    def from_measurements(cls, mae_value: float, sim: float) -> "VerifyReport":
        return cls(mae_value, sim, verify_score(mae_value, sim))

    def to_dict(self) -> dict:
        return {"mae": self.mae, "clip_sim": self.clip_sim, "verify_score": self.verify_score}


@dataclass(frozen=True)
class AssemblyCandidate:
    strategy: str
    html: HtmlDocument
    screenshot: Optional[Raster] = None
    verify: Optional[VerifyReport] = None

    def __post_init__(self):
        if self.strategy not in _STRATEGY_RANK:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.verify is not None and self.screenshot is None:
            raise ValueError("a scored candidate must carry its screenshot")


def assemble_absolute(
    artifacts: Sequence[BlockArtifact], canvas_w: int, canvas_h: int
) -> HtmlDocument:
    """Compose the page by pinning each fragment to its bounding box.

    Wrappers clip their content (overflow hidden) so one block's
    overflow cannot disturb its neighbors' geometry, and carry the block
    index and box as machine-readable data attributes.
    """
    if not artifacts:
        raise ValueError("at least one block artifact is required")
    canvas = BBox(0, 0, canvas_w, canvas_h)
    wrappers = []
    for artifact in artifacts:
        box = artifact.box
        if not canvas.contains_box(box):
            raise ValueError(f"block {artifact.index} box {box.as_tuple()} exceeds the canvas")
        style = (
            f"position:absolute;left:{box.x}px;top:{box.y}px;"
            f"width:{box.w}px;height:{box.h}px;overflow:hidden"
        )
        wrappers.append(
            f'<div {BLOCK_INDEX_ATTR}="{artifact.index}" '
            f'{BLOCK_BBOX_ATTR}="{box.x},{box.y},{box.w},{box.h}" '
            f'style="{style}">\n{artifact.body_fragment}\n</div>'
        )
    body_style = (
        f"position:relative;margin:0;width:{canvas_w}px;"
        f"height:{canvas_h}px;background:#ffffff"
    )
    return HtmlDocument(wrap_fragment("\n".join(wrappers), body_style=body_style))


_STYLE_FIELDS = {
    "x": re.compile(r"left:\s*(-?\d+)px"),
    "y": re.compile(r"top:\s*(-?\d+)px"),
    "w": re.compile(r"width:\s*(-?\d+)px"),
    "h": re.compile(r"height:\s*(-?\d+)px"),
}


def read_absolute_layout(document: HtmlDocument) -> list[dict]:
    """Read back block wrappers from an APS page, in DOM order.

    Each record carries the block index, the box parsed from the data
    attribute, and the box parsed from the inline style.
    """
    records = []
    for element in document.root.iter_elements():
        if BLOCK_INDEX_ATTR not in element.attrs:
            continue
        index = int(element.attrs[BLOCK_INDEX_ATTR])
        attr_box = BBox.from_sequence(element.attrs[BLOCK_BBOX_ATTR].split(","))
        style = element.attrs.get("style") or ""
        values = {}
        for name, pattern in _STYLE_FIELDS.items():
            match = pattern.search(style)
            if match is None:
                raise ValueError(f"wrapper {index} style lacks a pixel {name} value")
            values[name] = int(match.group(1))
        style_box = BBox(values["x"], values["y"], values["w"], values["h"])
        records.append({"index": index, "attr_box": attr_box, "style_box": style_box})
    return records


def build_assembly_prompt(
    design: Raster,
    artifacts: Sequence[BlockArtifact],
    *,
    model: str,
    max_output_tokens: int = 4096,
    image_pixel_budget: int = 2_000_000,
    image_token_cost: int = 1100,
    context_budget: Optional[int] = None,
) -> ChatRequest:
    """MS request: template, design image, then each block's box and code."""
    if not artifacts:
        raise ValueError("at least one block artifact is required")
    system_text, user_text = split_prompt(assembly_prompt())
    sections = [f"Design size: {design.width}x{design.height} pixels.", ""]
    for artifact in artifacts:
        box = artifact.box
        sections.append(
            f"Section {artifact.index}: bounding box "
            f"(x={box.x}, y={box.y}, width={box.w}, height={box.h})"
        )
        sections.append("```html\n" + artifact.body_fragment + "\n```")
        sections.append("")
    request = ChatRequest(
        model=model,
        system_text=system_text,
        user_parts=(
            TextPart(user_text),
            attach_image(design, image_pixel_budget),
            TextPart("\n".join(sections)),
        ),
        temperature=0.0,
        max_output_tokens=max_output_tokens,
    )
    estimate = estimate_tokens(request, image_token_cost)
    if context_budget is not None and estimate > context_budget:
        raise ContextOverflowError(estimate, context_budget)
    return request


def assemble_mllm(
    client: MllmClient, design: Raster, artifacts: Sequence[BlockArtifact]
) -> HtmlDocument:
    """Model-merged page from the design, the boxes, and the fragments."""
    request = build_assembly_prompt(
        design,
        artifacts,
        model=client.config.model,
        max_output_tokens=client.config.max_output_tokens,
        image_pixel_budget=client.config.image_pixel_budget,
        image_token_cost=client.config.image_token_cost,
        context_budget=client.config.context_budget,
    )
    response = client.complete(request)
    return extract_html(response.text)


def score_candidates(
    candidates: Sequence[AssemblyCandidate],
    design: Raster,
    renderer,
    embedder,
) -> tuple[list[AssemblyCandidate], list[dict]]:
    """Render and score each candidate against the design.

    Returns the scored candidates plus a record for every candidate
    that failed to render.
    """
    scored = []
    failures = []
    for candidate in candidates:
        try:
            screenshot = renderer.render_source(
                candidate.html.source, (design.width, design.height)
            )
        except RenderError as exc:
            log.warning("candidate %s failed to render: %s", candidate.strategy, exc)
            failures.append({"strategy": candidate.strategy, "error": str(exc)})
            continue
        design_n, screenshot_n = normalize_pair(design, screenshot)
        mae_value = mae(design_n, screenshot_n)
        sim = embedding_similarity(embedder, design_n, screenshot_n)
        scored.append(
            replace(
                candidate,
                screenshot=screenshot,
                verify=VerifyReport.from_measurements(mae_value, sim),
            )
        )
    return scored, failures


def pick_best_scored(scored: Sequence[AssemblyCandidate]) -> AssemblyCandidate:
    """Verify-score argmax; exact ties go to APS regardless of order."""
    if not scored:
        raise SelectionError("every candidate failed to render")
    return min(scored, key=lambda c: (-c.verify.verify_score, _STRATEGY_RANK[c.strategy]))


def select_best(
    candidates: Sequence[AssemblyCandidate],
    design: Raster,
    renderer,
    embedder,
) -> AssemblyCandidate:
    """Render and score every candidate, return the verify-score argmax.

    Candidates that fail to render are skipped with a warning; if none
    survive, selection fails.
    """
    if not candidates:
        raise SelectionError("no assembly candidates to select from")
    scored, _ = score_candidates(candidates, design, renderer, embedder)
    return pick_best_scored(scored)
