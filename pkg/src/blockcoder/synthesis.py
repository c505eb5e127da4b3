"""Block-wise code generation: crop, prompt, extract, fall back.

Each design block is cropped, attached to the block prompt, and sent to
the chat client; the response goes through an extraction ladder that
tolerates the usual response shapes (fenced code, bare documents, bare
div fragments). A block that fails with the configured prompt variant is
retried once with the simplified variant; a block that fails both
attempts becomes a gray placeholder of the block's size so a long batch
stays total and auditable.
"""

from __future__ import annotations

import hashlib
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

from .client import (
    ChatRequest,
    MllmClient,
    TextPart,
    attach_image,
    request_digest,
)
from .errors import BlockcoderError, ExtractionError
from .geometry import BBox
from .htmldom import Element, document_body, parse_document, serialize_children
from .prompts import (
    FULL_VARIANT,
    SIMPLIFIED_VARIANT,
    block_prompt,
    split_prompt,
    wrap_fragment,
)
from .raster import Raster

log = logging.getLogger(__name__)

PLACEHOLDER_COLOR = "#cccccc"


@dataclass(frozen=True)
class HtmlDocument:
    """An HTML document kept as source text with a lazily parsed tree."""

    source: str

    @cached_property
    def root(self) -> Element:
        return parse_document(self.source)

    @property
    def body(self) -> Element:
        return document_body(self.root)

    def body_fragment(self) -> str:
        return serialize_children(self.body).strip()


@dataclass(frozen=True)
class SynthesisTrace:
    request_digest: str
    response_digest: str
    from_cache: bool
    attempts: int
    variant: str


@dataclass(frozen=True)
class BlockArtifact:
    index: int
    box: BBox
    image: Raster
    html: HtmlDocument
    body_fragment: str
    failure: Optional[str] = None
    trace: Optional[SynthesisTrace] = None

    def __post_init__(self):
        if (self.image.width, self.image.height) != (self.box.w, self.box.h):
            raise ValueError(
                f"block image is {self.image.width}x{self.image.height}, "
                f"box is {self.box.w}x{self.box.h}"
            )


def crop_block(image: Raster, box: BBox) -> Raster:
    """Exact pixel copy of the boxed region; out of bounds is an error."""
    return image.crop(box)


def build_generation_prompt(
    block: Raster,
    *,
    variant: str = FULL_VARIANT,
    model: str,
    max_output_tokens: int = 4096,
    image_pixel_budget: int = 2_000_000,
) -> ChatRequest:
    system_text, user_text = split_prompt(block_prompt(variant))
    return ChatRequest(
        model=model,
        system_text=system_text,
        user_parts=(TextPart(user_text), attach_image(block, image_pixel_budget)),
        temperature=0.0,
        max_output_tokens=max_output_tokens,
    )


_FENCED_HTML = re.compile(r"```html[ \t]*\r?\n(.*?)(?:\r?\n)?```", re.DOTALL | re.IGNORECASE)
_FENCED_ANY = re.compile(r"```[\w+-]*[ \t]*\r?\n(.*?)(?:\r?\n)?```", re.DOTALL)


def _find_document(text: str) -> Optional[str]:
    lower = text.lower()
    starts = [i for i in (lower.find("<!doctype"), lower.find("<html")) if i >= 0]
    if not starts:
        return None
    start = min(starts)
    end = lower.rfind("</html>")
    if end > start:
        return text[start : end + len("</html>")]
    return text[start:]


def extract_html(response_text: str) -> HtmlDocument:
    """Pull an HTML document out of a model response.

    Ladder: a fenced block labeled html, then any fenced block that opens
    with a doctype or <html>, then the bare document substring, then a
    bare div fragment wrapped into the fixed page skeleton.
    """
    for match in _FENCED_HTML.finditer(response_text):
        content = match.group(1).strip()
        if content:
            return HtmlDocument(content)
    for match in _FENCED_ANY.finditer(response_text):
        content = match.group(1).strip()
        if content.lower().startswith(("<!doctype", "<html")):
            return HtmlDocument(content)
    document = _find_document(response_text)
    if document is not None:
        return HtmlDocument(document)
    lower = response_text.lower()
    start = lower.find("<div")
    if start >= 0:
        end = lower.rfind("</div>")
        fragment = (
            response_text[start : end + len("</div>")] if end > start else response_text[start:]
        )
        return HtmlDocument(wrap_fragment(fragment))
    raise ExtractionError(f"no HTML found in response: {response_text[:200]!r}")


def placeholder_fragment(box: BBox) -> str:
    return (
        f'<div style="width:{box.w}px;height:{box.h}px;'
        f'background:{PLACEHOLDER_COLOR}"></div>'
    )


def _placeholder_artifact(index: int, box: BBox, image: Raster, reason: str) -> BlockArtifact:
    fragment = placeholder_fragment(box)
    return BlockArtifact(
        index=index,
        box=box,
        image=image,
        html=HtmlDocument(wrap_fragment(fragment)),
        body_fragment=fragment,
        failure=reason,
    )


def _synthesize_one(
    client: MllmClient, design: Raster, index: int, box: BBox, variant: str
) -> BlockArtifact:
    image = crop_block(design, box)
    variants = [variant]
    if variant != SIMPLIFIED_VARIANT:
        variants.append(SIMPLIFIED_VARIANT)
    errors = []
    for attempt, attempt_variant in enumerate(variants, start=1):
        request = build_generation_prompt(
            image,
            variant=attempt_variant,
            model=client.config.model,
            max_output_tokens=client.config.max_output_tokens,
            image_pixel_budget=client.config.image_pixel_budget,
        )
        try:
            response = client.complete(request)
            html = extract_html(response.text)
        except BlockcoderError as exc:
            errors.append(f"{attempt_variant}: {exc}")
            continue
        trace = SynthesisTrace(
            request_digest=request_digest(request),
            response_digest=_sha256_text(response.text),
            from_cache=response.from_cache,
            attempts=attempt,
            variant=attempt_variant,
        )
        return BlockArtifact(
            index=index,
            box=box,
            image=image,
            html=html,
            body_fragment=html.body_fragment(),
            trace=trace,
        )
    reason = "; ".join(errors)
    log.warning("block %d failed, substituting placeholder: %s", index, reason)
    return _placeholder_artifact(index, box, image, reason)


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def synthesize_blocks(
    client: MllmClient,
    design: Raster,
    blocks: Sequence[BBox],
    *,
    variant: str = FULL_VARIANT,
) -> list[BlockArtifact]:
    """One artifact per block, in block order; failures become placeholders."""
    if not blocks:
        return []
    workers = min(len(blocks), client.config.max_concurrency)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_synthesize_one, client, design, i, box, variant)
            for i, box in enumerate(blocks)
        ]
        return [f.result() for f in futures]
