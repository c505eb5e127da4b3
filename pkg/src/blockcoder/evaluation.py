"""Automatic metrics: pixel MAE, embedding similarity, the composite
verify score, and DOM-structure recall over 1-height subtrees.

Pixel metrics require equal shapes, so screenshot/design pairs go
through a fixed normalization first: the screenshot is scaled to the
design's width, then bottom-padded with white or bottom-cropped to the
design's height. Embeddings come from an external HTTP service (or a
digest-keyed stub), never from in-process inference.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import httpx
import numpy as np
from PIL import Image

from .errors import ConfigError, DomParseError, EndpointError, ProtocolError, TransportError
from .htmldom import Element, parse_document
from .raster import Raster

HTTP_EMBEDDER = "http"
STUB_EMBEDDER = "stub"
EMBEDDER_BACKENDS = (HTTP_EMBEDDER, STUB_EMBEDDER)


@dataclass(frozen=True)
class EmbedderConfig:
    backend: str = STUB_EMBEDDER
    url: str = ""
    stub_dir: str = ""
    synthetic_fallback: bool = True
    timeout: float = 30.0

    def __post_init__(self):
        if self.backend not in EMBEDDER_BACKENDS:
            raise ConfigError(
                f"embedder.backend must be one of {EMBEDDER_BACKENDS}, got {self.backend!r}"
            )
        if self.backend == HTTP_EMBEDDER and not self.url:
            raise ConfigError("embedder.url is required for the http backend")


# -- DOM structure ------------------------------------------------------


@dataclass(frozen=True)
class DomNode:
    """Tag-labeled ordered tree node; text, comments, attributes dropped."""

    tag: str
    children: tuple = ()


class SubtreeSignature(NamedTuple):
    parent_tag: str
    child_tags: tuple


def _element_to_dom(element: Element) -> DomNode:
    return DomNode(
        element.tag, tuple(_element_to_dom(child) for child in element.child_elements())
    )


def parse_dom(html: str) -> DomNode:
    """Lenient parse of HTML into a tag-only tree rooted at html.

    Recovery follows browser rules (implied html/head/body and so on);
    only input with no markup or text at all is rejected.
    """
    if not html or not html.strip():
        raise DomParseError("input is empty")
    return _element_to_dom(parse_document(html))


def one_height_subtrees(tree: DomNode) -> set:
    """Signatures (parent tag, ordered child tags) of every node with children."""
    signatures: set = set()
    stack = [tree]
    while stack:
        node = stack.pop()
        if node.children:
            signatures.add(
                SubtreeSignature(node.tag, tuple(child.tag for child in node.children))
            )
            stack.extend(node.children)
    return signatures


def tree_bleu(candidate: DomNode, reference: DomNode) -> float:
    """Recall of the reference's 1-height subtrees in the candidate."""
    reference_sigs = one_height_subtrees(reference)
    candidate_sigs = one_height_subtrees(candidate)
    if not reference_sigs:
        return 1.0 if not candidate_sigs else 0.0
    return len(candidate_sigs & reference_sigs) / len(reference_sigs)


# -- pixel metrics ------------------------------------------------------


def mae(a: Raster, b: Raster) -> float:
    """Mean absolute per-channel difference, in [0, 255]."""
    if a.size != b.size:
        raise ValueError(f"rasters differ in size: {a.size} vs {b.size}")
    diff = np.abs(a.array.astype(np.int16) - b.array.astype(np.int16))
    return float(diff.mean())


def normalize_pair(design: Raster, screenshot: Raster) -> tuple:
    """Bring a screenshot to the design's exact shape.

    Uniform bilinear scale to the design's width, then bottom-pad with
    white or bottom-crop to the design's height. The design is returned
    unchanged.
    """
    if screenshot.size == design.size:
        return design, screenshot
    if screenshot.width != design.width:
        new_h = max(1, round(screenshot.height * design.width / screenshot.width))
        pil = screenshot.to_pil().resize((design.width, new_h), Image.Resampling.BILINEAR)
        screenshot = Raster.from_pil(pil)
    if screenshot.height < design.height:
        padded = np.full((design.height, design.width, 3), 255, dtype=np.uint8)
        padded[: screenshot.height] = screenshot.array
        screenshot = Raster(padded)
    elif screenshot.height > design.height:
        screenshot = Raster(screenshot.array[: design.height])
    return design, screenshot


def verify_score(mae_value: float, sim: float) -> float:
    """Composite of pixel error and embedding similarity, equal weights."""
    if not 0.0 <= mae_value <= 255.0:
        raise ValueError(f"mae must be in [0, 255], got {mae_value}")
    if not 0.0 <= sim <= 1.0:
        raise ValueError(f"similarity must be in [0, 1], got {sim}")
    return 0.5 * (1.0 - mae_value / 255.0) + 0.5 * sim


# -- embeddings ---------------------------------------------------------


class HttpEmbedder:
    """POST PNG bytes to /embed, expect {"vector": [floats]} back."""

    def __init__(self, config: EmbedderConfig):
        self._config = config
        self._http = httpx.Client(timeout=config.timeout)

    def embed(self, image: Raster) -> np.ndarray:
        try:
            response = self._http.post(
                self._config.url.rstrip("/") + "/embed",
                content=image.png_bytes(),
                headers={"Content-Type": "image/png"},
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"embedding request failed: {exc}") from exc
        if response.status_code // 100 != 2:
            raise EndpointError(response.status_code, response.text[:200])
        try:
            vector = response.json()["vector"]
        except (KeyError, ValueError) as exc:
            raise ProtocolError(f"embedding response is not {{'vector': [...]}}: {exc}") from exc
        return np.asarray(vector, dtype=np.float64)


def synthetic_embedding(digest: str, dim: int = 32) -> np.ndarray:
    """Deterministic pseudo-embedding derived from a content digest."""
    rng = np.random.default_rng(int(digest[:16], 16))
    vector = rng.standard_normal(dim)
    return vector / np.linalg.norm(vector)


class StubEmbedder:
    """Digest-keyed vectors from fixture files, with a synthetic fallback."""

    def __init__(self, config: EmbedderConfig):
        self._config = config

    def embed(self, image: Raster) -> np.ndarray:
        digest = hashlib.sha256(image.png_bytes()).hexdigest()
        if self._config.stub_dir:
            fixture = Path(self._config.stub_dir) / f"{digest}.json"
            if fixture.exists():
                data = json.loads(fixture.read_text(encoding="utf-8"))
                return np.asarray(data["vector"], dtype=np.float64)
        if self._config.synthetic_fallback:
            return synthetic_embedding(digest)
        raise ProtocolError(f"no stub embedding for digest {digest[:12]}")


def build_embedder(config: EmbedderConfig):
    if config.backend == HTTP_EMBEDDER:
        return HttpEmbedder(config)
    return StubEmbedder(config)


def embedding_similarity(embedder, a: Raster, b: Raster) -> float:
    """Cosine similarity of the two images' embeddings, clamped to [0, 1]."""
    va = np.asarray(embedder.embed(a), dtype=np.float64)
    vb = np.asarray(embedder.embed(b), dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise ProtocolError(f"embedding shapes do not match: {va.shape} vs {vb.shape}")
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    cosine = float(np.dot(va, vb) / (norm_a * norm_b))
    return min(1.0, max(0.0, cosine))
