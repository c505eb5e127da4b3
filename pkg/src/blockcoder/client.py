"""Chat-completion client with disk caching, retries, and a mock backend.

Every request is digested over its full content (model, texts, image
bytes, sampling settings); responses are cached one file per digest, so
a warm cache replays a whole pipeline run offline and byte-identically.
The mock backend is a pure function of the digest: it serves canned
response files from a fixture directory when present and otherwise a
deterministic fallback page derived from the digest.
"""

from __future__ import annotations

import base64
import hashlib
import logging
import math
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import httpx

from .errors import ConfigError, EmptyResponseError, EndpointError, TransportError
from .prompts import wrap_fragment
from .raster import Raster

log = logging.getLogger(__name__)

MOCK_BACKEND = "mock"
OPENAI_BACKEND = "openai"
CLIENT_BACKENDS = (MOCK_BACKEND, OPENAI_BACKEND)


@dataclass(frozen=True)
class ClientConfig:
    backend: str = MOCK_BACKEND
    base_url: str = ""
    model: str = "mock-model"
    api_key_env: str = "BLOCKCODER_API_KEY"
    max_concurrency: int = 4
    cache_dir: str = ""
    mock_dir: str = ""
    context_budget: Optional[int] = None
    image_token_cost: int = 1100
    max_output_tokens: int = 4096
    retries: int = 3
    retry_base_delay: float = 0.5
    timeout: float = 120.0
    image_pixel_budget: int = 2_000_000

    def __post_init__(self):
        if self.backend not in CLIENT_BACKENDS:
            raise ConfigError(f"client.backend must be one of {CLIENT_BACKENDS}, got {self.backend!r}")
        if self.backend == OPENAI_BACKEND and not self.base_url:
            raise ConfigError("client.base_url is required for the openai backend")
        if self.max_concurrency < 1:
            raise ConfigError("client.max_concurrency must be >= 1")
        if self.retries < 1:
            raise ConfigError("client.retries must be >= 1")
        if self.image_pixel_budget < 1:
            raise ConfigError("client.image_pixel_budget must be >= 1")


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    png: bytes


ChatPart = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class ChatRequest:
    model: str
    system_text: str
    user_parts: tuple
    temperature: float = 0.0
    max_output_tokens: int = 4096

    def __post_init__(self):
        if not self.user_parts:
            raise ValueError("a chat request needs at least one user part")
        for part in self.user_parts:
            if not isinstance(part, (TextPart, ImagePart)):
                raise TypeError(f"unsupported part type: {type(part).__name__}")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: dict = field(default_factory=dict)
    from_cache: bool = False


def request_digest(request: ChatRequest) -> str:
    """Stable collision-resistant digest over the full request content."""
    h = hashlib.sha256()

    def put(kind: bytes, payload: bytes) -> None:
        h.update(kind)
        h.update(len(payload).to_bytes(8, "big"))
        h.update(payload)

    put(b"model", request.model.encode("utf-8"))
    put(b"system", request.system_text.encode("utf-8"))
    for part in request.user_parts:
        if isinstance(part, TextPart):
            put(b"text", part.text.encode("utf-8"))
        else:
            put(b"image", part.png)
    put(b"temperature", repr(float(request.temperature)).encode("ascii"))
    put(b"max_tokens", str(request.max_output_tokens).encode("ascii"))
    return h.hexdigest()


def attach_image(image: Raster, pixel_budget: int) -> ImagePart:
    """PNG attachment for a raster, downscaled to fit the pixel budget."""
    pixels = image.width * image.height
    if pixels > pixel_budget:
        scale = math.sqrt(pixel_budget / pixels)
        new_w = max(1, int(image.width * scale))
        new_h = max(1, int(image.height * scale))
        log.info(
            "downscaling %dx%d attachment by %.3f to %dx%d",
            image.width, image.height, scale, new_w, new_h,
        )
        pil = image.to_pil().resize((new_w, new_h))
        image = Raster.from_pil(pil)
    return ImagePart(image.png_bytes())


def estimate_tokens(request: ChatRequest, image_token_cost: int) -> int:
    """Cheap chars/4 text estimate plus a flat per-image cost."""
    chars = len(request.system_text)
    images = 0
    for part in request.user_parts:
        if isinstance(part, TextPart):
            chars += len(part.text)
        else:
            images += 1
    return chars // 4 + images * image_token_cost


def mock_fallback_response(digest: str) -> str:
    token = digest[:12]
    fragment = f'<div class="p-0" data-mock-fragment="{token}">section {token}</div>'
    return "```html\n" + wrap_fragment(fragment) + "\n```"


class MllmClient:
    """Thread-safe chat client; in-flight network calls are bounded."""

    def __init__(self, config: ClientConfig, cache_dir):
        self._config = config
        self._cache_dir = Path(cache_dir)
        self._cache_dir.mkdir(parents=True, exist_ok=True)
        self._gate = threading.Semaphore(config.max_concurrency)
        self._lock = threading.Lock()
        self._hits = 0
        self._misses = 0
        self._http: Optional[httpx.Client] = None

    @property
    def config(self) -> ClientConfig:
        return self._config

    def cache_stats(self) -> dict:
        with self._lock:
            return {"hits": self._hits, "misses": self._misses}

    def complete(self, request: ChatRequest) -> ChatResponse:
        digest = request_digest(request)
        cached = self._cache_read(digest)
        if cached is not None:
            with self._lock:
                self._hits += 1
            return ChatResponse(cached, {}, from_cache=True)
        with self._gate:
            text, usage = self._dispatch(request, digest)
        if not text.strip():
            raise EmptyResponseError(f"backend returned empty text for request {digest[:12]}")
        with self._lock:
            self._misses += 1
        self._cache_write(digest, text)
        return ChatResponse(text, usage, from_cache=False)

    # -- cache ---------------------------------------------------------

    def _cache_path(self, digest: str) -> Path:
        return self._cache_dir / f"{digest}.txt"

    def _cache_read(self, digest: str) -> Optional[str]:
        path = self._cache_path(digest)
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def _cache_write(self, digest: str, text: str) -> None:
        path = self._cache_path(digest)
        tmp = path.with_name(f"{path.name}.{os.getpid()}.{uuid.uuid4().hex[:8]}.tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)

    # -- backends ------------------------------------------------------

    def _dispatch(self, request: ChatRequest, digest: str) -> tuple[str, dict]:
        if self._config.backend == MOCK_BACKEND:
            return self._mock_response(digest), {}
        return self._openai_call(request)

    def _mock_response(self, digest: str) -> str:
        if self._config.mock_dir:
            canned = Path(self._config.mock_dir) / f"{digest}.txt"
            if canned.exists():
                return canned.read_text(encoding="utf-8")
        return mock_fallback_response(digest)

    def _client(self) -> httpx.Client:
        if self._http is None:
            self._http = httpx.Client(timeout=self._config.timeout)
        return self._http

    def _openai_call(self, request: ChatRequest) -> tuple[str, dict]:
        url = self._config.base_url.rstrip("/") + "/chat/completions"
        headers = {}
        api_key = os.environ.get(self._config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        content = []
        for part in request.user_parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            else:
                encoded = base64.b64encode(part.png).decode("ascii")
                content.append(
                    {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{encoded}"}}
                )
        payload = {
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": content},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        delay = self._config.retry_base_delay
        last_error: Optional[Exception] = None
        for attempt in range(self._config.retries):
            try:
                response = self._client().post(url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_error = exc
                if attempt + 1 < self._config.retries:
                    time.sleep(delay)
                    delay *= 2
                continue
            if response.status_code // 100 != 2:
                raise EndpointError(response.status_code, response.text[:200])
            data = response.json()
            try:
                text = data["choices"][0]["message"]["content"] or ""
            except (KeyError, IndexError, TypeError) as exc:
                raise EndpointError(response.status_code, f"malformed response body: {exc}") from exc
            return text, data.get("usage", {})
        raise TransportError(
            f"request failed after {self._config.retries} attempts: {last_error}"
        )

    def close(self) -> None:
        if self._http is not None:
            self._http.close()
            self._http = None
