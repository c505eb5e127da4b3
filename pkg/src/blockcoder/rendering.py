"""Screenshot rendering through an external headless-browser command.

Browsers are the only faithful CSS oracles, so rendering shells out to a
user-configured command with {html}, {out}, {width}, {height}
placeholders. A stub backend serves pre-made PNGs from a directory keyed
by the sha256 of the HTML bytes (with an optional deterministic
synthetic fallback) so everything downstream is testable offline.
"""

from __future__ import annotations

import hashlib
import shlex
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, RenderError
from .raster import Raster

COMMAND_BACKEND = "command"
STUB_BACKEND = "stub"
RENDERER_BACKENDS = (COMMAND_BACKEND, STUB_BACKEND)

_PLACEHOLDERS = ("{html}", "{out}", "{width}", "{height}")

# Documented example invocation for a Chromium-style browser:
#   chromium --headless --screenshot={out} --window-size={width},{height}
#       --hide-scrollbars --default-background-color=FFFFFFFF {html}


@dataclass(frozen=True)
class RendererConfig:
    backend: str = STUB_BACKEND
    command_template: str = ""
    timeout: float = 30.0
    stub_dir: str = ""
    synthetic_fallback: bool = True
    max_concurrency: int = 2

    def __post_init__(self):
        if self.backend not in RENDERER_BACKENDS:
            raise ConfigError(
                f"renderer.backend must be one of {RENDERER_BACKENDS}, got {self.backend!r}"
            )
        if self.backend == COMMAND_BACKEND:
            missing = [p for p in _PLACEHOLDERS if p not in self.command_template]
            if missing:
                raise ConfigError(
                    f"renderer.command_template is missing placeholders: {', '.join(missing)}"
                )
        if self.timeout <= 0:
            raise ConfigError("renderer.timeout must be positive")
        if self.max_concurrency < 1:
            raise ConfigError("renderer.max_concurrency must be >= 1")


class CommandRenderer:
    def __init__(self, config: RendererConfig):
        self._config = config
        self._gate = threading.Semaphore(config.max_concurrency)

    def render_file(self, html_path, viewport: tuple) -> Raster:
        html_path = Path(html_path)
        if not html_path.exists():
            raise RenderError(f"html file not found: {html_path}")
        width, height = viewport
        with tempfile.TemporaryDirectory(prefix="blockcoder-render-") as tmp:
            out_path = Path(tmp) / "screenshot.png"
            argv = [
                token.format(html=str(html_path), out=str(out_path), width=width, height=height)
                for token in shlex.split(self._config.command_template)
            ]
            with self._gate:
                try:
                    proc = subprocess.run(
                        argv,
                        capture_output=True,
                        timeout=self._config.timeout,
                    )
                except subprocess.TimeoutExpired as exc:
                    raise RenderError(
                        f"render command timed out after {self._config.timeout}s"
                    ) from exc
                except OSError as exc:
                    raise RenderError(f"render command failed to start: {exc}") from exc
            if proc.returncode != 0:
                stderr = proc.stderr.decode("utf-8", "replace")[:500]
                raise RenderError(f"render command exited {proc.returncode}: {stderr}")
            if not out_path.exists():
                raise RenderError("render command produced no output file")
            try:
                return Raster.load(out_path)
            except Exception as exc:
                raise RenderError(f"render output is not a readable image: {exc}") from exc

    def render_source(self, source: str, viewport: tuple) -> Raster:
        with tempfile.TemporaryDirectory(prefix="blockcoder-page-") as tmp:
            page = Path(tmp) / "page.html"
            page.write_text(source, encoding="utf-8")
            return self.render_file(page, viewport)


def synthetic_screenshot(digest: str, viewport: tuple) -> Raster:
    """Deterministic stand-in screenshot derived from a content digest."""
    width, height = viewport
    base = tuple(int(digest[i : i + 2], 16) for i in (0, 2, 4))
    stripe = tuple(int(digest[i : i + 2], 16) for i in (6, 8, 10))
    arr = np.empty((height, width, 3), dtype=np.uint8)
    arr[:, :] = base
    band = max(1, height // 8)
    arr[:band, :] = stripe
    return Raster(arr)


class StubRenderer:
    def __init__(self, config: RendererConfig):
        self._config = config

    def _lookup(self, digest: str, viewport: tuple) -> Raster:
        if self._config.stub_dir:
            fixture = Path(self._config.stub_dir) / f"{digest}.png"
            if fixture.exists():
                return Raster.load(fixture)
        if self._config.synthetic_fallback:
            return synthetic_screenshot(digest, viewport)
        raise RenderError(f"no stub screenshot for digest {digest[:12]}")

    def render_source(self, source: str, viewport: tuple) -> Raster:
        digest = hashlib.sha256(source.encode("utf-8")).hexdigest()
        return self._lookup(digest, viewport)

    def render_file(self, html_path, viewport: tuple) -> Raster:
        html_path = Path(html_path)
        if not html_path.exists():
            raise RenderError(f"html file not found: {html_path}")
        digest = hashlib.sha256(html_path.read_bytes()).hexdigest()
        return self._lookup(digest, viewport)


def build_renderer(config: RendererConfig):
    if config.backend == COMMAND_BACKEND:
        return CommandRenderer(config)
    return StubRenderer(config)


def render_screenshot(html_path, viewport: tuple, config: RendererConfig) -> Raster:
    """One-shot render of an HTML file at the given viewport."""
    return build_renderer(config).render_file(html_path, viewport)
