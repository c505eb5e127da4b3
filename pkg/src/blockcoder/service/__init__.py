"""HTTP service wrapping the pipeline."""

from .app import app

__all__ = ["app"]
