"""Shared fixtures: canvas builders and offline pipeline configs."""

from __future__ import annotations

import numpy as np
import pytest

from blockcoder.config import load_config
from blockcoder.raster import Raster

WHITE = (255, 255, 255)
GRAY = (200, 200, 200)


def white_canvas(width: int, height: int) -> np.ndarray:
    return np.full((height, width, 3), 255, dtype=np.uint8)


def paint_hbar(arr: np.ndarray, y: int, thickness: int = 3, color=200) -> None:
    arr[y : y + thickness, :] = color


def paint_vbar(arr: np.ndarray, x: int, thickness: int = 3, color=200, y0: int = 0, y1=None) -> None:
    arr[y0 : (arr.shape[0] if y1 is None else y1), x : x + thickness] = color


def paint_content(arr: np.ndarray, x: int, y: int, w: int, h: int, color=(70, 90, 200)) -> None:
    arr[y : y + h, x : x + w] = color


def bar_canvas() -> Raster:
    """1000x1000 white canvas with a 3px gray bar at rows 498..500."""
    arr = white_canvas(1000, 1000)
    paint_hbar(arr, 498)
    return Raster(arr)


def two_level_canvas() -> Raster:
    """bar_canvas plus a vertical gray bar in the lower half."""
    arr = white_canvas(1000, 1000)
    paint_hbar(arr, 498)
    paint_vbar(arr, 498, y0=500)
    return Raster(arr)


def edge_defect_canvas() -> Raster:
    """bar_canvas with the leftmost 8 pixels blacked out."""
    arr = white_canvas(1000, 1000)
    paint_hbar(arr, 498)
    arr[:, 0:8] = 0
    return Raster(arr)


def toy_design() -> Raster:
    """Small two-block design: content above and below a divider bar."""
    arr = white_canvas(400, 520)
    paint_hbar(arr, 248, color=180)
    paint_content(arr, 30, 40, 340, 80, (70, 90, 200))
    paint_content(arr, 40, 300, 320, 180, (230, 120, 40))
    return Raster(arr)


@pytest.fixture
def toy_design_path(tmp_path):
    path = tmp_path / "design.png"
    toy_design().save_png(path)
    return path


@pytest.fixture
def offline_config(tmp_path):
    """Default config (mock client, stub renderer/embedder) writing to tmp."""
    return load_config(None, {"pipeline.output_dir": str(tmp_path / "runs")})
