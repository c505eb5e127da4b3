"""8-bit RGB raster images backed by immutable numpy arrays."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import BBox


class Raster:
    """An RGB image; the backing array is frozen after construction."""

    __slots__ = ("_array",)

    def __init__(self, array):
        arr = np.asarray(array, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected an HxWx3 array, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError("raster must have positive dimensions")
        arr = arr.copy()
        arr.flags.writeable = False
        self._array = arr

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def width(self) -> int:
        return self._array.shape[1]

    @property
    def height(self) -> int:
        return self._array.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    @classmethod
    def solid(cls, width: int, height: int, color=(255, 255, 255)) -> "Raster":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:, :] = color
        return cls(arr)

    @classmethod
    def load(cls, path) -> "Raster":
        """Load a PNG or JPEG file; alpha is composited over white."""
        with Image.open(path) as img:
            return cls.from_pil(img)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Raster":
        with Image.open(io.BytesIO(data)) as img:
            return cls.from_pil(img)

    @classmethod
    def from_pil(cls, img: Image.Image) -> "Raster":
        if img.mode in ("RGBA", "LA", "PA") or (img.mode == "P" and "transparency" in img.info):
            rgba = img.convert("RGBA")
            base = Image.new("RGB", rgba.size, (255, 255, 255))
            base.paste(rgba, mask=rgba.getchannel("A"))
            return cls(np.asarray(base))
        return cls(np.asarray(img.convert("RGB")))

    def to_pil(self) -> Image.Image:
        return Image.fromarray(self._array)

    def save_png(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.to_pil().save(path, format="PNG")

    def png_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.to_pil().save(buf, format="PNG")
        return buf.getvalue()

    def crop(self, box: BBox) -> "Raster":
        if box.right > self.width or box.bottom > self.height:
            raise ValueError(
                f"crop box {box.as_tuple()} exceeds raster bounds {self.width}x{self.height}"
            )
        return Raster(self._array[box.y : box.bottom, box.x : box.right])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return self._array.shape == other._array.shape and bool(
            np.array_equal(self._array, other._array)
        )

    def __repr__(self) -> str:
        return f"Raster({self.width}x{self.height})"
