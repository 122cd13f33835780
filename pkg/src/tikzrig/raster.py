"""Decoded raster images exchanged between the sandbox, metrics and backends."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class RasterImage:
    """Row-major raster with intensities in [0, 1].

    Grayscale pixels have shape (height, width); RGB (height, width, 3).
    """

    width: int
    height: int
    channels: str  # "gray" | "rgb"
    dpi: float
    pixels: np.ndarray

    def __post_init__(self):
        if self.channels not in ("gray", "rgb"):
            raise ValueError(f"unknown channel layout: {self.channels}")
        expected = (self.height, self.width) if self.channels == "gray" else (self.height, self.width, 3)
        if self.pixels.shape != expected:
            raise ValueError(f"pixel shape {self.pixels.shape} != {expected}")
        if self.dpi <= 0:
            raise ValueError("dpi must be positive")

    def to_gray(self) -> "RasterImage":
        if self.channels == "gray":
            return self
        # ITU-R BT.601 luma weights
        gray = self.pixels @ np.array([0.299, 0.587, 0.114])
        return RasterImage(self.width, self.height, "gray", self.dpi, gray)

    def to_png_bytes(self) -> bytes:
        arr = np.clip(self.pixels * 255.0 + 0.5, 0, 255).astype(np.uint8)
        mode = "L" if self.channels == "gray" else "RGB"
        buf = io.BytesIO()
        Image.fromarray(arr, mode=mode).save(buf, format="PNG")
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_png_bytes())


def from_array(arr: np.ndarray, dpi: float = 72.0) -> RasterImage:
    """Wrap a float array in [0,1] (2-D gray or 3-D rgb) as a RasterImage."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        return RasterImage(arr.shape[1], arr.shape[0], "gray", dpi, arr)
    if arr.ndim == 3 and arr.shape[2] == 3:
        return RasterImage(arr.shape[1], arr.shape[0], "rgb", dpi, arr)
    raise ValueError(f"unsupported array shape {arr.shape}")


def from_pil(img: Image.Image, dpi: float, gray: bool = True) -> RasterImage:
    """Decode a PIL image, flattening any alpha onto white."""
    if img.mode in ("RGBA", "LA", "PA"):
        background = Image.new("RGBA", img.size, (255, 255, 255, 255))
        img = Image.alpha_composite(background, img.convert("RGBA")).convert("RGB")
    if gray:
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        return RasterImage(img.width, img.height, "gray", dpi, arr)
    arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return RasterImage(img.width, img.height, "rgb", dpi, arr)


def from_png_bytes(data: bytes, dpi: float = 72.0, gray: bool = True) -> RasterImage:
    return from_pil(Image.open(io.BytesIO(data)), dpi, gray=gray)


def load(path, dpi: float = 72.0, gray: bool = True) -> RasterImage:
    return from_pil(Image.open(path), dpi, gray=gray)
