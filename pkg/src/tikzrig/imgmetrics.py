"""Image-side scoring: trim-and-align preprocessing, SSIM, cosine
similarity over embeddings, and the hinge/kernel reward mappings.

All functions are pure and operate on grayscale intensities in [0, 1]
with white (1.0) treated as background.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .errors import EmptyContent, InvalidThreshold, ZeroVector
from .raster import RasterImage, from_array

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 1.0

FALLBACK_GRID = 16  # fallback embeddings are 16x16 block means, mean-centered


@dataclass(frozen=True)
class AlignedPair:
    a: RasterImage
    b: RasterImage
    border: float = 10.0  # nominal border in points carried for reporting

    def __post_init__(self):
        if (self.a.width, self.a.height) != (self.b.width, self.b.height):
            raise ValueError("aligned pair must share dimensions")
        if self.a.channels != "gray" or self.b.channels != "gray":
            raise ValueError("metric input must be grayscale")


@dataclass(frozen=True)
class VisualScores:
    s_raw: float        # cosine in [-1, 1]
    s_sem: float        # hinge-scaled, [0, 1]
    s_struct: float     # exponential kernel of perceptual distance, (0, 1]
    ssim: float
    d_perceptual: float
    backend: str = "builtin"  # which backend produced d_perceptual

    @property
    def cosine_mapped(self) -> float:
        """Raw cosine mapped onto [0, 1] for reporting."""
        return (self.s_raw + 1.0) / 2.0


def content_bbox(img: RasterImage, background_threshold: float = 0.99):
    """Bounding box (top, bottom, left, right exclusive) of non-background pixels."""
    gray = img.to_gray().pixels
    mask = gray < background_threshold
    if not mask.any():
        raise EmptyContent("image is entirely background")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return rows[0], rows[-1] + 1, cols[0], cols[-1] + 1


def _center_pad(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    out = np.ones((height, width), dtype=arr.dtype)
    top = (height - arr.shape[0]) // 2
    left = (width - arr.shape[1]) // 2
    out[top:top + arr.shape[0], left:left + arr.shape[1]] = arr
    return out


def trim_and_align(
    a: RasterImage, b: RasterImage, background_threshold: float = 0.99, border: float = 10.0
) -> AlignedPair:
    """Crop both images to their content boxes, then center-pad to a common canvas.

    Raises EmptyContent when either image has no pixel below the threshold,
    which downstream reward code treats as a failed render.
    """
    crops = []
    for img in (a, b):
        t, btm, l, r = content_bbox(img, background_threshold)
        crops.append(img.to_gray().pixels[t:btm, l:r])
    height = max(c.shape[0] for c in crops)
    width = max(c.shape[1] for c in crops)
    padded = [_center_pad(c, height, width) for c in crops]
    return AlignedPair(
        from_array(padded[0], a.dpi), from_array(padded[1], b.dpi), border=border
    )


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = size // 2
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(pair: AlignedPair) -> float:
    """Mean local SSIM over an 11x11 Gaussian window (sigma 1.5).

    Stabilizers c1=(0.01*L)^2 and c2=(0.03*L)^2 with L=1.0.  Windows are
    taken where they fit entirely inside the image; images smaller than
    the window fall back to one global window.
    """
    x = pair.a.pixels.astype(np.float64)
    y = pair.b.pixels.astype(np.float64)
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    if min(x.shape) < SSIM_WINDOW:
        mu_x, mu_y = x.mean(), y.mean()
        var_x, var_y = x.var(), y.var()
        cov = ((x - mu_x) * (y - mu_y)).mean()
        return float(
            (2 * mu_x * mu_y + c1) * (2 * cov + c2)
            / ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2))
        )
    win = _gaussian_window()
    mu_x = convolve2d(x, win, mode="valid")
    mu_y = convolve2d(y, win, mode="valid")
    xx = convolve2d(x * x, win, mode="valid") - mu_x ** 2
    yy = convolve2d(y * y, win, mode="valid") - mu_y ** 2
    xy = convolve2d(x * y, win, mode="valid") - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
    return float((num / den).mean())


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; raises ZeroVector on degenerate input."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape or u.size == 0:
        raise ValueError(f"incompatible embedding shapes {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < 1e-300 or nv < 1e-300:
        raise ZeroVector("cosine of an all-zero embedding")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cosine_to_unit(s_raw: float) -> float:
    """Map raw cosine from [-1, 1] onto [0, 1] for reporting."""
    return (s_raw + 1.0) / 2.0


def hinge_semantic(s_raw: float, tau_hold: float) -> float:
    """Hinge-scaled semantic score: max(0, s_raw - tau) / (1 - tau)."""
    if not 0.0 <= tau_hold < 1.0:
        raise InvalidThreshold(f"tau_hold must lie in [0, 1), got {tau_hold}")
    return max(0.0, s_raw - tau_hold) / (1.0 - tau_hold)


def struct_from_distance(d: float, tau_temp: float) -> float:
    """Exponential kernel mapping a perceptual distance to (0, 1]."""
    if tau_temp <= 0:
        raise ValueError("tau_temp must be positive")
    if d < 0:
        raise ValueError("perceptual distance must be non-negative")
    return math.exp(-d / tau_temp)


def fallback_embedding(img: RasterImage) -> np.ndarray:
    """Deterministic hermetic embedding: 16x16 block means, mean-centered.

    A constant image embeds to the zero vector, which cosine() rejects;
    callers treat that as a degenerate (all-background) render.
    """
    gray = img.to_gray().pixels
    h, w = gray.shape
    if h == 0 or w == 0:
        raise EmptyContent("cannot embed an empty image")
    rows = np.linspace(0, h, FALLBACK_GRID + 1).astype(int)
    cols = np.linspace(0, w, FALLBACK_GRID + 1).astype(int)
    cells = np.empty((FALLBACK_GRID, FALLBACK_GRID), dtype=np.float64)
    for i in range(FALLBACK_GRID):
        for j in range(FALLBACK_GRID):
            block = gray[rows[i]:max(rows[i + 1], rows[i] + 1),
                         cols[j]:max(cols[j + 1], cols[j] + 1)]
            cells[i, j] = block.mean()
    flat = cells.ravel()
    return flat - flat.mean()


def fallback_perceptual_distance(pair: AlignedPair) -> float:
    """Mean absolute pixel difference on an aligned pair (hermetic stand-in)."""
    return float(np.abs(pair.a.pixels - pair.b.pixels).mean())
