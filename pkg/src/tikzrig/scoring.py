"""Shared render-pair scoring used by the DSC loop and the eval harness."""

from __future__ import annotations

from typing import Optional

from .backends import BackendHub
from .errors import EmptyContent, ZeroVector
from .imgmetrics import (
    VisualScores,
    cosine,
    hinge_semantic,
    ssim,
    struct_from_distance,
    trim_and_align,
)
from .raster import RasterImage


def visual_scores(
    ref: RasterImage,
    hyp: RasterImage,
    hub: BackendHub,
    tau_hold: float = 0.80,
    tau_temp: float = 0.5,
    background_threshold: float = 0.99,
) -> Optional[VisualScores]:
    """Full visual score set for a reference/render pair.

    Returns None for degenerate renders (all-background content or a
    zero embedding), which callers treat as failed renders so a blank
    canvas can never collect reward.
    """
    try:
        pair = trim_and_align(ref, hyp, background_threshold)
    except EmptyContent:
        return None
    try:
        s_raw = cosine(hub.embed(pair.a), hub.embed(pair.b))
    except ZeroVector:
        return None
    d = hub.perceptual_distance(pair)
    return VisualScores(
        s_raw=s_raw,
        s_sem=hinge_semantic(s_raw, tau_hold),
        s_struct=struct_from_distance(d, tau_temp),
        ssim=ssim(pair),
        d_perceptual=d,
        backend=hub.perceptual_backend_id,
    )
