"""Static-background semantics for segmented frames.

A temporal median gives the background, thresholded differences cleaned by
a morphological opening give the silhouettes, and every frame after the
first is alpha-blended with the background outside its silhouette.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .core import FrameSequence
from .errors import DimensionMismatch, LengthMismatch


def estimate_background(frames) -> np.ndarray:
    """Per-pixel, per-channel temporal median; even counts take the lower middle."""
    stack = np.asarray(frames, dtype=np.float64)
    if stack.ndim == 3:
        stack = stack[..., None]
    t = stack.shape[0]
    if t < 1:
        raise ValueError("need at least one frame")
    k = (t - 1) // 2
    return np.partition(stack, k, axis=0)[k]


def disk(radius: int) -> np.ndarray:
    """Digital disk ``x^2 + y^2 <= r^2 + r``; radius 1 is the full 3x3 block."""
    y, x = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return (x * x + y * y) <= radius * radius + radius


def opening(mask, radius: int = 1) -> np.ndarray:
    """Binary opening with a disk; the image border does not erode."""
    se = disk(radius)
    eroded = ndimage.binary_erosion(mask, structure=se, border_value=1)
    return ndimage.binary_dilation(eroded, structure=se, border_value=0)


def silhouette(frame, background, threshold: float = 25 / 255, open_radius: int = 1) -> np.ndarray:
    """Foreground mask (uint8 0/1) of pixels that differ from the background."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    if open_radius < 1:
        raise ValueError("open_radius must be >= 1")
    f = np.asarray(frame, dtype=np.float64)
    b = np.asarray(background, dtype=np.float64)
    if f.ndim == 2:
        f = f[..., None]
    if b.ndim == 2:
        b = b[..., None]
    if f.shape != b.shape:
        raise DimensionMismatch(f"frame {f.shape} vs background {b.shape}")
    raw = np.abs(f - b).max(axis=2) > threshold
    return opening(raw, open_radius).astype(np.uint8)


def overlay(segmented, background, masks, alpha: float = 0.5) -> FrameSequence:
    """Blend the background into every frame after the first, outside its mask.

    ``out = mask * seg + (1 - mask) * (alpha * background + (1 - alpha) * seg)``
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    seq = np.asarray(segmented, dtype=np.float64)
    if seq.ndim == 3:
        seq = seq[..., None]
    bg = np.asarray(background, dtype=np.float64)
    if bg.ndim == 2:
        bg = bg[..., None]
    masks = list(masks)
    if len(masks) != len(seq):
        raise LengthMismatch(f"{len(seq)} frames but {len(masks)} masks")
    if bg.shape != seq.shape[1:]:
        raise DimensionMismatch(f"background {bg.shape} vs frames {seq.shape[1:]}")
    out = [seq[0]]
    for t in range(1, len(seq)):
        m = np.asarray(masks[t], dtype=np.float64)
        if m.shape != seq.shape[1:3]:
            raise DimensionMismatch(f"mask {t} has shape {m.shape}")
        m = m[..., None]
        # seg + alpha * (bg - seg): exact wherever bg equals seg
        blend = seq[t] + alpha * (bg - seq[t])
        out.append(np.clip(m * seq[t] + (1.0 - m) * blend, 0.0, 1.0))
    return FrameSequence(out)


def add_semantics(segmented, threshold: float = 25 / 255, alpha: float = 0.5,
                  open_radius: int = 1) -> FrameSequence:
    """Background, silhouettes and overlay for one window of segmented frames."""
    bg = estimate_background(segmented)
    masks = [silhouette(f, bg, threshold, open_radius) for f in np.asarray(segmented)]
    return overlay(segmented, bg, masks, alpha)
