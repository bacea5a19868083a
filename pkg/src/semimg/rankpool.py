"""Approximate rank pooling and the other temporal summaries.

Pooling is a fixed weighted sum of frames, ``sum_t alpha_t * frame_t``.  The
``linear`` weights ``2t - (T + 1)`` act on the frames themselves; the
``harmonic`` weights are what the same first-gradient argument gives when the
frames are first replaced by their running averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FlowField, FrameSequence
from .errors import DegenerateWindow, LengthMismatch, VideoTooShort

LINEAR = "linear"
HARMONIC = "harmonic"
VARIANTS = (LINEAR, HARMONIC)
KINDS = ("semi", "dynamic", "semof", "mhi", "mean", "max")


@dataclass(frozen=True, eq=False)
class RankCoefficients:
    alpha: np.ndarray
    variant: str = LINEAR

    @property
    def T(self) -> int:
        return len(self.alpha)


@dataclass(frozen=True)
class WindowSpec:
    tau: int = 15
    stride: int = 9

    def __post_init__(self):
        if self.tau < 2:
            raise ValueError("tau must be >= 2")
        if not 1 <= self.stride <= self.tau:
            raise ValueError("stride must satisfy 1 <= stride <= tau")

    @property
    def overlap(self) -> int:
        return self.tau - self.stride


@dataclass(frozen=True, eq=False)
class PooledImage:
    data: np.ndarray  # (H, W, C), not normalised
    kind: str


def _check_variant(variant):
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def coefficients(T: int, variant: str = LINEAR) -> RankCoefficients:
    """Closed-form pooling weights for a ``T``-frame window."""
    _check_variant(variant)
    if T < 2:
        raise DegenerateWindow(f"rank pooling needs T >= 2, got {T}")
    t = np.arange(1, T + 1)
    if variant == LINEAR:
        alpha = (2 * t - (T + 1)).astype(np.float64)
    else:
        # H_T - H_{t-1} = sum_{i=t}^{T} 1/i, with H_0 = 0
        tail = [math.fsum(1.0 / i for i in range(k, T + 1)) for k in range(1, T + 1)]
        alpha = 2.0 * (T - t + 1) - (T + 1) * np.array(tail)
        # the weights sum to zero exactly; absorb rounding in the last one
        alpha[-1] = -math.fsum(alpha[:-1])
    return RankCoefficients(alpha, variant)


def coefficients_bruteforce(T: int, variant: str = LINEAR) -> RankCoefficients:
    """Weights read off by expanding ``sum_{q>t} (A_q - A_t)`` pair by pair.

    ``A_t`` is frame ``t`` itself (linear) or the running average of frames
    ``1..t`` (harmonic), written as a coefficient vector over the frames.
    """
    _check_variant(variant)
    if not 2 <= T <= 50:
        raise ValueError("brute-force expansion supports 2 <= T <= 50")
    basis = np.zeros((T, T))
    for t in range(T):
        if variant == LINEAR:
            basis[t, t] = 1.0
        else:
            basis[t, :t + 1] = 1.0 / (t + 1)
    acc = np.zeros(T)
    for t in range(T):
        for q in range(t + 1, T):
            acc += basis[q] - basis[t]
    return RankCoefficients(acc, variant)


def pool(frames, coeffs: RankCoefficients) -> np.ndarray:
    """Weighted temporal sum ``sum_t alpha_t * frames[t]``.

    The weights sum to zero, so the first frame is subtracted before summing;
    temporally constant pixels then pool to exactly zero.
    """
    stack = np.asarray(frames, dtype=np.float64)
    if len(stack) != coeffs.T:
        raise LengthMismatch(f"{len(stack)} frames but {coeffs.T} coefficients")
    return np.tensordot(coeffs.alpha, stack - stack[0], axes=1)


def dynamic_image(frames, variant: str = LINEAR) -> PooledImage:
    stack = np.asarray(frames, dtype=np.float64)
    return PooledImage(pool(stack, coefficients(len(stack), variant)), "dynamic")


def semof(flows, coeffs: RankCoefficients) -> PooledImage:
    """Rank-pool u and v independently; result is ``(H, W, 2)``."""
    flows = list(flows)
    if len(flows) != coeffs.T:
        raise LengthMismatch(f"{len(flows)} flows but {coeffs.T} coefficients")
    stack = np.stack([f.stack() if isinstance(f, FlowField) else np.asarray(f, dtype=np.float64)
                      for f in flows])
    return PooledImage(pool(stack, coeffs), "semof")


def mhi(frames, decay_tau: int, motion_threshold: float) -> PooledImage:
    """Motion history: moving pixels reset to ``decay_tau``, others decay by one."""
    stack = np.asarray(frames, dtype=np.float64)
    if stack.ndim == 3:
        stack = stack[..., None]
    if len(stack) < 2:
        raise ValueError("MHI needs at least two frames")
    if decay_tau < 1:
        raise ValueError("decay_tau must be >= 1")
    hist = np.zeros(stack.shape[1:3])
    for t in range(1, len(stack)):
        moving = np.abs(stack[t] - stack[t - 1]).max(axis=2) > motion_threshold
        hist = np.where(moving, float(decay_tau), np.maximum(hist - 1.0, 0.0))
    return PooledImage((hist / decay_tau)[..., None], "mhi")


def mean_pool(frames) -> PooledImage:
    return PooledImage(np.asarray(frames, dtype=np.float64).mean(axis=0), "mean")


def max_pool(frames) -> PooledImage:
    return PooledImage(np.asarray(frames, dtype=np.float64).max(axis=0), "max")


def windows(total_frames: int, spec: WindowSpec) -> list[range]:
    """Frame index ranges (0-based, half-open) of every full window.

    Windows start every ``stride`` frames; trailing frames that cannot fill
    a whole window are dropped.
    """
    if total_frames < spec.tau:
        raise VideoTooShort(f"video has {total_frames} frames, window needs {spec.tau}")
    return [range(s, s + spec.tau) for s in range(0, total_frames - spec.tau + 1, spec.stride)]


def multiple_semi(frames, config=None, jobs: int = 1, segmented=None) -> list[PooledImage]:
    """One semantic image per window of the video.

    Each window's frames are segmented, given background semantics (median
    background of the segmented window, silhouettes, overlay) and rank pooled
    with linear weights.  ``segmented`` may hold precomputed per-frame
    segmentations of the whole video.
    """
    from .lssgc import LssgcConfig, segment_sequence
    from .semantics import add_semantics

    config = config or LssgcConfig()
    seq = frames if isinstance(frames, FrameSequence) else FrameSequence.from_array(frames)
    wins = windows(len(seq), WindowSpec(config.tau, config.stride))
    if segmented is None:
        used = sorted({i for w in wins for i in w})
        done = segment_sequence(FrameSequence([seq[i] for i in used]), config, jobs=jobs)
        segmented = dict(zip(used, done.array))
    coeffs = coefficients(config.tau, LINEAR)
    out = []
    for w in wins:
        window = np.stack([segmented[i] for i in w])
        fused = add_semantics(window, config.sil_threshold, config.alpha_blend)
        out.append(PooledImage(pool(fused, coeffs), "semi"))
    return out
