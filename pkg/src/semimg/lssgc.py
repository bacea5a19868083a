"""Localized sparse segmentation using global clustering.

Each epoch clusters every channel with global k-means, evolves a multiphase
level set seeded from the cluster labels, and renders regions with their
means.  Epoch ``e + 1`` consumes epoch ``e``'s rendering with half as many
clusters and a window of diameter ``2p - 1``.  A vector-valued Potts map of
the raw frame is fused in once at the end.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import levelset, potts
from .clustering import CircularWindow, ClusterModel, global_kmeans, quantize
from .core import Frame, FrameSequence
from .errors import ConfigError, DegenerateClusters, DimensionMismatch


@dataclass(frozen=True)
class LssgcConfig:
    """Every tunable of the pipeline; also the schema of the config file."""

    n0: int = 16
    z: int = 4
    a: int = 5
    p0: int = 9
    epsilon: float = levelset.DEFAULT_EPSILON
    v: float = levelset.DEFAULT_V
    gamma: float = potts.DEFAULT_GAMMA
    tau: int = 15
    stride: int = 9
    alpha_blend: float = 0.5
    sil_threshold: float = 25 / 255

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(key, why):
            raise ConfigError(f"{key}: {why}", key)

        if self.n0 < 2 or self.n0 & (self.n0 - 1):
            bad("n0", f"must be a power of two >= 2, got {self.n0}")
        if self.z < 1:
            bad("z", "must be >= 1")
        if self.n0 // 2 ** (self.z - 1) < 2:
            bad("z", f"n0 / 2^(z-1) must stay >= 2 (n0={self.n0}, z={self.z})")
        if self.a < 1:
            bad("a", "must be >= 1")
        if self.p0 < 3 or self.p0 % 2 == 0:
            bad("p0", f"must be odd and >= 3, got {self.p0}")
        if not self.epsilon > 0:
            bad("epsilon", "must be > 0")
        if not self.v >= 0:
            bad("v", "must be >= 0")
        if not self.gamma >= 0:
            bad("gamma", "must be >= 0")
        if self.tau < 2:
            bad("tau", "must be >= 2")
        if not 1 <= self.stride <= self.tau:
            bad("stride", f"must satisfy 1 <= stride <= tau, got {self.stride}")
        if not 0.0 <= self.alpha_blend <= 1.0:
            bad("alpha_blend", "must lie in [0, 1]")
        if not 0.0 < self.sil_threshold < 1.0:
            bad("sil_threshold", "must lie in (0, 1)")

    def schedule(self):
        """``(clusters, window diameter)`` for every epoch."""
        n, p = self.n0, self.p0
        out = []
        for _ in range(self.z):
            out.append((n, p))
            n, p = n // 2, 2 * p - 1
        return out

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def updated(self, **overrides) -> "LssgcConfig":
        known = {f.name for f in fields(self)}
        for k in overrides:
            if k not in known:
                raise ConfigError(f"unknown config key {k!r}", k)
        return replace(self, **overrides)


_TYPES = {f.name: f.type for f in fields(LssgcConfig)}


def _coerce(key, text):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r}", key) from None


def parse_config(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})", key)
        values[key] = _coerce(key, val)
    return values


def load_config(path=None, **overrides) -> LssgcConfig:
    """Defaults, then the file (if any), then keyword overrides."""
    values = parse_config(Path(path).read_text()) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - set(_TYPES)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown config key {key!r}", key)
    return LssgcConfig(**values)


def dump_config(config: LssgcConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(config).items())


# --------------------------------------------------------------------------

def _segment_channel(chan, n, p, config):
    """One epoch on one channel: cluster, evolve, render with region means."""
    try:
        model = global_kmeans(chan, n, CircularWindow(p))
        cents = model.centroids[:, 0]
    except DegenerateClusters as exc:
        cents = exc.model.centroids[:, 0]
    if len(cents) == 1:
        return np.full_like(chan, cents[0])
    m = math.ceil(math.log2(len(cents)))
    # pad duplicate regions to a full 2**m set; ties keep them empty at start
    cents = np.concatenate([cents, np.repeat(cents[-1], 2 ** m - len(cents))])
    labels = quantize(chan, ClusterModel(cents[:, None]))
    state = levelset.LevelSetState(levelset.init_phi(labels, m), cents, config.epsilon, config.v)
    state = levelset.evolve(chan, state, config.a)
    return levelset.render(chan, state)


def segment(frame, config: LssgcConfig | None = None) -> Frame:
    """Run all epochs and return the region-mean rendering (before Potts fusion)."""
    config = config or LssgcConfig()
    img = np.array(frame, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.shape[2] not in (1, 3):
        raise DimensionMismatch(f"segment expects 1 or 3 channels, got {img.shape[2]}")
    work = img
    for n, p in config.schedule():
        work = np.stack([_segment_channel(work[:, :, c], n, p, config)
                         for c in range(work.shape[2])], axis=2)
    return Frame(np.clip(work, 0.0, 1.0))


def fuse(potts_map, segmented) -> Frame:
    """Saturating per-sample sum, then min-max stretch back onto [0, 1]."""
    a = np.asarray(potts_map, dtype=np.float64)
    b = np.asarray(segmented, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"cannot fuse {a.shape} with {b.shape}")
    s = np.minimum(a + b, 1.0)
    lo, hi = s.min(), s.max()
    if hi == lo:
        return Frame(np.zeros_like(s))
    return Frame((s - lo) / (hi - lo))


def segment_fused(frame, config: LssgcConfig | None = None) -> Frame:
    """Full segmentation: epoch rendering fused with the Potts map of the raw frame."""
    config = config or LssgcConfig()
    seg = segment(frame, config)
    pmap = potts.potts_2d(np.asarray(frame), config.gamma).values
    return fuse(np.reshape(pmap, seg.shape), seg)


def _fused_job(args):
    frame, config = args
    return segment_fused(frame, config).data


def segment_sequence(frames, config: LssgcConfig | None = None, jobs: int = 1) -> FrameSequence:
    """Segment every frame independently, preserving order."""
    config = config or LssgcConfig()
    seq = frames if isinstance(frames, FrameSequence) else FrameSequence(frames)
    if jobs > 1 and len(seq) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_fused_job, [(f.data, config) for f in seq]))
    else:
        out = [segment_fused(f, config).data for f in seq]
    return FrameSequence(out)
