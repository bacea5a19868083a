"""Semantic images and rank-pooled motion summaries of frame sequences."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    EncodedImage,
    FlowField,
    Frame,
    FrameSequence,
    load_flows,
    load_frames,
    normalize_to_u8,
)
from .lssgc import LssgcConfig, fuse, segment, segment_fused, segment_sequence  # noqa: E402
from .rankpool import (  # noqa: E402
    PooledImage,
    RankCoefficients,
    WindowSpec,
    coefficients,
    multiple_semi,
    pool,
    windows,
)
