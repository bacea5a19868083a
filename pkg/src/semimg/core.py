"""Frame and flow containers, file ingestion and 8-bit output encoding.

Pixel samples live in [0, 1] as float64 arrays laid out ``(height, width,
channels)``, i.e. row-major with channels interleaved.  Encoding to 8 bits
happens only when writing outputs.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .errors import (
    DecodeError,
    DimensionMismatch,
    NoFrames,
    NonFiniteInput,
    PairMismatch,
)

FLOW_CLIP = 20.0
FRAME_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")

DUMP_MAGIC = b"SEMI"
_DUMP_HEADER = struct.Struct("<4sIII")
_STACK_HEADER = struct.Struct("<4sIIII")


def _readonly(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Frame:
    """A single raster with samples in [0, 1], shape ``(H, W, C)``."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or a.shape[2] not in (1, 2, 3):
            raise DimensionMismatch(f"frame must be HxW or HxWxC with C in 1..3, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NonFiniteInput("frame contains non-finite samples")
        if a.size and (a.min() < 0.0 or a.max() > 1.0):
            raise ValueError("frame samples must lie in [0, 1]")
        object.__setattr__(self, "data", _readonly(a))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


class FrameSequence(Sequence):
    """Ordered frames sharing one shape; ``array`` is ``(T, H, W, C)``."""

    def __init__(self, frames: Iterable):
        items = [f if isinstance(f, Frame) else Frame(f) for f in frames]
        if not items:
            raise NoFrames("a frame sequence needs at least one frame")
        shape = items[0].shape
        for i, f in enumerate(items):
            if f.shape != shape:
                raise DimensionMismatch(f"frame {i} has shape {f.shape}, expected {shape}")
        self._frames = tuple(items)
        stacked = np.stack([f.data for f in items])
        stacked.flags.writeable = False
        self.array = stacked

    @classmethod
    def from_array(cls, array) -> "FrameSequence":
        a = np.asarray(array, dtype=np.float64)
        if a.ndim == 3:
            a = a[..., None]
        return cls(list(a))

    def __getitem__(self, i):
        if isinstance(i, slice):
            return FrameSequence(self._frames[i])
        return self._frames[i]

    def __len__(self):
        return len(self._frames)

    @property
    def shape(self):
        return self._frames[0].shape

    def __array__(self, dtype=None, copy=None):
        return self.array if dtype is None else self.array.astype(dtype)

    def __repr__(self):
        return f"FrameSequence(T={len(self)}, shape={self.shape})"


@dataclass(frozen=True, eq=False)
class FlowField:
    """Horizontal (u) and vertical (v) displacement in pixels, each ``(H, W)``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.shape != v.shape or u.ndim != 2:
            raise DimensionMismatch(f"u {u.shape} and v {v.shape} must be equal 2-D grids")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise NonFiniteInput("flow contains non-finite values")
        if np.abs(u).max(initial=0) > FLOW_CLIP or np.abs(v).max(initial=0) > FLOW_CLIP:
            raise ValueError(f"flow magnitude exceeds {FLOW_CLIP} px; use FlowField.clipped")
        object.__setattr__(self, "u", _readonly(u))
        object.__setattr__(self, "v", _readonly(v))

    @classmethod
    def clipped(cls, u, v) -> "FlowField":
        return cls(np.clip(u, -FLOW_CLIP, FLOW_CLIP), np.clip(v, -FLOW_CLIP, FLOW_CLIP))

    @property
    def shape(self):
        return self.u.shape

    def stack(self) -> np.ndarray:
        """``(H, W, 2)`` array with u then v."""
        return np.stack([self.u, self.v], axis=-1)


@dataclass(frozen=True, eq=False)
class EncodedImage:
    data: np.ndarray  # uint8, (H, W, C)

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim == 2:
            a = a[:, :, None]
        a = np.array(a, dtype=np.uint8, copy=True)
        a.flags.writeable = False
        object.__setattr__(self, "data", a)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def normalize_to_u8(image) -> EncodedImage:
    """Min-max map a real grid onto 0..255 (half-up rounding).

    A constant grid maps to all zeros.
    """
    a = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NonFiniteInput("cannot encode non-finite samples")
    lo, hi = a.min(), a.max()
    if hi == lo:
        return EncodedImage(np.zeros(a.shape, dtype=np.uint8))
    scaled = (a - lo) / (hi - lo) * 255.0
    return EncodedImage(np.clip(round_half_up(scaled), 0, 255).astype(np.uint8))


def to_u8(frame) -> EncodedImage:
    """Fixed-scale encoding of [0, 1] samples (no min-max stretch)."""
    a = np.asarray(frame, dtype=np.float64)
    return EncodedImage(np.clip(round_half_up(a * 255.0), 0, 255).astype(np.uint8))


# --------------------------------------------------------------------------
# frame files

_num_re = re.compile(r"(\d+)(?=\D*$)")


def _numeric_key(path: Path):
    m = _num_re.search(path.stem)
    if m is None:
        return (1, 0, path.name)
    return (0, int(m.group(1)), path.name)


def _decode(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "RGB"):
                pass
            elif im.mode in ("1", "I;16", "I", "F"):
                raise DecodeError(f"{path}: unsupported sample format {im.mode!r}")
            elif im.mode == "LA":
                im = im.convert("L")
            else:
                im = im.convert("RGB")
            a = np.asarray(im, dtype=np.uint8)
    except DecodeError:
        raise
    except Exception as exc:  # PIL raises several unrelated types
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    if a.ndim == 2:
        a = a[:, :, None]
    return a


def list_frame_files(directory, pattern: str | None = None) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise NoFrames(f"{d} is not a directory")
    if pattern:
        files = [p for p in d.glob(pattern) if p.is_file()]
    else:
        files = [p for p in d.iterdir() if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES]
    return sorted(files, key=_numeric_key)


def load_frames(directory, pattern: str | None = None) -> FrameSequence:
    """Read a directory of numbered PNG/PPM frames in index order.

    ``pattern`` is an optional glob (``"frame_*.png"``); by default every
    PNG/PPM/PGM file is taken.  Files are ordered by the last run of digits
    in their stem, so ``2.png`` precedes ``10.png``.
    """
    files = list_frame_files(directory, pattern)
    if not files:
        raise NoFrames(f"no frame files in {directory}")
    frames = []
    shape = None
    for f in files:
        a = _decode(f)
        if shape is None:
            shape = a.shape
        elif a.shape != shape:
            raise DimensionMismatch(f"{f.name} has shape {a.shape}, expected {shape}")
        frames.append(Frame(a.astype(np.float64) / 255.0))
    return FrameSequence(frames)


def save_png(path, image) -> Path:
    """Write an EncodedImage (or uint8 array) losslessly.

    Two-channel data is written as RGB with a zero blue channel.
    """
    if isinstance(image, EncodedImage):
        a = image.data
    else:
        a = np.asarray(image)
        if a.dtype != np.uint8:
            raise TypeError("save_png expects uint8 data; encode first")
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    elif a.ndim == 3 and a.shape[2] == 2:
        a = np.concatenate([a, np.zeros(a.shape[:2] + (1,), np.uint8)], axis=2)
    path = Path(path)
    # fixed compression settings so reruns are byte-identical
    Image.fromarray(np.ascontiguousarray(a)).save(path, format="PNG", optimize=False, compress_level=6)
    return path


def save_frame(path, frame) -> Path:
    return save_png(path, to_u8(frame))


# --------------------------------------------------------------------------
# flows

def decode_flow_samples(samples) -> np.ndarray:
    a = np.asarray(samples, dtype=np.float64)
    return np.clip(a * (2 * FLOW_CLIP) / 255.0 - FLOW_CLIP, -FLOW_CLIP, FLOW_CLIP)


def encode_flow_component(values) -> np.ndarray:
    a = np.clip(np.asarray(values, dtype=np.float64), -FLOW_CLIP, FLOW_CLIP)
    return np.clip(round_half_up((a + FLOW_CLIP) * 255.0 / (2 * FLOW_CLIP)), 0, 255).astype(np.uint8)


def encode_flow(flow: FlowField) -> tuple[EncodedImage, EncodedImage]:
    return EncodedImage(encode_flow_component(flow.u)), EncodedImage(encode_flow_component(flow.v))


_flow_re = re.compile(r"^([uv])_(\d+)\.png$", re.IGNORECASE)


def load_flows(directory) -> list[FlowField]:
    """Read ``u_%05d.png`` / ``v_%05d.png`` pairs as displacement fields."""
    d = Path(directory)
    if not d.is_dir():
        raise NoFrames(f"{d} is not a directory")
    found: dict[int, dict[str, Path]] = {}
    for p in d.iterdir():
        m = _flow_re.match(p.name)
        if m:
            found.setdefault(int(m.group(2)), {})[m.group(1).lower()] = p
    if not found:
        raise NoFrames(f"no u_/v_ flow images in {d}")
    flows = []
    shape = None
    for idx in sorted(found):
        pair = found[idx]
        if set(pair) != {"u", "v"}:
            missing = ({"u", "v"} - set(pair)).pop()
            raise PairMismatch(f"timestep {idx}: missing {missing}_{idx:05d}.png")
        u = _decode(pair["u"])[:, :, 0]
        v = _decode(pair["v"])[:, :, 0]
        if u.shape != v.shape or (shape is not None and u.shape != shape):
            raise DimensionMismatch(f"flow timestep {idx} has inconsistent dimensions")
        shape = u.shape
        flows.append(FlowField(decode_flow_samples(u), decode_flow_samples(v)))
    return flows


def save_flows(directory, flows: Sequence[FlowField], start: int = 1) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(flows, start=start):
        u, v = encode_flow(f)
        save_png(d / f"u_{i:05d}.png", u)
        save_png(d / f"v_{i:05d}.png", v)


# --------------------------------------------------------------------------
# raw float dumps

def write_dump(path, image) -> Path:
    """Raw little-endian float32 dump: ``SEMI`` + u32 height, width, channels."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    h, w, c = a.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_DUMP_HEADER.pack(DUMP_MAGIC, h, w, c))
        fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    return path


def read_dump(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _DUMP_HEADER.size:
        raise DecodeError(f"{path}: truncated header")
    magic, h, w, c = _DUMP_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise DecodeError(f"{path}: bad magic {magic!r}")
    body = raw[_DUMP_HEADER.size:]
    if len(body) != 4 * h * w * c:
        raise DecodeError(f"{path}: expected {h * w * c} samples")
    return np.frombuffer(body, dtype="<f4").reshape(h, w, c).astype(np.float64)


def write_stack_dump(path, stack) -> Path:
    """Stack variant of the dump: header gains a trailing u32 T; body is T, C, H, W."""
    a = np.asarray(stack, dtype=np.float64)
    if a.ndim != 4:
        raise DimensionMismatch(f"stack must be (T, C, H, W), got {a.shape}")
    t, c, h, w = a.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_STACK_HEADER.pack(DUMP_MAGIC, h, w, c, t))
        fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    return path


def read_stack_dump(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _STACK_HEADER.size:
        raise DecodeError(f"{path}: truncated header")
    magic, h, w, c, t = _STACK_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise DecodeError(f"{path}: bad magic {magic!r}")
    body = raw[_STACK_HEADER.size:]
    if len(body) != 4 * t * c * h * w:
        raise DecodeError(f"{path}: expected {t * c * h * w} samples")
    return np.frombuffer(body, dtype="<f4").reshape(t, c, h, w).astype(np.float64)
