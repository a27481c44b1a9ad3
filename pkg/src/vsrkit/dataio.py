"""Frame-sequence and weight-container I/O plus the bicubic degradation
pipeline.

Clips live on disk as directories of zero-padded PNG frames
(``<clip>/00000000.png`` ...). Weights use a little-endian binary
container (magic ``VSRW``), and single tensors can be dumped in a raw
``TNSR`` format for cross-checking against other tooling.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .kernels import resize_bicubic

WEIGHT_MAGIC = b"VSRW"
WEIGHT_VERSION = 1
TENSOR_MAGIC = b"TNSR"
_DTYPE_F32 = 0
_MAX_RANK = 8


class ClipError(ValueError):
    """Raised for unreadable, empty or inconsistent frame directories."""


class ContainerError(ValueError):
    """Base class for weight/tensor container format errors."""


class BadMagicError(ContainerError):
    pass


class TruncatedError(ContainerError):
    pass


class DuplicateNameError(ContainerError):
    pass


class UnsupportedDtypeError(ContainerError):
    pass


# --------------------------------------------------------------------------
# Clips
# --------------------------------------------------------------------------

@dataclass
class ClipSequence:
    """An ordered list of [H, W, 3] float32 frames in [0, 1]."""

    frames: list[np.ndarray]
    name: str = "clip"
    fps: float = 24.0

    def __post_init__(self):
        if not self.frames:
            raise ClipError(f"clip {self.name!r} has no frames")
        shape = self.frames[0].shape
        for i, f in enumerate(self.frames):
            if f.ndim != 3 or f.shape[2] != 3:
                raise ClipError(f"frame {i} of {self.name!r} is not HxWx3: {f.shape}")
            if f.shape != shape:
                raise ClipError(
                    f"frame {i} of {self.name!r} has size {f.shape[:2]}, expected {shape[:2]}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].shape[0]

    @property
    def width(self) -> int:
        return self.frames[0].shape[1]


def load_clip(directory) -> ClipSequence:
    """Load a PNG frame directory, ordered by the numeric filename value."""
    entries = []
    for fname in os.listdir(directory):
        stem, ext = os.path.splitext(fname)
        if ext.lower() != ".png":
            continue
        try:
            order = int(stem)
        except ValueError:
            raise ClipError(f"frame name {fname!r} is not a zero-padded integer")
        entries.append((order, fname))
    if not entries:
        raise ClipError(f"no frames found in {directory}")
    frames = []
    for _, fname in sorted(entries):
        with Image.open(os.path.join(directory, fname)) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float32)
        frames.append(rgb / np.float32(255.0))
    return ClipSequence(frames, name=os.path.basename(os.path.normpath(str(directory))))


def _atomic_write(path, data: bytes) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def frame_to_u8(frame: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and quantize to 8-bit by rounding."""
    return np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_clip(clip: ClipSequence, directory) -> list[str]:
    """Write frames as 00000000.png, 00000001.png, ... (atomic per file)."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, frame in enumerate(clip.frames):
        path = os.path.join(directory, f"{i:08d}.png")
        img = Image.fromarray(frame_to_u8(frame), mode="RGB")
        tmp = f"{path}.tmp.{os.getpid()}"
        img.save(tmp, format="PNG")
        os.replace(tmp, path)
        paths.append(path)
    return paths


def degrade_clip(clip: ClipSequence, scale: int = 4) -> ClipSequence:
    """Bicubic antialiased downscale of every frame by the given factor."""
    h, w = clip.height, clip.width
    if h % scale or w % scale:
        raise ClipError(f"frame size {h}x{w} not divisible by scale {scale}")
    frames = []
    for frame in clip.frames:
        small = resize_bicubic(frame[None], h // scale, w // scale, antialias=True)[0]
        frames.append(np.clip(small, 0.0, 1.0))
    return ClipSequence(frames, name=clip.name, fps=clip.fps)


def synthetic_clip(num_frames: int = 10, height: int = 64, width: int = 64,
                   seed: int = 0, name: str = "synthetic") -> ClipSequence:
    """Deterministic smooth moving-gradient clip for dataset-free tests."""
    rng = np.random.default_rng(seed)
    fy = rng.uniform(0.5, 2.0, 3)
    fx = rng.uniform(0.5, 2.0, 3)
    phase = rng.uniform(0.0, 2.0 * np.pi, 3)
    drift = rng.uniform(0.02, 0.08, 3)
    yy = np.linspace(0.0, 1.0, height)[:, None, None]
    xx = np.linspace(0.0, 1.0, width)[None, :, None]
    frames = []
    for t in range(num_frames):
        wave = np.sin(2.0 * np.pi * (fy * yy + fx * xx) + phase + 2.0 * np.pi * drift * t)
        frames.append((0.5 + 0.45 * wave).astype(np.float32))
    return ClipSequence(frames, name=name)


# --------------------------------------------------------------------------
# Clip tensor packing (frame f occupies channels 3f..3f+2)
# --------------------------------------------------------------------------

def make_clip_tensor(frames) -> np.ndarray:
    """Pack a window of [H, W, 3] frames into one [1, H, W, 3F] tensor."""
    frames = list(frames)
    if not frames:
        raise ClipError("cannot pack an empty frame window")
    shape = frames[0].shape
    if any(f.shape != shape for f in frames):
        raise ClipError("all frames in a window must share dimensions")
    return np.ascontiguousarray(np.concatenate(frames, axis=2)[None])


def split_clip_tensor(packed: np.ndarray) -> list[np.ndarray]:
    """Inverse of make_clip_tensor; bitwise round-trip."""
    if packed.ndim != 4 or packed.shape[0] != 1 or packed.shape[3] % 3:
        raise ClipError(f"not a packed clip tensor: shape {packed.shape}")
    count = packed.shape[3] // 3
    return [np.ascontiguousarray(packed[0, :, :, 3 * f:3 * f + 3]) for f in range(count)]


# --------------------------------------------------------------------------
# Binary containers
# --------------------------------------------------------------------------

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise TruncatedError(
                f"container truncated: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def _read_extents(r: _Reader) -> tuple[int, ...]:
    rank = r.u8()
    if rank > _MAX_RANK:
        raise ContainerError(f"rank {rank} exceeds supported maximum {_MAX_RANK}")
    return tuple(r.u32() for _ in range(rank))


def _read_payload(r: _Reader, extents: tuple[int, ...]) -> np.ndarray:
    count = 1
    for e in extents:
        count *= e
    # Validate against the remaining bytes before touching the payload so a
    # corrupt header cannot trigger a huge allocation.
    nbytes = count * 4
    if r.pos + nbytes > len(r.data):
        raise TruncatedError(
            f"payload of {nbytes} bytes for extents {extents} exceeds container size")
    payload = np.frombuffer(r.take(nbytes), dtype="<f4")
    return payload.reshape(extents).astype(np.float32, copy=True)


def save_weights(weights: dict, path) -> None:
    """Serialize an ordered name->tensor map to the VSRW container format."""
    blobs = [WEIGHT_MAGIC, struct.pack("<II", WEIGHT_VERSION, len(weights))]
    seen = set()
    for name, tensor in weights.items():
        if not name:
            raise ContainerError("tensor names must be non-empty")
        if name in seen:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        seen.add(name)
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        encoded = name.encode("utf-8")
        blobs.append(struct.pack("<H", len(encoded)))
        blobs.append(encoded)
        blobs.append(struct.pack("<BB", _DTYPE_F32, arr.ndim))
        blobs.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        blobs.append(arr.tobytes())
    _atomic_write(path, b"".join(blobs))


def load_weights(path) -> dict:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4) != WEIGHT_MAGIC:
        raise BadMagicError(f"{path} is not a weight container (bad magic)")
    version = r.u32()
    if version != WEIGHT_VERSION:
        raise ContainerError(f"unsupported container version {version}")
    count = r.u32()
    weights: dict = {}
    for _ in range(count):
        try:
            name = r.take(r.u16()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ContainerError(f"tensor name is not valid UTF-8: {exc}") from exc
        if not name:
            raise ContainerError("tensor names must be non-empty")
        if name in weights:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        dtype = r.u8()
        if dtype != _DTYPE_F32:
            raise UnsupportedDtypeError(f"unsupported dtype code {dtype} for {name!r}")
        weights[name] = _read_payload(r, _read_extents(r))
    if r.pos != len(r.data):
        raise ContainerError(f"{len(r.data) - r.pos} trailing bytes after last tensor")
    return weights


def save_tensor(tensor: np.ndarray, path) -> None:
    """Dump one tensor in the raw TNSR format (rank, extents, f32 payload)."""
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    blob = [TENSOR_MAGIC, struct.pack("<B", arr.ndim),
            struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    _atomic_write(path, b"".join(blob))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4) != TENSOR_MAGIC:
        raise BadMagicError(f"{path} is not a tensor dump (bad magic)")
    arr = _read_payload(r, _read_extents(r))
    if r.pos != len(r.data):
        raise ContainerError(f"{len(r.data) - r.pos} trailing bytes after payload")
    return arr
