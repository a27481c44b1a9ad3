"""Dense NHWC float32 kernels used by the super-resolution models.

Tensors are plain numpy arrays shaped [N, H, W, C] with C the
fastest-varying axis. Kernels are pure functions: inputs are never
mutated and there is no shared mutable state. Convolution ships two
paths: a naive nested-loop reference and a BLAS-backed optimized path.
Both accumulate every output element in the same fixed order (kernel
row, then kernel column, then input channel), and the optimized path
always decomposes work per frame regardless of the worker-thread count,
so results are bit-identical across 1..N threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.linalg.blas import sgemm

# When true, every kernel checks its output for NaN/Inf before returning.
DEBUG_VALIDATE = os.environ.get("VSRKIT_DEBUG_VALIDATE", "") not in ("", "0")


class ShapeError(ValueError):
    """Raised when tensor extents are invalid or incompatible."""


def nhwc(data) -> np.ndarray:
    """Coerce data to a contiguous float32 NHWC tensor and validate it."""
    arr = np.ascontiguousarray(data, dtype=np.float32)
    check_nhwc(arr)
    return arr


def check_nhwc(t: np.ndarray) -> None:
    if not isinstance(t, np.ndarray) or t.ndim != 4:
        raise ShapeError(f"expected a rank-4 NHWC tensor, got {getattr(t, 'shape', type(t))}")
    if any(d < 1 for d in t.shape):
        raise ShapeError(f"all extents must be >= 1, got {t.shape}")


def _validated(out: np.ndarray) -> np.ndarray:
    if DEBUG_VALIDATE and not np.isfinite(out).all():
        raise FloatingPointError("kernel produced NaN/Inf from finite inputs")
    return out


@dataclass(frozen=True)
class ConvParams:
    """Weights of one convolution: kernel [kH, kW, Cin, Cout] plus bias [Cout].

    Stride is always 1 and padding is always same-with-zeros; kernel
    extents are restricted to {1, 3} per axis (3x3, 1x3, 3x1, 1x1).
    """

    kernel: np.ndarray
    bias: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        k = np.ascontiguousarray(self.kernel, dtype=np.float32)
        if k.ndim != 4:
            raise ShapeError(f"kernel must be [kH, kW, Cin, Cout], got shape {k.shape}")
        kh, kw = k.shape[:2]
        if kh not in (1, 3) or kw not in (1, 3):
            raise ShapeError(f"kernel extents must be in {{1, 3}}, got {kh}x{kw}")
        b = self.bias
        b = np.zeros(k.shape[3], np.float32) if b is None else np.ascontiguousarray(b, dtype=np.float32)
        if b.shape != (k.shape[3],):
            raise ShapeError(f"bias length {b.shape} does not match Cout={k.shape[3]}")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)

    @property
    def cin(self) -> int:
        return self.kernel.shape[2]

    @property
    def cout(self) -> int:
        return self.kernel.shape[3]


# --------------------------------------------------------------------------
# Convolution
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _conv2d_loops(x, k, b, out):  # pragma: no cover - exercised via conv2d
    n_, ho, wo, cout = out.shape
    kh, kw, cin, _ = k.shape
    ph = kh // 2
    pw = kw // 2
    for n in range(n_):
        for h in range(ho):
            for w in range(wo):
                for co in range(cout):
                    acc = b[co]
                    for r in range(kh):
                        ih = h + r - ph
                        if ih < 0 or ih >= ho:
                            continue
                        for s in range(kw):
                            iw = w + s - pw
                            if iw < 0 or iw >= wo:
                                continue
                            for ci in range(cin):
                                acc += x[n, ih, iw, ci] * k[r, s, ci, co]
                    out[n, h, w, co] = acc
    return out


def _conv2d_reference(x: np.ndarray, params: ConvParams) -> np.ndarray:
    out = np.empty(x.shape[:3] + (params.cout,), np.float32)
    return _conv2d_loops(np.ascontiguousarray(x), params.kernel, params.bias, out)


@numba.njit(cache=True, nogil=True)
def _fill_bands(frame, bands, ph, pw):  # pragma: no cover - exercised via conv2d
    # bands[a, w, s*cin + ci] holds source row (a - ph), column (w + s - pw),
    # with zeros outside the frame (same-zero padding baked in).
    h, w, cin = frame.shape
    kw = 2 * pw + 1
    for a in range(bands.shape[0]):
        y = a - ph
        if y < 0 or y >= h:
            bands[a, :, :] = 0.0
            continue
        for ww in range(w):
            for s in range(kw):
                src = ww + s - pw
                if src < 0 or src >= w:
                    for ci in range(cin):
                        bands[a, ww, s * cin + ci] = 0.0
                else:
                    for ci in range(cin):
                        bands[a, ww, s * cin + ci] = frame[y, src, ci]


def _conv_frame(frame, kmats, bias, ph, pw, out2d, bands=None):
    # One frame: lower to kh GEMMs of [H*W, kw*cin] @ [kw*cin, cout], each
    # accumulated into the output with BLAS beta=1. Per output element the
    # terms land in (kernel row, kernel column, input channel) order. An
    # all-zero bias skips the init pass and lets the first GEMM overwrite.
    h, w, cin = frame.shape
    beta = 0.0
    if bias is not None:
        out2d[:] = bias
        beta = 1.0
    if ph == 0 and pw == 0:
        # 1x1 kernel: the frame itself is the GEMM operand.
        flat = np.ascontiguousarray(frame).reshape(h * w, cin)
        sgemm(1.0, kmats[0].T, flat.T, beta=beta, c=out2d.T, overwrite_c=True)
        return
    if bands is None:
        bands = np.empty((h + 2 * ph, w, kmats[0].shape[0]), np.float32)
    _fill_bands(frame, bands, ph, pw)
    for r in range(len(kmats)):
        amat = bands[r:r + h].reshape(h * w, kmats[0].shape[0])
        sgemm(1.0, kmats[r].T, amat.T, beta=beta, c=out2d.T, overwrite_c=True)
        beta = 1.0


def _conv2d_optimized(x: np.ndarray, params: ConvParams, threads: int) -> np.ndarray:
    n, h, w, cin = x.shape
    kh, kw, _, cout = params.kernel.shape
    ph, pw = kh // 2, kw // 2
    kmats = [np.ascontiguousarray(params.kernel[r].reshape(kw * cin, cout))
             for r in range(kh)]
    bias = params.bias if params.bias.any() else None
    out = np.empty((n, h, w, cout), np.float32)
    # Work always splits per frame (never per thread count), so results are
    # bit-identical for any number of worker threads.
    if threads <= 1 or n == 1:
        bands = None
        if kh > 1 or kw > 1:
            bands = np.empty((h + 2 * ph, w, kw * cin), np.float32)
        for i in range(n):
            _conv_frame(x[i], kmats, bias, ph, pw, out[i].reshape(h * w, cout), bands)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            jobs = [pool.submit(_conv_frame, x[i], kmats, bias, ph, pw,
                                out[i].reshape(h * w, cout)) for i in range(n)]
            for job in jobs:
                job.result()
    return out


def conv2d(x: np.ndarray, params: ConvParams, mode: str = "optimized",
           threads: int = 1) -> np.ndarray:
    """Same-padded stride-1 2-D convolution over an NHWC tensor.

    mode "reference" is the plain nested-loop definition; "optimized"
    must agree with it to within 1e-5 on inputs in [-1, 1].
    """
    check_nhwc(x)
    if x.shape[3] != params.cin:
        raise ShapeError(f"input has {x.shape[3]} channels, kernel expects {params.cin}")
    if mode == "reference":
        out = _conv2d_reference(x, params)
    elif mode == "optimized":
        out = _conv2d_optimized(x, params, threads)
    else:
        raise ValueError(f"unknown conv2d mode {mode!r}")
    return _validated(out)


# --------------------------------------------------------------------------
# Elementwise ops
# --------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return _validated(np.maximum(x, np.float32(0.0)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, 1 / (1 + exp(-x))."""
    x = np.asarray(x)
    with np.errstate(over="ignore"):
        t = np.exp(-np.abs(x))
    pos = 1.0 / (1.0 + t)
    neg = t / (1.0 + t)
    return _validated(np.where(x >= 0, pos, neg).astype(x.dtype, copy=False))


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"add operands differ in shape: {a.shape} vs {b.shape}")
    return _validated(a + b)


def multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"multiply operands differ in shape: {a.shape} vs {b.shape}")
    return _validated(a * b)


def concat_channels(*tensors: np.ndarray) -> np.ndarray:
    parts = tensors[0] if len(tensors) == 1 and isinstance(tensors[0], (list, tuple)) else tensors
    for t in parts:
        check_nhwc(t)
    base = parts[0].shape[:3]
    if any(t.shape[:3] != base for t in parts):
        raise ShapeError("concat_channels operands must share N, H, W")
    return np.concatenate(parts, axis=3)


def split_channels(x: np.ndarray, boundaries) -> list[np.ndarray]:
    """Split along the channel axis at the given cumulative boundaries."""
    check_nhwc(x)
    bounds = list(boundaries)
    if any(b <= 0 or b >= x.shape[3] for b in bounds) or bounds != sorted(bounds):
        raise ShapeError(f"invalid split boundaries {bounds} for {x.shape[3]} channels")
    return [np.ascontiguousarray(p) for p in np.split(x, bounds, axis=3)]


# --------------------------------------------------------------------------
# Depth <-> space
# --------------------------------------------------------------------------

def depth_to_space(x: np.ndarray, block: int) -> np.ndarray:
    """Rearrange channel groups into block x block spatial tiles.

    Channel (bh*block + bw)*C' + c of input pixel (h, w) lands at output
    pixel (h*block + bh, w*block + bw), channel c.
    """
    check_nhwc(x)
    if block < 1:
        raise ShapeError(f"block must be positive, got {block}")
    n, h, w, c = x.shape
    if c % (block * block) != 0:
        raise ShapeError(f"channels {c} not divisible by block^2 = {block * block}")
    co = c // (block * block)
    y = x.reshape(n, h, w, block, block, co)
    y = y.transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(y.reshape(n, h * block, w * block, co))


def space_to_depth(x: np.ndarray, block: int) -> np.ndarray:
    """Exact inverse of depth_to_space."""
    check_nhwc(x)
    if block < 1:
        raise ShapeError(f"block must be positive, got {block}")
    n, h, w, c = x.shape
    if h % block != 0 or w % block != 0:
        raise ShapeError(f"H={h}, W={w} not divisible by block={block}")
    y = x.reshape(n, h // block, block, w // block, block, c)
    y = y.transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(y.reshape(n, h // block, w // block, c * block * block))


# --------------------------------------------------------------------------
# Resampling
# --------------------------------------------------------------------------

def _keys_cubic(x: np.ndarray) -> np.ndarray:
    # Keys cubic with a = -0.5.
    ax = np.abs(x)
    near = (1.5 * ax - 2.5) * ax * ax + 1.0
    far = ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def _sample_grid(in_size: int, out_size: int) -> np.ndarray:
    # Half-pixel centers: output pixel i samples source coordinate u(i).
    return (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5


def _linear_taps(in_size: int, out_size: int):
    u = _sample_grid(in_size, out_size)
    base = np.floor(u).astype(np.int64)
    frac = u - base
    idx = np.stack([base, base + 1], axis=1)
    weights = np.stack([1.0 - frac, frac], axis=1)
    return np.clip(idx, 0, in_size - 1), weights


def _cubic_taps(in_size: int, out_size: int, antialias: bool):
    u = _sample_grid(in_size, out_size)
    scale = out_size / in_size
    if antialias and scale < 1.0:
        # Downscaling with antialias stretches the kernel support by 1/scale.
        support = 2.0 / scale
        kern = lambda t: _keys_cubic(t * scale)
    else:
        support = 2.0
        kern = _keys_cubic
    left = np.floor(u - support).astype(np.int64) + 1
    ntaps = int(np.ceil(2.0 * support)) + 1
    idx = left[:, None] + np.arange(ntaps)[None, :]
    weights = kern(u[:, None] - idx)
    weights /= weights.sum(axis=1, keepdims=True)
    return np.clip(idx, 0, in_size - 1), weights


def _resample_axis(img: np.ndarray, idx: np.ndarray, weights: np.ndarray,
                   axis: int) -> np.ndarray:
    # img is float64 [H, W, C]; gathers taps along one axis and blends.
    shape = [1, 1, 1]
    shape[axis] = idx.shape[0]
    acc = weights[:, 0].reshape(shape) * np.take(img, idx[:, 0], axis=axis)
    for p in range(1, idx.shape[1]):
        acc += weights[:, p].reshape(shape) * np.take(img, idx[:, p], axis=axis)
    return acc


def _resize(x: np.ndarray, out_h: int, out_w: int, taps) -> np.ndarray:
    check_nhwc(x)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target extents must be >= 1, got {out_h}x{out_w}")
    n, h, w, c = x.shape
    idx_h, w_h = taps(h, out_h)
    idx_w, w_w = taps(w, out_w)
    out = np.empty((n, out_h, out_w, c), np.float32)
    for i in range(n):
        # Rows first, then columns; float64 internally so a constant image
        # stays exactly constant after the final float32 rounding.
        frame = x[i].astype(np.float64)
        frame = _resample_axis(frame, idx_h, w_h, axis=0)
        frame = _resample_axis(frame, idx_w, w_w, axis=1)
        out[i] = frame.astype(np.float32)
    return _validated(out)


def resize_bilinear(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers (no corner alignment)."""
    if (out_h, out_w) == x.shape[1:3]:
        return x.copy()
    return _resize(x, out_h, out_w, _linear_taps)


def resize_bicubic(x: np.ndarray, out_h: int, out_w: int,
                   antialias: bool = False) -> np.ndarray:
    """Keys bicubic (a = -0.5) resampling with half-pixel centers.

    With antialias=True, downscaling widens the filter support by the
    inverse scale factor, matching the usual imresize behaviour. Border
    samples clamp to the nearest edge pixel; tap weights are normalized
    so constant images are preserved exactly.
    """
    return _resize(x, out_h, out_w, lambda size, out: _cubic_taps(size, out, antialias))
