"""Declarative model specs and forward passes for the five supported
upscalers.

Every architecture maps a packed clip tensor [1, H, W, 3F] (frame f in
channels 3f..3f+2) to [1, 4H, 4W, 3F]. The per-frame networks move the
frame axis into the batch dimension and process all frames at once; the
bidirectional recurrent network walks the sequence in both directions.

Convolution layers may be stored either fused ("<layer>.kernel/.bias")
or as asymmetric branch groups ("<layer>.k33/.k13/.k31" plus biases), in
which case the three branches run in parallel and their outputs sum.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numba
import numpy as np

from .kernels import (ConvParams, ShapeError, add, concat_channels, conv2d,
                      depth_to_space, multiply, relu, resize_bilinear,
                      resize_bicubic, sigmoid)

ARCH_NAMES = ("tinyvsrnet", "evsrnet", "imdn_s", "birnn", "bicubic_baseline")

SCALE = 4
FRAMES_PER_CLIP = 10


class WeightError(KeyError):
    """Raised when a weight store does not match the model spec."""


@dataclass(frozen=True)
class ConvDef:
    name: str
    kh: int
    kw: int
    cin: int
    cout: int


@dataclass(frozen=True)
class ModelSpec:
    arch: str
    width: int
    blocks: int
    convs: tuple[ConvDef, ...]
    scale: int = SCALE
    frames_per_clip: int = FRAMES_PER_CLIP

    def param_names(self) -> list[str]:
        names = []
        for c in self.convs:
            names.append(f"{c.name}.kernel")
            names.append(f"{c.name}.bias")
        return names


def _res_tower(width: int, blocks: int, tail_cout: int) -> list[ConvDef]:
    convs = [ConvDef("head", 3, 3, 3, width)]
    for i in range(1, blocks + 1):
        convs.append(ConvDef(f"block{i}.conv1", 3, 3, width, width))
        convs.append(ConvDef(f"block{i}.conv2", 3, 3, width, width))
    convs.append(ConvDef("tail", 3, 3, width, tail_cout))
    return convs


def _imdb_convs(prefix: str, width: int) -> list[ConvDef]:
    d = width // 4
    return [
        ConvDef(f"{prefix}.conv1", 3, 3, width, width),
        ConvDef(f"{prefix}.conv2", 3, 3, width - d, width - d),
        ConvDef(f"{prefix}.conv3", 3, 3, width - 2 * d, d),
        ConvDef(f"{prefix}.fuse", 1, 1, 3 * d, width),
    ]


def _build_specs() -> dict[str, ModelSpec]:
    specs = {}
    specs["tinyvsrnet"] = ModelSpec("tinyvsrnet", width=16, blocks=3,
                                    convs=tuple(_res_tower(16, 3, 48)))
    specs["evsrnet"] = ModelSpec("evsrnet", width=8, blocks=5,
                                 convs=tuple(_res_tower(8, 5, 48)))

    imdn = [ConvDef("head", 3, 3, 3, 12)]
    for i in range(1, 4):
        imdn += _imdb_convs(f"block{i}", 12)
    imdn.append(ConvDef("tail", 3, 3, 12, 48))
    specs["imdn_s"] = ModelSpec("imdn_s", width=12, blocks=3, convs=tuple(imdn))

    birnn = []
    for stem in ("feb_f", "feb_b"):
        birnn.append(ConvDef(f"{stem}.conv1", 3, 3, 3, 16))
        birnn.append(ConvDef(f"{stem}.conv2", 3, 3, 16, 16))
    for stem in ("merge_f", "merge_b"):
        birnn.append(ConvDef(f"{stem}.conv1", 3, 3, 32, 16))
        birnn.append(ConvDef(f"{stem}.conv2", 3, 3, 16, 16))
    birnn.append(ConvDef("sel.gate", 1, 1, 32, 32))
    birnn += _imdb_convs("imdb", 32)
    birnn.append(ConvDef("up1", 3, 3, 32, 48))
    birnn.append(ConvDef("up2", 3, 3, 12, 12))
    specs["birnn"] = ModelSpec("birnn", width=32, blocks=1, convs=tuple(birnn))

    specs["bicubic_baseline"] = ModelSpec("bicubic_baseline", width=0, blocks=0, convs=())
    return specs


_SPECS = _build_specs()


def get_spec(arch: str) -> ModelSpec:
    try:
        return _SPECS[arch]
    except KeyError:
        raise ValueError(f"unknown architecture {arch!r}; choose from {ARCH_NAMES}") from None


# --------------------------------------------------------------------------
# Clip packing
# --------------------------------------------------------------------------

def unpack_frames(packed: np.ndarray) -> np.ndarray:
    """[1, H, W, 3F] -> [F, H, W, 3]; pure reshape/permute, no arithmetic."""
    if packed.ndim != 4 or packed.shape[0] != 1:
        raise ShapeError(f"packed clip must have batch 1, got shape {packed.shape}")
    if packed.shape[3] % 3:
        raise ShapeError(f"packed channels {packed.shape[3]} not divisible by 3")
    _, h, w, c = packed.shape
    frames = packed.reshape(h, w, c // 3, 3).transpose(2, 0, 1, 3)
    return np.ascontiguousarray(frames)


def pack_frames(frames: np.ndarray) -> np.ndarray:
    """[F, H, W, 3] -> [1, H, W, 3F]; inverse of unpack_frames."""
    if frames.ndim != 4 or frames.shape[3] != 3:
        raise ShapeError(f"expected [F, H, W, 3], got {frames.shape}")
    f, h, w, _ = frames.shape
    packed = frames.transpose(1, 2, 0, 3).reshape(1, h, w, 3 * f)
    return np.ascontiguousarray(packed)


# --------------------------------------------------------------------------
# Weight stores
# --------------------------------------------------------------------------

def init_weights(spec: ModelSpec, seed: int) -> dict:
    """He-uniform (fan-in) kernels with zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    weights: dict = {}
    for c in spec.convs:
        fan_in = c.kh * c.kw * c.cin
        limit = np.sqrt(6.0 / fan_in)
        kernel = rng.uniform(-limit, limit, (c.kh, c.kw, c.cin, c.cout))
        weights[f"{c.name}.kernel"] = kernel.astype(np.float32)
        weights[f"{c.name}.bias"] = np.zeros(c.cout, np.float32)
    return weights


def validate_weights(spec: ModelSpec, weights: dict) -> None:
    """Check the stored names cover the spec exactly (fused or branch form)."""
    expected = set()
    for c in spec.convs:
        fused = {f"{c.name}.kernel", f"{c.name}.bias"}
        branch = {f"{c.name}.{k}" for k in ("k33", "b33", "k13", "b13", "k31", "b31")}
        if fused <= weights.keys():
            expected |= fused
        elif c.kh == c.kw == 3 and branch <= weights.keys():
            expected |= branch
        else:
            raise WeightError(f"missing weights for layer {c.name!r} of {spec.arch}")
    extra = sorted(weights.keys() - expected)
    if extra:
        raise WeightError(f"unexpected tensors in store for {spec.arch}: {extra}")


def _conv(x, weights, name, mode, threads):
    kernel = weights.get(f"{name}.kernel")
    if kernel is not None:
        return conv2d(x, ConvParams(kernel, weights[f"{name}.bias"]), mode, threads)
    if f"{name}.k33" not in weights:
        raise WeightError(f"no weights for conv layer {name!r}")
    out = conv2d(x, ConvParams(weights[f"{name}.k33"], weights[f"{name}.b33"]), mode, threads)
    out = add(out, conv2d(x, ConvParams(weights[f"{name}.k13"], weights[f"{name}.b13"]),
                          mode, threads))
    out = add(out, conv2d(x, ConvParams(weights[f"{name}.k31"], weights[f"{name}.b31"]),
                          mode, threads))
    return out


# --------------------------------------------------------------------------
# Building blocks
# --------------------------------------------------------------------------

def _relu_(y):
    # In-place variant used on conv outputs the caller owns.
    return np.maximum(y, np.float32(0.0), out=y)


def _res_block(x, weights, prefix, mode, threads):
    # ReLU after the first conv only, identity after the second, then skip.
    y = _relu_(_conv(x, weights, f"{prefix}.conv1", mode, threads))
    y = _conv(y, weights, f"{prefix}.conv2", mode, threads)
    return np.add(y, x, out=y)


def _imdb_block(x, weights, prefix, width, mode, threads):
    # Progressive distillation: peel `d` channels after each 3x3 conv,
    # re-project the concatenated distillate, then local skip.
    d = width // 4
    y = _relu_(_conv(x, weights, f"{prefix}.conv1", mode, threads))
    d1, r1 = y[..., :d], y[..., d:]
    y = _relu_(_conv(r1, weights, f"{prefix}.conv2", mode, threads))
    d2, r2 = y[..., :d], y[..., d:]
    d3 = _relu_(_conv(r2, weights, f"{prefix}.conv3", mode, threads))
    distilled = concat_channels(d1, d2, d3)
    y = _conv(distilled, weights, f"{prefix}.fuse", mode, threads)
    return np.add(y, x, out=y)


def _feb(x, weights, prefix, mode, threads):
    # Feature extraction block: conv, ReLU, conv, ReLU.
    y = _relu_(_conv(x, weights, f"{prefix}.conv1", mode, threads))
    return _relu_(_conv(y, weights, f"{prefix}.conv2", mode, threads))


@numba.njit(cache=True, nogil=True)
def _emit_upscaled(tail, skip, out, block, chan0, use_skip):  # pragma: no cover
    # Fused depth-to-space + optional skip-add + clip packing: channel
    # (bh*block + bw)*3 + ci of low-res pixel (hh, ww) in frame f lands at
    # output pixel (hh*block + bh, ww*block + bw), packed channel
    # (chan0 + f)*3 + ci.
    count, h, w, _ = tail.shape
    for hh in range(h):
        for bh in range(block):
            oh = hh * block + bh
            for ww in range(w):
                for bw in range(block):
                    ow = ww * block + bw
                    base = (bh * block + bw) * 3
                    for f in range(count):
                        for ci in range(3):
                            v = tail[f, hh, ww, base + ci]
                            if use_skip:
                                v += skip[f, oh, ow, ci]
                            out[0, oh, ow, (chan0 + f) * 3 + ci] = v


_NO_SKIP = np.zeros((1, 1, 1, 1), np.float32)


def _emit(tail, skip, out, block, chan0=0):
    if skip is None:
        _emit_upscaled(tail, _NO_SKIP, out, block, chan0, False)
    else:
        _emit_upscaled(tail, skip, out, block, chan0, True)


# --------------------------------------------------------------------------
# Forward passes
# --------------------------------------------------------------------------

def _alloc_output(frames):
    count, h, w = frames.shape[:3]
    return np.empty((1, SCALE * h, SCALE * w, 3 * count), np.float32)


def forward_tinyvsrnet(packed, weights, mode="optimized", threads=1):
    frames = unpack_frames(packed)
    h, w = frames.shape[1:3]
    feat = _conv(frames, weights, "head", mode, threads)
    for i in (1, 2, 3):
        feat = _res_block(feat, weights, f"block{i}", mode, threads)
    tail = _conv(feat, weights, "tail", mode, threads)
    skip = resize_bilinear(frames, SCALE * h, SCALE * w)
    out = _alloc_output(frames)
    _emit(tail, skip, out, SCALE)
    return out


def forward_evsrnet(packed, weights, mode="optimized", threads=1):
    frames = unpack_frames(packed)
    feat = _conv(frames, weights, "head", mode, threads)
    for i in (1, 2, 3, 4, 5):
        feat = _res_block(feat, weights, f"block{i}", mode, threads)
    tail = _conv(feat, weights, "tail", mode, threads)
    out = _alloc_output(frames)
    _emit(tail, None, out, SCALE)
    return out


def forward_imdn_s(packed, weights, mode="optimized", threads=1):
    frames = unpack_frames(packed)
    head = _conv(frames, weights, "head", mode, threads)
    feat = head
    for i in (1, 2, 3):
        feat = _imdb_block(feat, weights, f"block{i}", 12, mode, threads)
    feat = add(feat, head)  # feature-level global skip
    tail = _conv(feat, weights, "tail", mode, threads)
    out = _alloc_output(frames)
    _emit(tail, None, out, SCALE)
    return out


def forward_birnn(packed, weights, mode="optimized", threads=1):
    frames = unpack_frames(packed)
    count, h, w = frames.shape[:3]
    feat_f = _feb(frames, weights, "feb_f", mode, threads)
    feat_b = _feb(frames, weights, "feb_b", mode, threads)

    states_f = []
    state = np.zeros((1, h, w, 16), np.float32)
    for t in range(count):
        state = _feb(concat_channels(feat_f[t:t + 1], state), weights, "merge_f",
                     mode, threads)
        states_f.append(state)

    states_b: list = [None] * count
    state = np.zeros((1, h, w, 16), np.float32)
    for t in reversed(range(count)):
        state = _feb(concat_channels(feat_b[t:t + 1], state), weights, "merge_b",
                     mode, threads)
        states_b[t] = state

    out = _alloc_output(frames)
    for t in range(count):
        z = concat_channels(states_f[t], states_b[t])
        gate = sigmoid(_conv(relu(z), weights, "sel.gate", mode, threads))
        y = _imdb_block(multiply(z, gate), weights, "imdb", 32, mode, threads)
        y = depth_to_space(_conv(y, weights, "up1", mode, threads), 2)
        y = _conv(y, weights, "up2", mode, threads)
        skip = resize_bilinear(frames[t:t + 1], SCALE * h, SCALE * w)
        _emit(y, skip, out, 2, chan0=t)
    return out


def forward_bicubic_baseline(packed, weights=None, mode="optimized", threads=1):
    frames = unpack_frames(packed)
    h, w = frames.shape[1:3]
    return pack_frames(resize_bicubic(frames, SCALE * h, SCALE * w, antialias=False))


_FORWARDS = {
    "tinyvsrnet": forward_tinyvsrnet,
    "evsrnet": forward_evsrnet,
    "imdn_s": forward_imdn_s,
    "birnn": forward_birnn,
    "bicubic_baseline": forward_bicubic_baseline,
}


@dataclass(frozen=True)
class Model:
    """A loaded architecture: spec plus weights plus execution settings."""

    spec: ModelSpec
    weights: dict
    mode: str = "optimized"
    threads: int = 1

    def __post_init__(self):
        if self.spec.convs:
            validate_weights(self.spec, self.weights)

    @property
    def arch(self) -> str:
        return self.spec.arch

    def with_settings(self, mode: str | None = None, threads: int | None = None) -> "Model":
        return replace(self, mode=mode or self.mode,
                       threads=self.threads if threads is None else threads)

    def forward(self, packed: np.ndarray) -> np.ndarray:
        return _FORWARDS[self.arch](packed, self.weights, self.mode, self.threads)

    __call__ = forward


def load_model(arch: str, weights: dict | None = None, seed: int = 42,
               mode: str = "optimized", threads: int = 1) -> Model:
    """Build a model from explicit weights or seeded random initialization."""
    spec = get_spec(arch)
    if weights is None:
        weights = init_weights(spec, seed)
    return Model(spec, weights, mode=mode, threads=threads)
