"""Structural re-parameterization: collapse parallel 3x3 / 1x3 / 3x1
convolution branches into a single 3x3 convolution.

The asymmetric kernels are embedded into the 3x3 grid at its center row
and center column, so for any input the fused convolution equals the sum
of the three branch convolutions (exactly, in exact arithmetic).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import ConvParams, ShapeError


@dataclass(frozen=True)
class AsymBranchGroup:
    """One 3x3 branch plus 1x3 and 3x1 side branches with shared Cin/Cout."""

    k33: ConvParams
    k13: ConvParams
    k31: ConvParams

    def __post_init__(self):
        expect = {"k33": (3, 3), "k13": (1, 3), "k31": (3, 1)}
        for name, (kh, kw) in expect.items():
            p: ConvParams = getattr(self, name)
            if p.kernel.shape[:2] != (kh, kw):
                raise ShapeError(f"{name} branch must be {kh}x{kw}, got {p.kernel.shape[:2]}")
        if not (self.k33.cin == self.k13.cin == self.k31.cin):
            raise ShapeError("branch input channel counts differ")
        if not (self.k33.cout == self.k13.cout == self.k31.cout):
            raise ShapeError("branch output channel counts differ")

    @property
    def branches(self) -> tuple[ConvParams, ConvParams, ConvParams]:
        return (self.k33, self.k13, self.k31)


def fuse_acnet(group: AsymBranchGroup) -> ConvParams:
    """Fuse the three branches into one 3x3 convolution.

    The 1x3 kernel adds into row 1 and the 3x1 kernel into column 1 of
    the 3x3 grid; biases sum.
    """
    kernel = group.k33.kernel.copy()
    kernel[1, :, :, :] += group.k13.kernel[0]
    kernel[:, 1, :, :] += group.k31.kernel[:, 0]
    bias = group.k33.bias + group.k13.bias + group.k31.bias
    return ConvParams(kernel, bias)


def expand_acnet(params: ConvParams, seed: int) -> AsymBranchGroup:
    """Randomly decompose a 3x3 convolution into an equivalent branch group.

    Deterministic per seed. Side-branch taps are carved as random
    fractions of the center row/column of the source kernel (so a zero
    kernel expands to an all-zero group), and the 3x3 branch keeps the
    remainder; fusing the result reproduces the input up to float
    rounding.
    """
    if params.kernel.shape[:2] != (3, 3):
        raise ShapeError(f"can only expand 3x3 kernels, got {params.kernel.shape[:2]}")
    rng = np.random.default_rng(seed)
    k = params.kernel

    def frac(shape):
        return rng.uniform(-0.5, 0.5, shape).astype(np.float32)

    k13 = (frac(k[1:2].shape) * k[1:2]).copy()
    k31 = (frac(k[:, 1:2].shape) * k[:, 1:2]).copy()
    k33 = k.copy()
    k33[1, :, :, :] -= k13[0]
    k33[:, 1, :, :] -= k31[:, 0]
    b13 = frac(params.bias.shape) * params.bias
    b31 = frac(params.bias.shape) * params.bias
    b33 = params.bias - b13 - b31
    return AsymBranchGroup(ConvParams(k33, b33), ConvParams(k13, b13), ConvParams(k31, b31))


# Weight-container plumbing: branch groups are stored under
# "<layer>.k33/.k13/.k31" with biases "<layer>.b33/.b13/.b31"; fused
# layers under "<layer>.kernel" / "<layer>.bias".

_GROUP_KEYS = ("k33", "b33", "k13", "b13", "k31", "b31")


def group_names(weights: dict) -> list[str]:
    """Layer names stored in branch-group form, in container order."""
    names = []
    for key in weights:
        if key.endswith(".k33"):
            names.append(key[: -len(".k33")])
    return names


def _group_from_store(weights: dict, name: str) -> AsymBranchGroup:
    missing = [f"{name}.{k}" for k in _GROUP_KEYS if f"{name}.{k}" not in weights]
    if missing:
        raise KeyError(f"incomplete branch group {name!r}: missing {missing}")
    return AsymBranchGroup(
        ConvParams(weights[f"{name}.k33"], weights[f"{name}.b33"]),
        ConvParams(weights[f"{name}.k13"], weights[f"{name}.b13"]),
        ConvParams(weights[f"{name}.k31"], weights[f"{name}.b31"]),
    )


def fuse_store(weights: dict) -> dict:
    """Fuse every branch group in a weight store; other entries pass through."""
    groups = set(group_names(weights))
    fused: dict = {}
    done = set()
    for key, value in weights.items():
        stem = key.rsplit(".", 1)[0]
        if stem in groups:
            if stem not in done:
                p = fuse_acnet(_group_from_store(weights, stem))
                fused[f"{stem}.kernel"] = p.kernel
                fused[f"{stem}.bias"] = p.bias
                done.add(stem)
        else:
            fused[key] = value
    return fused


def expand_store(weights: dict, seed: int) -> dict:
    """Replace every 3x3 layer of a fused-form store with a branch group."""
    rng = np.random.default_rng(seed)
    out: dict = {}
    for key, value in weights.items():
        if key.endswith(".kernel") and value.shape[:2] == (3, 3):
            stem = key[: -len(".kernel")]
            params = ConvParams(value, weights[f"{stem}.bias"])
            group = expand_acnet(params, int(rng.integers(0, 2**31)))
            for part, branch in zip(("33", "13", "31"), group.branches):
                out[f"{stem}.k{part}"] = branch.kernel
                out[f"{stem}.b{part}"] = branch.bias
        elif key.endswith(".bias") and f"{key[:-len('.bias')]}.kernel" in weights \
                and weights[f"{key[:-len('.bias')]}.kernel"].shape[:2] == (3, 3):
            continue
        else:
            out[key] = value
    return out
