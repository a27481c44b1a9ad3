"""Independent oracle implementations used to cross-check the engine.

Everything here is deliberately written from the underlying math,
without importing the corresponding production code paths: bicubic
resampling is evaluated directly (non-separable 2-D weights, and a plain
1-D variant), and SSIM is computed window by window.
"""

import numpy as np


def keys_cubic(x):
    """Keys cubic interpolation kernel with a = -0.5 (scalar or array)."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    out = np.zeros_like(x)
    near = x <= 1.0
    out[near] = 1.5 * x[near] ** 3 - 2.5 * x[near] ** 2 + 1.0
    mid = (x > 1.0) & (x < 2.0)
    out[mid] = -0.5 * x[mid] ** 3 + 2.5 * x[mid] ** 2 - 4.0 * x[mid] + 2.0
    return out


def _source_coord(i, in_size, out_size):
    # Half-pixel centers mapping from output pixel index to source coordinate.
    return (i + 0.5) * (in_size / out_size) - 0.5


def bicubic_1d_oracle(signal, out_size, antialias=False):
    """Direct 1-D bicubic resample of a vector, clamped at the borders."""
    signal = np.asarray(signal, dtype=np.float64)
    in_size = signal.shape[0]
    scale = out_size / in_size
    if antialias and scale < 1.0:
        support, shrink = 2.0 / scale, scale
    else:
        support, shrink = 2.0, 1.0
    out = np.zeros(out_size)
    for i in range(out_size):
        u = _source_coord(i, in_size, out_size)
        j0 = int(np.floor(u - support)) + 1
        taps = np.arange(j0, j0 + int(np.ceil(2 * support)) + 1)
        w = keys_cubic((u - taps) * shrink)
        w = w / w.sum()
        out[i] = (w * signal[np.clip(taps, 0, in_size - 1)]).sum()
    return out


def bicubic_2d_oracle(img, out_h, out_w, antialias=False):
    """Direct non-separable 2-D bicubic resample of one [H, W, C] image.

    Every output pixel gathers its full 2-D tap neighbourhood and applies
    the joint weight w(dy)*w(dx), normalized over the whole window.
    """
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape[:2]

    def taps(in_size, out_size):
        scale = out_size / in_size
        if antialias and scale < 1.0:
            return 2.0 / scale, scale
        return 2.0, 1.0

    sup_y, shr_y = taps(in_h, out_h)
    sup_x, shr_x = taps(in_w, out_w)
    out = np.zeros((out_h, out_w) + img.shape[2:])
    for i in range(out_h):
        uy = _source_coord(i, in_h, out_h)
        y0 = int(np.floor(uy - sup_y)) + 1
        ys = np.arange(y0, y0 + int(np.ceil(2 * sup_y)) + 1)
        wy = keys_cubic((uy - ys) * shr_y)
        ys = np.clip(ys, 0, in_h - 1)
        for j in range(out_w):
            ux = _source_coord(j, in_w, out_w)
            x0 = int(np.floor(ux - sup_x)) + 1
            xs = np.arange(x0, x0 + int(np.ceil(2 * sup_x)) + 1)
            wx = keys_cubic((ux - xs) * shr_x)
            xs = np.clip(xs, 0, in_w - 1)
            w2 = np.outer(wy, wx)
            patch = img[np.ix_(ys, xs)]
            out[i, j] = np.tensordot(w2, patch, axes=([0, 1], [0, 1])) / w2.sum()
    return out


def ssim_brute(pred, ref, window=11, sigma=1.5, k1=0.01, k2=0.03, peak=1.0):
    """Per-window SSIM computed with explicit loops over valid positions."""
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.ndim == 2:
        pred, ref = pred[..., None], ref[..., None]
    offsets = np.arange(window) - (window - 1) / 2.0
    g1 = np.exp(-offsets ** 2 / (2.0 * sigma ** 2))
    g1 /= g1.sum()
    g2 = np.outer(g1, g1)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    h, w, chans = pred.shape
    values = []
    for c in range(chans):
        for i in range(h - window + 1):
            for j in range(w - window + 1):
                x = pred[i:i + window, j:j + window, c]
                y = ref[i:i + window, j:j + window, c]
                mx = (g2 * x).sum()
                my = (g2 * y).sum()
                vx = (g2 * x * x).sum() - mx * mx
                vy = (g2 * y * y).sum() - my * my
                cov = (g2 * x * y).sum() - mx * my
                values.append(((2 * mx * my + c1) * (2 * cov + c2)) /
                              ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(values))


def random_nhwc(rng, shape, lo=-1.0, hi=1.0):
    return rng.uniform(lo, hi, shape).astype(np.float32)
