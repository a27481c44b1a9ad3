"""Fidelity metrics: PSNR and windowed SSIM, aggregated per clip and per
dataset by plain arithmetic means over frames and clips respectively.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import ClipSequence
from .kernels import ShapeError

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(pred: np.ndarray, ref: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) over all pixels and channels jointly, in dB.

    Identical inputs return the cap value of 100 dB, which is also the
    upper bound reported for vanishingly small errors.
    """
    if pred.shape != ref.shape:
        raise ShapeError(f"psnr shape mismatch: {pred.shape} vs {ref.shape}")
    mse = float(np.mean((pred.astype(np.float64) - ref.astype(np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # Separable windowed mean over valid (fully inside) positions.
    size = g.shape[0]
    h, w = img.shape[:2]
    rows = np.zeros((h - size + 1,) + img.shape[1:], np.float64)
    for k in range(size):
        rows += g[k] * img[k:h - size + 1 + k]
    out = np.zeros((rows.shape[0], w - size + 1) + img.shape[2:], np.float64)
    for k in range(size):
        out += g[k] * rows[:, k:w - size + 1 + k]
    return out


def ssim(pred: np.ndarray, ref: np.ndarray, peak: float = 1.0) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), all channels.

    Inputs are [H, W, C] (or [H, W], treated as one channel); every
    channel is scored independently and the map is averaged over window
    positions and channels.
    """
    if pred.shape != ref.shape:
        raise ShapeError(f"ssim shape mismatch: {pred.shape} vs {ref.shape}")
    if pred.ndim == 2:
        pred, ref = pred[..., None], ref[..., None]
    if pred.ndim != 3:
        raise ShapeError(f"ssim expects [H, W, C] frames, got {pred.shape}")
    if pred.shape[0] < SSIM_WINDOW or pred.shape[1] < SSIM_WINDOW:
        raise ShapeError(
            f"frame {pred.shape[:2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")

    x = pred.astype(np.float64)
    y = ref.astype(np.float64)
    g = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    var_x = _filter_valid(x * x, g) - mu_x * mu_x
    var_y = _filter_valid(y * y, g) - mu_y * mu_y
    cov = _filter_valid(x * y, g) - mu_x * mu_y
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    ssim_map = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2) /
                ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)))
    return float(ssim_map.mean())


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameScore:
    i: int
    psnr: float
    ssim: float


@dataclass(frozen=True)
class ClipReport:
    name: str
    frames: tuple[FrameScore, ...]
    psnr: float
    ssim: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "psnr": self.psnr,
            "ssim": self.ssim,
            "frames": [{"i": f.i, "psnr": f.psnr, "ssim": f.ssim} for f in self.frames],
        }


@dataclass(frozen=True)
class EvalReport:
    clips: tuple[ClipReport, ...]
    psnr: float
    ssim: float

    def to_dict(self) -> dict:
        return {"clips": [c.to_dict() for c in self.clips],
                "psnr": self.psnr, "ssim": self.ssim}


def evaluate_clip(pred: ClipSequence, ref: ClipSequence,
                  name: str | None = None) -> ClipReport:
    """Per-frame PSNR/SSIM plus their arithmetic means over the clip."""
    if len(pred) != len(ref):
        raise ShapeError(f"frame count mismatch: {len(pred)} vs {len(ref)}")
    scores = []
    for i, (p, r) in enumerate(zip(pred.frames, ref.frames)):
        if p.shape != r.shape:
            raise ShapeError(f"frame {i} size mismatch: {p.shape} vs {r.shape}")
        scores.append(FrameScore(i, psnr(p, r), ssim(p, r)))
    return ClipReport(
        name=name if name is not None else pred.name,
        frames=tuple(scores),
        psnr=float(np.mean([s.psnr for s in scores])),
        ssim=float(np.mean([s.ssim for s in scores])),
    )


def build_report(clips) -> EvalReport:
    """Dataset-level report: means of the per-clip means."""
    clips = tuple(clips)
    if not clips:
        raise ValueError("cannot build a report from zero clips")
    return EvalReport(
        clips=clips,
        psnr=float(np.mean([c.psnr for c in clips])),
        ssim=float(np.mean([c.ssim for c in clips])),
    )
