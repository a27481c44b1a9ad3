"""Leaderboard scoring formula and a wall-clock latency benchmark.

The final score is 2^(2*PSNR) / (C * runtime_ms). The normalization
constant C is never published, so it is fitted at runtime from a known
(psnr, runtime, score) anchor row; any row of the published leaderboard
then predicts the others.
"""

from __future__ import annotations

import statistics
import warnings
from dataclasses import dataclass
from time import perf_counter

import numpy as np

CONTRACT_DIMS = (1, 180, 320, 30)


@dataclass(frozen=True)
class ScoreParams:
    """Normalization constant of the scoring formula; must be positive."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"normalization constant must be positive, got {self.c}")


# Default calibration anchor: winner row of the reference leaderboard
# (PSNR dB, runtime ms, final score).
DEFAULT_ANCHOR = (28.33, 199.0, 8.13)


def final_score(psnr_db: float, runtime_ms: float, params: ScoreParams) -> float:
    if not runtime_ms > 0:
        raise ValueError(f"runtime must be positive, got {runtime_ms}")
    return float(2.0 ** (2.0 * psnr_db) / (params.c * runtime_ms))


def fit_score_params(anchor_psnr_db: float, anchor_runtime_ms: float,
                     anchor_score: float) -> ScoreParams:
    """Recover C from one known leaderboard row."""
    if not (anchor_psnr_db >= 0 and anchor_runtime_ms > 0 and anchor_score > 0):
        raise ValueError("anchor runtime and score must be positive, psnr non-negative")
    return ScoreParams(float(2.0 ** (2.0 * anchor_psnr_db) / (anchor_runtime_ms * anchor_score)))


# --------------------------------------------------------------------------
# Benchmark harness
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchReport:
    arch: str
    dims: tuple[int, int, int, int]
    warmup: int
    runs: int
    threads: int
    times_ms: tuple[float, ...]
    mean_ms: float
    median_ms: float
    p90_ms: float

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "dims": list(self.dims),
            "warmup": self.warmup,
            "runs": self.runs,
            "threads": self.threads,
            "times_ms": list(self.times_ms),
            "mean_ms": self.mean_ms,
            "median_ms": self.median_ms,
            "p90_ms": self.p90_ms,
        }


def benchmark(model, dims=CONTRACT_DIMS, warmup: int = 1, runs: int = 20,
              threads: int = 1, seed: int = 42) -> BenchReport:
    """Repeated timed forward passes on a fixed seeded random input.

    Weight loading and input generation happen outside the timed region;
    each timed sample covers one full forward pass on the monotonic
    clock.
    """
    if runs < 1:
        raise ValueError(f"need at least one timed run, got {runs}")
    model = model.with_settings(threads=threads)
    rng = np.random.default_rng(seed)
    clip = rng.uniform(0.0, 1.0, dims).astype(np.float32)
    for _ in range(warmup):
        model.forward(clip)
    times = []
    for _ in range(runs):
        t0 = perf_counter()
        model.forward(clip)
        times.append((perf_counter() - t0) * 1000.0)
    median = float(statistics.median(times))
    p90 = float(np.percentile(times, 90))
    if runs >= 20 and p90 > 2.0 * median:
        warnings.warn(
            f"benchmark variance is high (p90 {p90:.1f} ms vs median {median:.1f} ms); "
            "the machine may not be idle", RuntimeWarning, stacklevel=2)
    return BenchReport(
        arch=model.arch,
        dims=tuple(dims),
        warmup=warmup,
        runs=runs,
        threads=threads,
        times_ms=tuple(times),
        mean_ms=float(statistics.fmean(times)),
        median_ms=median,
        p90_ms=p90,
    )
