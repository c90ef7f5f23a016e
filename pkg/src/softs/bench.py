"""Wall-time and memory scaling of a training step against channel count."""

from __future__ import annotations

import statistics
import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from .model import ModelConfig, SoftsModel
from .train import mse_loss


@dataclass
class BenchRow:
    channels: int
    median_ms: float
    peak_mem_mb: float | None

    def to_dict(self) -> dict:
        return {"channels": self.channels, "median_ms": self.median_ms, "peak_mem_mb": self.peak_mem_mb}


def linear_fit_r2(x, y) -> tuple[float, float, float]:
    """Least-squares line ``y = a*x + b``; returns (a, b, R^2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    a, b = np.polyfit(x, y, 1)
    resid = y - (a * x + b)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(b), r2


def _train_step(model: SoftsModel, X, Y, rng) -> None:
    model.zero_grad()
    pred = model.forward(X, training=True, rng=rng)
    _, grad = mse_loss(pred, Y)
    model.backward(grad)


class _Case:
    def __init__(self, channels, batch, lookback, horizon, hidden, core, layers, pooling, seed):
        cfg = ModelConfig(lookback, horizon, channels, hidden, core, layers, pooling, seed=seed)
        self.channels = channels
        self.model = SoftsModel(cfg)
        self.rng = np.random.default_rng(seed)
        self.X = self.rng.standard_normal((batch, lookback, channels), dtype=np.float32)
        self.Y = self.rng.standard_normal((batch, horizon, channels), dtype=np.float32)

    def step(self) -> float:
        t0 = time.perf_counter()
        _train_step(self.model, self.X, self.Y, self.rng)
        return (time.perf_counter() - t0) * 1e3

    def peak_memory_mb(self) -> float:
        tracemalloc.start()
        try:
            _train_step(self.model, self.X, self.Y, self.rng)
            _, peak = tracemalloc.get_traced_memory()
        finally:
            tracemalloc.stop()
        return peak / 2**20


def time_channels(
    channel_list,
    repeat: int = 5,
    batch: int = 16,
    lookback: int = 96,
    horizon: int = 720,
    hidden: int = 256,
    core: int = 128,
    layers: int = 2,
    pooling: str = "stochastic",
    seed: int = 0,
    measure_memory: bool = True,
) -> list[BenchRow]:
    """Median forward+backward time per channel count.

    Repeats are interleaved across channel counts so that slow periods on a
    shared machine are spread over every size instead of biasing one.
    """
    cases = [
        _Case(c, batch, lookback, horizon, hidden, core, layers, pooling, seed) for c in channel_list
    ]
    for case in cases:
        case.step()  # warm-up
    times: list[list[float]] = [[] for _ in cases]
    for _ in range(repeat):
        for case, t in zip(cases, times):
            t.append(case.step())
    rows = []
    for case, t in zip(cases, times):
        peak = case.peak_memory_mb() if measure_memory else None
        rows.append(BenchRow(case.channels, statistics.median(t), peak))
    return rows


def run_bench(channel_list, repeat: int = 5, **kwargs) -> dict:
    """Time forward+backward at each channel count and fit time ~ C linearly."""
    chans = [int(c) for c in channel_list]
    if len(chans) < 3 or any(b <= a for a, b in zip(chans, chans[1:])):
        raise ValueError("channel list must be strictly ascending with at least 3 entries")
    rows = time_channels(chans, repeat=repeat, **kwargs)
    slope, intercept, r2 = linear_fit_r2(chans, [r.median_ms for r in rows])
    ratios = [
        {"from": a.channels, "to": b.channels, "ratio": b.median_ms / a.median_ms}
        for a, b in zip(rows, rows[1:])
    ]
    return {
        "rows": [r.to_dict() for r in rows],
        "fit": {"slope_ms_per_channel": slope, "intercept_ms": intercept, "r2": r2},
        "ratios": ratios,
    }
