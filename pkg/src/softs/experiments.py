"""Benchmark reproduction helpers: small hyperparameter grid, seed averaging."""

from __future__ import annotations

import itertools
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import ForecastData, SplitSpec, load_csv
from .model import ModelConfig, SoftsModel
from .train import TrainConfig, evaluate, fit

log = logging.getLogger(__name__)

DEFAULT_GRID = {"layers": (1, 2), "hidden": (128, 256), "core": (64,)}


def find_dataset(name: str, search=None) -> Path | None:
    """Locate ``<name>.csv`` under ``$SOFTS_DATA_DIR``, ``./data`` or ``search``."""
    dirs = [os.environ.get("SOFTS_DATA_DIR"), *(search or []), "data", "dataset", "."]
    for d in dirs:
        if not d:
            continue
        for cand in (Path(d) / f"{name}.csv", Path(d) / "ETT-small" / f"{name}.csv"):
            if cand.is_file():
                return cand
    return None


@dataclass
class RunResult:
    config: ModelConfig
    seed: int
    val_mse: float
    test_mse: float
    test_mae: float


def train_and_score(data: ForecastData, mcfg: ModelConfig, tcfg: TrainConfig) -> RunResult:
    model, _ = fit(SoftsModel(mcfg), data, tcfg)
    val_mse, _ = evaluate(model, data, "val")
    test_mse, test_mae = evaluate(model, data, "test")
    log.info("%s seed=%d val=%.4f test=%.4f/%.4f", mcfg, tcfg.seed, val_mse, test_mse, test_mae)
    return RunResult(mcfg, tcfg.seed, val_mse, test_mse, test_mae)


def grid_configs(base: ModelConfig, grid: dict) -> list[ModelConfig]:
    keys = sorted(grid)
    out = []
    for values in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, values))
        if params.get("core", base.core) > params.get("hidden", base.hidden):
            continue
        out.append(replace(base, **params))
    return out


def reproduce(
    csv_path,
    horizon: int = 96,
    lookback: int = 96,
    grid: dict | None = None,
    seeds=(0, 1, 2),
    pooling: str = "stochastic",
    baseline: bool = False,
    train_cfg: TrainConfig | None = None,
    split_spec: SplitSpec | None = None,
) -> dict:
    """Pick the grid point with the best validation MSE (first seed), then
    report test MSE/MAE averaged over ``seeds`` for that point."""
    raw = load_csv(csv_path)
    spec = split_spec or SplitSpec.for_dataset(str(csv_path))
    data = ForecastData.from_raw(raw, spec, lookback, horizon)
    tcfg = train_cfg or TrainConfig()
    base = ModelConfig(lookback, horizon, raw.n_channels, pooling=pooling, baseline=baseline)
    candidates = grid_configs(base, grid if grid is not None else DEFAULT_GRID)
    seeds = list(seeds)
    if len(candidates) == 1:
        best = candidates[0]
        first = None
    else:
        scored = [
            train_and_score(data, replace(c, seed=seeds[0]), replace(tcfg, seed=seeds[0]))
            for c in candidates
        ]
        first = min(scored, key=lambda r: r.val_mse)
        best = first.config
    runs = [first] if first is not None else []
    for s in seeds:
        if first is not None and s == first.seed:
            continue
        runs.append(train_and_score(data, replace(best, seed=s), replace(tcfg, seed=s)))
    return {
        "config": replace(best, seed=0).to_dict(),
        "runs": [{"seed": r.seed, "val_mse": r.val_mse, "test_mse": r.test_mse, "test_mae": r.test_mae} for r in runs],
        "test_mse": float(np.mean([r.test_mse for r in runs])),
        "test_mae": float(np.mean([r.test_mae for r in runs])),
    }
