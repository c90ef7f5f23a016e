"""Loss, metrics, Adam, cosine schedule and the early-stopping training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import ForecastData
from .exceptions import ConfigError, DivergenceError, ShapeError, SplitError
from .model import SoftsModel
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    epochs: int = 10
    batch_size: int = 32
    patience: int = 3
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


def _check_pair(pred, target, what: str):
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"{what}: prediction shape {pred.shape} != target shape {target.shape}")
    return pred, target


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. ``pred``."""
    pred, target = _check_pair(pred, target, "mse")
    diff = pred - target
    loss = float(np.mean(np.square(diff, dtype=np.float64)))
    grad = diff * (2.0 / diff.size)
    return loss, grad.astype(pred.dtype, copy=False)


def mae_metric(pred, target) -> float:
    pred, target = _check_pair(pred, target, "mae")
    return float(np.mean(np.abs(pred.astype(np.float64) - target)))


def cosine_lr(epoch: int, total_epochs: int, lr0: float) -> float:
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


class Adam:
    """Adam with bias correction; moments are kept per parameter tensor."""

    def __init__(self, params: list[Tensor], betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float) -> None:
        for p in self.params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise DivergenceError(f"non-finite gradient in parameter of shape {p.shape} at step {self.t + 1}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            m_hat = m / c1
            v_hat = v / c2
            p.data -= (lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype, copy=False)


def adam_step(params: list[Tensor], opt: Adam, lr: float) -> None:
    """Functional spelling of ``opt.step(lr)``; gradients are read from ``params``."""
    if [id(p) for p in params] != [id(p) for p in opt.params]:
        raise ValueError("optimizer was built for a different parameter list")
    opt.step(lr)


@dataclass
class TrainState:
    optimizer: Adam
    epoch: int = 0
    best_val: float = math.inf
    best_epoch: int = -1
    best_params: dict[str, np.ndarray] | None = None
    bad_epochs: int = 0


@dataclass
class History:
    records: list[dict] = field(default_factory=list)

    def append(self, **rec) -> None:
        self.records.append(rec)

    @property
    def best_val(self) -> float:
        vals = [r["val_mse"] for r in self.records]
        return min(vals) if vals else math.inf

    def __len__(self) -> int:
        return len(self.records)


def evaluate(model: SoftsModel, data: ForecastData, split: str = "test", batch_size: int = 256) -> tuple[float, float]:
    """Window-weighted MSE and MAE over a split, test-mode forward."""
    if data.n_windows(split) == 0:
        raise SplitError(f"{split} split has no windows")
    sq = 0.0
    ab = 0.0
    n = 0
    for batch in data.batches(split, batch_size, shuffle=False, dtype=model.dtype):
        pred = model.forward(batch.X, training=False).astype(np.float64)
        diff = pred - batch.Y
        sq += float(np.sum(np.square(diff)))
        ab += float(np.sum(np.abs(diff)))
        n += diff.size
    return sq / n, ab / n


def fit(model: SoftsModel, data: ForecastData, cfg: TrainConfig, log_every: int = 0) -> tuple[SoftsModel, History]:
    """Train with Adam + per-epoch cosine decay, early-stop on validation MSE
    and restore the best parameters seen."""
    if data.n_channels != model.config.channels:
        raise ShapeError(f"data has {data.n_channels} channels, model expects {model.config.channels}")
    params = model.parameters()
    state = TrainState(Adam(params, cfg.betas, cfg.adam_eps))
    history = History()
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    pool_rng = np.random.default_rng([cfg.seed, 2])

    for epoch in range(cfg.epochs):
        state.epoch = epoch
        lr = cosine_lr(epoch, cfg.epochs, cfg.learning_rate)
        total = 0.0
        count = 0
        for step, batch in enumerate(
            data.batches("train", cfg.batch_size, shuffle=True, seed=shuffle_rng, dtype=model.dtype)
        ):
            model.zero_grad()
            pred = model.forward(batch.X, training=True, rng=pool_rng)
            loss, grad = mse_loss(pred, batch.Y)
            if not math.isfinite(loss):
                raise DivergenceError(f"training loss became non-finite at epoch {epoch}, step {step}")
            model.backward(grad)
            state.optimizer.step(lr)
            total += loss * batch.Y.size
            count += batch.Y.size
            if log_every and step % log_every == 0:
                logger.debug("epoch %d step %d loss %.6f", epoch, step, loss)
        val_mse, val_mae = evaluate(model, data, "val")
        if not math.isfinite(val_mse):
            raise DivergenceError(f"validation loss is {val_mse} after epoch {epoch}")
        history.append(epoch=epoch, lr=lr, train_loss=total / count, val_mse=val_mse, val_mae=val_mae)
        logger.info("epoch %d lr %.3g train %.5f val %.5f", epoch, lr, total / count, val_mse)
        if val_mse < state.best_val:
            state.best_val = val_mse
            state.best_epoch = epoch
            state.best_params = model.state_dict()
            state.bad_epochs = 0
        else:
            state.bad_epochs += 1
            if state.bad_epochs >= cfg.patience:
                logger.info("early stop after epoch %d (best epoch %d)", epoch, state.best_epoch)
                break
    if state.best_params is not None:
        model.load_state_dict(state.best_params)
    return model, history
