"""End-to-end forecaster: RevIN -> series embedding -> STAR stack -> linear head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ConfigError, ShapeError
from .nn import Linear, Module
from .star import PoolingKind, StarBlock
from .tensor import check_finite

REVIN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    lookback: int
    horizon: int
    channels: int
    hidden: int = 256
    core: int = 64
    layers: int = 2
    pooling: str = "stochastic"
    use_revin: bool = True
    baseline: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("lookback", "horizon", "channels", "hidden", "core"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.layers < 0:
            raise ConfigError(f"layers must be >= 0, got {self.layers}")
        if self.core > self.hidden:
            raise ConfigError(f"core ({self.core}) must not exceed hidden ({self.hidden})")
        object.__setattr__(self, "pooling", PoolingKind.parse(self.pooling).value)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RevinState:
    mean: np.ndarray  # (B, 1, C)
    std: np.ndarray  # (B, 1, C)


def revin_normalize(X: np.ndarray, eps: float = REVIN_EPS) -> tuple[np.ndarray, RevinState]:
    """Standardise each (batch, channel) window over time; population variance."""
    if X.ndim != 3 or X.shape[1] < 1:
        raise ShapeError(f"expected (batch, lookback, channels), got {X.shape}")
    mean = X.mean(axis=1, keepdims=True)
    var = X.var(axis=1, keepdims=True)
    std = np.sqrt(var + X.dtype.type(eps))
    return (X - mean) / std, RevinState(mean, std)


def revin_denormalize(Y: np.ndarray, state: RevinState) -> np.ndarray:
    if Y.ndim != 3 or Y.shape[0] != state.mean.shape[0] or Y.shape[2] != state.mean.shape[2]:
        raise ShapeError(
            f"prediction shape {Y.shape} does not match normalisation state {state.mean.shape}"
        )
    return Y * state.std + state.mean


class SoftsModel(Module):
    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.embedding = Linear(config.lookback, config.hidden, rng, dtype)
        self.blocks = [
            StarBlock(
                config.hidden,
                config.core,
                pooling=config.pooling,
                baseline=config.baseline,
                channels=config.channels,
                rng=rng,
                dtype=dtype,
            )
            for _ in range(config.layers)
        ]
        self.head = Linear(config.hidden, config.horizon, rng, dtype)
        self._revin: RevinState | None = None

    def _children(self):
        yield "embedding", self.embedding
        for i, block in enumerate(self.blocks):
            yield f"blocks[{i}]", block
        yield "head", self.head

    @property
    def dtype(self):
        return self.embedding.weight.dtype

    def forward(
        self,
        X: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
        replay: list | None = None,
    ) -> np.ndarray:
        """Map lookback windows (B, L, C) to forecasts (B, H, C).

        ``replay`` optionally supplies one array of recorded channel indices
        per block, used in place of fresh stochastic draws.
        """
        cfg = self.config
        X = np.asarray(X, dtype=self.dtype)
        if X.ndim != 3 or X.shape[1] != cfg.lookback or X.shape[2] != cfg.channels:
            raise ShapeError(
                f"expected input (batch, {cfg.lookback}, {cfg.channels}), got {X.shape}"
            )
        if cfg.use_revin:
            X, self._revin = revin_normalize(X)
        S = self.embedding(np.ascontiguousarray(X.transpose(0, 2, 1)))
        for i, block in enumerate(self.blocks):
            S = block(S, training=training, rng=rng, indices=None if replay is None else replay[i])
        Y = self.head(S).transpose(0, 2, 1)
        if cfg.use_revin:
            Y = revin_denormalize(Y, self._revin)
        Y = np.ascontiguousarray(Y)
        check_finite(Y, "model")
        return Y

    __call__ = forward

    def backward(self, grad_out: np.ndarray) -> None:
        """Accumulate parameter gradients for the most recent forward call."""
        g = np.asarray(grad_out, dtype=self.dtype)
        if self.config.use_revin:
            g = g * self._revin.std
        g = self.head.backward(np.ascontiguousarray(g.transpose(0, 2, 1)))
        for block in reversed(self.blocks):
            g = block.backward(g)
        self.embedding.backward(g)

    def recorded_samples(self) -> list:
        """Channel indices drawn by each block during the last forward call."""
        out = []
        for block in self.blocks:
            core = block.last_core
            out.append(None if core is None or not core.training else core.indices)
        return out


def count_params(model: SoftsModel) -> int:
    return model.num_parameters()
