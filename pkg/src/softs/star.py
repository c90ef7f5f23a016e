"""STAR block: aggregate channel embeddings into one core vector, hand it back
to every channel, fuse with an MLP and add a residual."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyChannelError, ShapeError
from .nn import Module, TwoLayerMlp, init_params
from .tensor import Tensor, check_finite, softmax_backward, softmax_over_axis


class PoolingKind(str, enum.Enum):
    MEAN = "mean"
    MAX = "max"
    WEIGHTED = "weighted"
    STOCHASTIC = "stochastic"

    @classmethod
    def parse(cls, value) -> "PoolingKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown pooling {value!r}; expected one of {choices}") from None


@dataclass
class CoreRepresentation:
    """Pooled core ``values`` (B, d') plus what backward needs to route gradients."""

    values: np.ndarray
    kind: PoolingKind
    training: bool
    indices: np.ndarray | None = None  # (B, d') channel chosen per entry: max / stochastic-train
    probs: np.ndarray | None = None  # (B, C, d') softmax over channels: stochastic-test
    weights: np.ndarray | None = None  # (C,) softmax of lambda: weighted


def sample_channels(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one channel index per (batch, dim) from the categorical over axis 1.

    ``probs`` has shape (B, C, d'); returns integer indices of shape (B, d').
    """
    b, c, d = probs.shape
    cdf = np.cumsum(probs, axis=1, dtype=np.float64)
    u = rng.random((b, 1, d))
    idx = np.count_nonzero(u >= cdf, axis=1)
    return np.minimum(idx, c - 1)


def pool(
    A: np.ndarray,
    kind,
    training: bool = False,
    rng: np.random.Generator | None = None,
    weights_logits: np.ndarray | None = None,
    indices: np.ndarray | None = None,
) -> CoreRepresentation:
    """Reduce ``A`` of shape (B, C, d') over the channel axis.

    ``indices`` replays a previous stochastic draw instead of sampling; it is
    how gradients are checked conditional on fixed samples.
    """
    kind = PoolingKind.parse(kind)
    if A.ndim != 3:
        raise ShapeError(f"pool expects (batch, channels, dim), got {A.shape}")
    B, C, D = A.shape
    if C == 0:
        raise EmptyChannelError("cannot pool over zero channels")

    if kind is PoolingKind.MEAN:
        return CoreRepresentation(A.mean(axis=1), kind, training)

    if kind is PoolingKind.MAX:
        idx = np.argmax(A, axis=1)
        values = np.take_along_axis(A, idx[:, None, :], axis=1)[:, 0, :]
        return CoreRepresentation(values, kind, training, indices=idx)

    if kind is PoolingKind.WEIGHTED:
        if weights_logits is None:
            weights_logits = np.zeros(C, dtype=A.dtype)
        if weights_logits.shape != (C,):
            raise ShapeError(f"weighted pooling has {weights_logits.shape[0]} channel weights, input has {C}")
        w = softmax_over_axis(Tensor(weights_logits, dtype=A.dtype), 0).data
        values = np.einsum("c,bcd->bd", w, A)
        return CoreRepresentation(values, kind, training, weights=w)

    probs = softmax_over_axis(Tensor(A, dtype=A.dtype), 1).data
    if training:
        if indices is None:
            if rng is None:
                raise ValueError("stochastic pooling in training mode needs an rng")
            indices = sample_channels(probs, rng)
        values = np.take_along_axis(A, indices[:, None, :], axis=1)[:, 0, :]
        return CoreRepresentation(values, kind, training, indices=indices)
    values = np.sum(probs * A, axis=1)
    return CoreRepresentation(values, kind, training, probs=probs)


def pool_backward(core: CoreRepresentation, A: np.ndarray, grad_core: np.ndarray):
    """Return ``(grad_A, grad_lambda)``; ``grad_lambda`` is None unless weighted."""
    B, C, D = A.shape
    kind = core.kind
    if kind is PoolingKind.MEAN:
        return np.broadcast_to(grad_core[:, None, :] / C, A.shape).astype(A.dtype), None
    if kind is PoolingKind.WEIGHTED:
        w = core.weights
        grad_A = w[None, :, None] * grad_core[:, None, :]
        grad_w = np.einsum("bd,bcd->c", grad_core, A)
        return grad_A, softmax_backward(w, grad_w, axis=0)
    if core.indices is not None:
        # max, or stochastic in training mode: selection treated as constant
        grad_A = np.zeros_like(A)
        np.put_along_axis(grad_A, core.indices[:, None, :], grad_core[:, None, :], axis=1)
        return grad_A, None
    # stochastic, test mode: o_j = sum_i p_ij A_ij
    p = core.probs
    g = grad_core[:, None, :]
    return g * p + softmax_backward(p, g * A, axis=1), None


class StarBlock(Module):
    """One STAR layer acting on (B, C, d) series embeddings.

    In ``baseline`` mode the core path is dropped and the block reduces to a
    per-channel residual MLP, ``S + mlp2(S)`` with a d -> d -> d MLP.
    """

    def __init__(
        self,
        hidden: int,
        core: int,
        pooling="stochastic",
        baseline: bool = False,
        channels: int | None = None,
        rng=0,
        dtype=np.float32,
    ):
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.hidden = int(hidden)
        self.core = int(core)
        self.pooling = PoolingKind.parse(pooling)
        self.baseline = bool(baseline)
        self.lam: Tensor | None = None
        if self.baseline:
            self.mlp1 = None
            self.mlp2 = TwoLayerMlp(self.hidden, self.hidden, self.hidden, rng, dtype)
        else:
            self.mlp1 = TwoLayerMlp(self.hidden, self.hidden, self.core, rng, dtype)
            self.mlp2 = TwoLayerMlp(self.hidden + self.core, self.hidden, self.hidden, rng, dtype)
            if self.pooling is PoolingKind.WEIGHTED:
                if not channels:
                    raise ValueError("weighted pooling needs the channel count")
                self.lam = init_params((channels,), "zeros", dtype=dtype)
        self._A: np.ndarray | None = None
        self._core: CoreRepresentation | None = None

    def _children(self):
        if self.mlp1 is not None:
            yield "mlp1", self.mlp1
        yield "mlp2", self.mlp2

    def _own_parameters(self):
        if self.lam is not None:
            yield "lambda", self.lam

    @property
    def last_core(self) -> CoreRepresentation | None:
        return self._core

    def forward(
        self,
        S: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
        indices: np.ndarray | None = None,
    ) -> np.ndarray:
        if S.ndim != 3 or S.shape[-1] != self.hidden:
            raise ShapeError(f"STAR block expects (batch, channels, {self.hidden}), got {S.shape}")
        if self.baseline:
            out = self.mlp2(S) + S
            check_finite(out, "star")
            return out
        A = self.mlp1(S)
        core = pool(
            A,
            self.pooling,
            training=training,
            rng=rng,
            weights_logits=None if self.lam is None else self.lam.data,
            indices=indices,
        )
        self._A, self._core = A, core
        B, C, _ = S.shape
        o = np.broadcast_to(core.values[:, None, :], (B, C, self.core))
        F = np.concatenate([S, o.astype(S.dtype, copy=False)], axis=-1)
        out = self.mlp2(F) + S
        check_finite(out, "star")
        return out

    __call__ = forward

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self.baseline:
            return grad_out + self.mlp2.backward(grad_out)
        gF = self.mlp2.backward(grad_out)
        grad_S = grad_out + gF[..., : self.hidden]
        grad_core = gF[..., self.hidden :].sum(axis=1)
        grad_A, grad_lam = pool_backward(self._core, self._A, grad_core)
        if grad_lam is not None:
            self.lam.accumulate_grad(grad_lam.astype(self.lam.dtype, copy=False))
        return grad_S + self.mlp1.backward(grad_A)
