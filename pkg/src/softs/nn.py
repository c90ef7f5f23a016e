"""Parameterised layers with hand-written backward passes."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .exceptions import ShapeError
from .tensor import Tensor, gelu, gelu_backward, matmul, matmul_backward


def init_params(shape, scheme: str = "uniform", rng_seed=0, dtype=np.float32) -> Tensor:
    """Create a parameter tensor.

    ``scheme="uniform"`` draws from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with
    ``fan_in = shape[0]``; ``scheme="zeros"`` returns zeros. ``rng_seed`` may
    be an int or an existing ``numpy.random.Generator``.
    """
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise ShapeError(f"parameter extents must be positive, got {shape}")
    if scheme == "zeros":
        return Tensor(np.zeros(shape, dtype=dtype), dtype=dtype)
    if scheme != "uniform":
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    bound = 1.0 / math.sqrt(shape[0])
    values = rng.uniform(-bound, bound, size=shape).astype(dtype)
    np.clip(values, -bound, bound, out=values)
    return Tensor(values, dtype=dtype)


class Module:
    """Minimal container: ordered named parameters and child modules."""

    def _children(self) -> Iterator[tuple[str, "Module"]]:
        return iter(())

    def _own_parameters(self) -> Iterator[tuple[str, Tensor]]:
        return iter(())

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, child in self._children():
            yield from child.named_parameters(prefix + name + ".")
        for name, p in self._own_parameters():
            yield prefix + name, p

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = own.keys() - state.keys()
        extra = state.keys() - own.keys()
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ShapeError(f"{name}: expected shape {p.shape}, got {value.shape}")
            p.data = np.ascontiguousarray(value, dtype=p.dtype)
            p.grad = None

    def astype(self, dtype) -> None:
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None


class Linear(Module):
    """Affine map over the trailing axis; leading axes are folded into rows."""

    def __init__(self, in_features: int, out_features: int, rng=0, dtype=np.float32):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.weight = init_params((self.in_features, self.out_features), "uniform", rng, dtype)
        self.bias = init_params((self.out_features,), "zeros", rng, dtype)
        self._x: Tensor | None = None
        self._lead: tuple[int, ...] = ()

    def _own_parameters(self):
        yield "weight", self.weight
        yield "bias", self.bias

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.in_features:
            raise ShapeError(
                f"linear expects trailing extent {self.in_features}, got input shape {x.shape}"
            )
        self._lead = x.shape[:-1]
        self._x = Tensor(x.reshape(-1, self.in_features), dtype=self.weight.dtype)
        out = matmul(self._x, self.weight).data
        out += self.bias.data
        return out.reshape(*self._lead, self.out_features)

    __call__ = forward

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        g = grad_out.reshape(-1, self.out_features)
        self._x.zero_grad()
        matmul_backward(self._x, self.weight, g)
        self.bias.accumulate_grad(g.sum(axis=0))
        return self._x.grad.reshape(*self._lead, self.in_features)


class TwoLayerMlp(Module):
    """``second(gelu(first(x)))``."""

    def __init__(self, in_features: int, hidden: int, out_features: int, rng=0, dtype=np.float32):
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.first = Linear(in_features, hidden, rng, dtype)
        self.second = Linear(hidden, out_features, rng, dtype)
        self._h: Tensor | None = None

    def _children(self):
        yield "first", self.first
        yield "second", self.second

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._h = Tensor(self.first(x), dtype=self.first.weight.dtype)
        return self.second(gelu(self._h).data)

    __call__ = forward

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        g = self.second.backward(grad_out)
        self._h.zero_grad()
        g = gelu_backward(self._h, g)
        return self.first.backward(g)
