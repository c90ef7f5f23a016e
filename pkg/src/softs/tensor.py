"""Dense tensor and the handful of differentiable primitives the forecaster needs.

There is no autodiff tape. Each primitive comes as a ``forward`` function and
a matching ``*_backward`` function; layers call them in reverse order
themselves. Storage is a contiguous row-major NumPy array, float32 for
training and float64 when running the finite-difference oracle.
"""

from __future__ import annotations

import contextlib
import math
import os
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from .exceptions import NonFiniteError, ShapeError

_NANCHECK = os.environ.get("SOFTS_DEBUG_NANCHECK", "") not in ("", "0")

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def nancheck_enabled() -> bool:
    return _NANCHECK


@contextlib.contextmanager
def debug_nancheck(enabled: bool = True):
    """Temporarily toggle the per-op finiteness assertion."""
    global _NANCHECK
    previous = _NANCHECK
    _NANCHECK = enabled
    try:
        yield
    finally:
        _NANCHECK = previous


def check_finite(array: np.ndarray, where: str) -> None:
    if _NANCHECK and not np.all(np.isfinite(array)):
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NonFiniteError(f"{where}: {bad} non-finite value(s) in output of shape {array.shape}")


class Tensor:
    """A contiguous array plus a lazily allocated gradient buffer of the same shape."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=np.float32):
        arr = np.ascontiguousarray(data, dtype=dtype)
        if not 1 <= arr.ndim <= 3:
            raise ShapeError(f"tensor rank must be 1..3, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), dtype=dtype)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an (m, k) and a (k, n) tensor."""
    ad, bd = _as_array(a), _as_array(b)
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {ad.shape} and {bd.shape}")
    out = ad @ bd
    check_finite(out, "matmul")
    return Tensor(out, dtype=out.dtype)


def matmul_backward(a: Tensor, b: Tensor, grad_out: np.ndarray) -> None:
    """Accumulate ``grad_out @ b.T`` into ``a.grad`` and ``a.T @ grad_out`` into ``b.grad``."""
    a.accumulate_grad(grad_out @ b.data.T)
    b.accumulate_grad(a.data.T @ grad_out)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU, ``x * Phi(x)``."""
    xd = _as_array(x)
    out = xd * ndtr(xd)
    check_finite(out, "gelu")
    return Tensor(out, dtype=xd.dtype)


def gelu_grad(x: np.ndarray) -> np.ndarray:
    """Elementwise derivative ``Phi(x) + x * phi(x)``."""
    return ndtr(x) + x * np.exp(-0.5 * x * x) * x.dtype.type(_INV_SQRT_2PI)


def gelu_backward(x: Tensor, grad_out: np.ndarray) -> np.ndarray:
    gx = grad_out * gelu_grad(x.data)
    x.accumulate_grad(gx)
    return gx


def softmax_over_axis(x: Tensor, axis: int) -> Tensor:
    """Numerically stable softmax along ``axis``."""
    xd = _as_array(x)
    if not -xd.ndim <= axis < xd.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for rank {xd.ndim}")
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    check_finite(out, "softmax")
    return Tensor(out, dtype=xd.dtype)


def softmax_backward(probs: np.ndarray, grad_out: np.ndarray, axis: int) -> np.ndarray:
    """Vector-Jacobian product of softmax, given its output ``probs``."""
    return probs * (grad_out - np.sum(grad_out * probs, axis=axis, keepdims=True))


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-8)


def grad_check(
    f: Callable[[Tensor], tuple[float, np.ndarray]],
    x: Tensor,
    h: float = 1e-5,
) -> float:
    """Max relative error between an analytic gradient and central differences.

    ``f`` maps a tensor to ``(value, gradient)``. The check runs in float64
    regardless of the dtype of ``x``.
    """
    x64 = x.astype(np.float64)
    _, analytic = f(x64)
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.zeros_like(x64.data)
    flat = x64.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp, _ = f(x64)
        flat[i] = orig - h
        fm, _ = f(x64)
        flat[i] = orig
        num_flat[i] = (fp - fm) / (2.0 * h)
    return float(np.max(_relative_error(analytic, numeric), initial=0.0))


def grad_check_params(
    loss_fn: Callable[[], float],
    params: Sequence[Tensor] | Iterable[Tensor],
    h: float = 1e-5,
) -> float:
    """Finite-difference check over every scalar of every tensor in ``params``.

    ``loss_fn`` must return the scalar loss and leave fresh gradients in each
    parameter's ``grad``. Parameters should already be float64.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    loss_fn()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.data.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn()
            flat[i] = orig - h
            fm = loss_fn()
            flat[i] = orig
            numeric[i] = (fp - fm) / (2.0 * h)
        err = _relative_error(g.reshape(-1), numeric)
        worst = max(worst, float(np.max(err, initial=0.0)))
    for p in params:
        p.zero_grad()
    return worst
