"""Reverse-mode autodiff on dense float64 arrays.

Every operation builds a fresh tape: the output tensor keeps references to its
inputs plus a backward closure, and ``Tensor.backward`` walks the tape once in
reverse topological order. Arrays are always float64 so finite-difference
checks have enough precision to be meaningful.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import DataError, NumericsError, ShapeError, UsageError

Array = np.ndarray


def _check_finite(arr: Array, op: str) -> None:
    # A single full-array sum propagates any NaN/Inf; cheaper than isfinite().
    if arr.size and not math.isfinite(float(arr.sum())):
        raise NumericsError(f"non-finite values produced by op '{op}'")


class Tensor:
    """Dense float64 array with an optional gradient buffer.

    ``grad`` is populated by :meth:`backward` on every tensor created with
    ``requires_grad=True``. Gradients accumulate additively, so a tensor
    feeding several consumers receives the sum of the per-path gradients.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "tensor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[Array] = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[], None]] = None
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        req = ", requires_grad=True" if self.requires_grad else ""
        nm = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{req}{nm})"

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Populate ``grad`` on every requires_grad leaf under this scalar.

        One backward pass per forward tape: running it twice from the same
        graph would silently double-accumulate, so re-entry is an error.
        """
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        if self._consumed:
            raise UsageError("backward() already ran for this graph; rebuild the forward pass")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._consumed:
                raise UsageError("graph node already consumed by a previous backward()")
            node._consumed = node._backward is not None
            if node._backward is not None:
                node._backward()

    # Operator sugar; the module-level functions carry the real contracts.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(other, mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: Array, op: str, parents: Sequence[Tensor], backward: Optional[Callable[["Tensor"], Callable[[], None]]]) -> Tensor:
    """Wrap an op output; the tape only tracks grad-relevant parents."""
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._consumed = False
    needs = any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs and backward is not None:
        out._parents = tuple(parents)
        out._backward = backward(out)
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, (gs, ts) in enumerate(zip(g.shape, shape)) if ts == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")

    def bw(out):
        def run():
            if a.requires_grad:
                a._accumulate(_unbroadcast(out.grad, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(out.grad, b.data.shape))
        return run

    return _result(data, "add", (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")

    def bw(out):
        def run():
            if a.requires_grad:
                a._accumulate(_unbroadcast(out.grad * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(out.grad * a.data, b.data.shape))
        return run

    return _result(data, "mul", (a, b), bw)


def power(x, p: float) -> Tensor:
    x = as_tensor(x)
    p = float(p)
    data = x.data ** p

    def bw(out):
        def run():
            x._accumulate(out.grad * p * x.data ** (p - 1.0))
        return run

    return _result(data, "power", (x,), bw)


def matmul(a, b) -> Tensor:
    """Matrix product ``a @ b`` on the last two axes.

    The core contract is [m,k] x [k,n] -> [m,n]; leading axes follow numpy
    stack broadcasting so batched products reuse the same rule.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} x {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    try:
        data = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul stack dimensions do not broadcast: {a.shape} x {b.shape}")

    def bw(out):
        def run():
            g = out.grad
            if a.requires_grad:
                da = g @ np.swapaxes(b.data, -1, -2)
                a._accumulate(_unbroadcast(da, a.data.shape))
            if b.requires_grad:
                db = np.swapaxes(a.data, -1, -2) @ g
                b._accumulate(_unbroadcast(db, b.data.shape))
        return run

    return _result(data, "matmul", (a, b), bw)


# ---------------------------------------------------------------------------
# activations


def relu(x) -> Tensor:
    x = as_tensor(x)
    data = np.maximum(x.data, 0.0)

    def bw(out):
        def run():
            x._accumulate(out.grad * (x.data > 0.0))
        return run

    return _result(data, "relu", (x,), bw)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x) -> Tensor:
    """GELU, tanh approximation: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    x = as_tensor(x)
    xd = x.data
    inner = _GELU_C * (xd + 0.044715 * xd ** 3)
    t = np.tanh(inner)
    data = 0.5 * xd * (1.0 + t)

    def bw(out):
        def run():
            d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * xd ** 2)
            dx = 0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t ** 2) * d_inner
            x._accumulate(out.grad * dx)
        return run

    return _result(data, "gelu", (x,), bw)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    data = np.empty_like(x.data)
    pos = x.data >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    data[~pos] = ex / (1.0 + ex)

    def bw(out):
        def run():
            x._accumulate(out.grad * data * (1.0 - data))
        return run

    return _result(data, "sigmoid", (x,), bw)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    data = np.tanh(x.data)

    def bw(out):
        def run():
            x._accumulate(out.grad * (1.0 - data ** 2))
        return run

    return _result(data, "tanh", (x,), bw)


def log_clamped(x, floor: float = 1e-12) -> Tensor:
    """log(max(x, floor)); gradient is zero where the clamp is active."""
    x = as_tensor(x)
    clamped = np.maximum(x.data, floor)
    data = np.log(clamped)

    def bw(out):
        def run():
            x._accumulate(out.grad * (x.data > floor) / clamped)
        return run

    return _result(data, "log_clamped", (x,), bw)


def softmax_lastdim(x) -> Tensor:
    """Row-stochastic softmax over the last axis, with max-subtraction."""
    x = as_tensor(x)
    if x.data.ndim == 0 or x.data.shape[-1] < 1:
        raise ShapeError(f"softmax_lastdim needs a non-empty last axis, got shape {x.shape}")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=-1, keepdims=True)

    def bw(out):
        def run():
            g = out.grad
            dot = (g * data).sum(axis=-1, keepdims=True)
            x._accumulate(data * (g - dot))
        return run

    return _result(data, "softmax_lastdim", (x,), bw)


# ---------------------------------------------------------------------------
# shape ops


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    data = x.data.reshape(shape)

    def bw(out):
        def run():
            x._accumulate(out.grad.reshape(x.data.shape))
        return run

    return _result(data, "reshape", (x,), bw)


def transpose(x, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.data.ndim)))
    axes = tuple(axes)
    data = np.transpose(x.data, axes)
    inv = np.argsort(axes)

    def bw(out):
        def run():
            x._accumulate(np.transpose(out.grad, inv))
        return run

    return _result(data, "transpose", (x,), bw)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise UsageError("concat of an empty sequence")
    try:
        data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]} along axis {axis}")
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bw(out):
        def run():
            for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * out.grad.ndim
                    idx[axis] = slice(lo, hi)
                    t._accumulate(out.grad[tuple(idx)])
        return run

    return _result(data, "concat", ts, bw)


def slice_lastdim(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    if not (0 <= start < stop <= x.data.shape[-1]):
        raise ShapeError(f"slice_lastdim [{start}:{stop}] out of range for shape {x.shape}")
    data = x.data[..., start:stop].copy()

    def bw(out):
        def run():
            g = np.zeros_like(x.data)
            g[..., start:stop] = out.grad
            x._accumulate(g)
        return run

    return _result(data, "slice_lastdim", (x,), bw)


def take_rows(x, indices) -> Tensor:
    """Gather rows along axis 0; duplicate indices accumulate in backward."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= x.data.shape[0]):
        raise UsageError(f"take_rows: index out of range for {x.shape[0]} rows")
    data = x.data[idx]

    def bw(out):
        def run():
            g = np.zeros_like(x.data)
            np.add.at(g, idx, out.grad)
            x._accumulate(g)
        return run

    return _result(data, "take_rows", (x,), bw)


def embedding_lookup(table, ids) -> Tensor:
    """Row lookup into an embedding table [vocab, dim] by integer ids."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-d, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise DataError(f"embedding id out of range for vocab of {table.data.shape[0]}")
    return take_rows(table, ids)


# ---------------------------------------------------------------------------
# reductions


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tensor_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.data.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)

    def bw(out):
        def run():
            g = out.grad
            if not keepdims:
                g = np.expand_dims(g, axes)
            x._accumulate(np.broadcast_to(g, x.data.shape))
        return run

    return _result(data, "sum", (x,), bw)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.data.ndim)
    count = int(np.prod([x.data.shape[a] for a in axes])) if axes else 1
    data = x.data.mean(axis=axes, keepdims=keepdims)

    def bw(out):
        def run():
            g = out.grad
            if not keepdims:
                g = np.expand_dims(g, axes)
            x._accumulate(np.broadcast_to(g, x.data.shape) / count)
        return run

    return _result(data, "mean", (x,), bw)


# ---------------------------------------------------------------------------
# convolution and resampling


def conv2d(x, kernel, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation: x [B,C,H,W] with kernel [C',C,k,k].

    Supports the square kernels the model uses (k in {1, 3}); padding=1 with
    stride=1 preserves spatial size for k=3.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {kernel.shape}")
    B, C, H, W = x.data.shape
    Co, Ck, kh, kw = kernel.data.shape
    if kh != kw or kh not in (1, 3):
        raise UsageError(f"conv2d supports square kernels of size 1 or 3, got {kh}x{kw}")
    if Ck != C:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs kernel {kernel.shape}")
    if stride < 1:
        raise UsageError(f"conv2d stride must be >= 1, got {stride}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    Hp, Wp = xp.shape[2], xp.shape[3]
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv2d output would be empty for input {x.shape}, kernel {kernel.shape}")

    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    data = np.einsum("bchwij,ocij->bohw", windows, kernel.data, optimize=True)

    def bw(out):
        def run():
            g = out.grad
            if kernel.requires_grad:
                dk = np.einsum("bchwij,bohw->ocij", windows, g, optimize=True)
                kernel._accumulate(dk)
            if x.requires_grad:
                if stride > 1:
                    gd = np.zeros((B, Co, (Ho - 1) * stride + 1, (Wo - 1) * stride + 1))
                    gd[:, :, ::stride, ::stride] = g
                else:
                    gd = g
                pad_b = kh - 1 - padding
                if pad_b < 0:
                    raise UsageError("conv2d backward: padding exceeds kernel-1")
                gp = np.pad(gd, ((0, 0), (0, 0), (pad_b, pad_b), (pad_b, pad_b))) if pad_b else gd
                gw = np.lib.stride_tricks.sliding_window_view(gp, (kh, kw), axis=(2, 3))
                kflip = kernel.data[:, :, ::-1, ::-1]
                dx = np.einsum("bohwij,ocij->bchw", gw, kflip, optimize=True)
                x._accumulate(dx[:, :, :H, :W])
        return run

    return _result(data, "conv2d", (x, kernel), bw)


def nearest_resize_array(arr: Array, out_hw: tuple[int, int]) -> Array:
    """Nearest resize of the last two axes: out (i,j) <- in (floor(i*H/H'), floor(j*W/W'))."""
    H2, W2 = out_hw
    H, W = arr.shape[-2], arr.shape[-1]
    rows = (np.arange(H2) * H) // H2
    cols = (np.arange(W2) * W) // W2
    return arr[..., rows[:, None], cols[None, :]]


def nearest_resize(x, out_hw: tuple[int, int]) -> Tensor:
    """Nearest-neighbour resize for mask tensors; not differentiable."""
    x = as_tensor(x)
    if x.requires_grad:
        raise UsageError("nearest_resize is only legal on tensors with requires_grad=False")
    return Tensor(nearest_resize_array(x.data, out_hw))


def upsample_nearest(x, factor: int) -> Tensor:
    """Integer-factor nearest upsample of the last two axes (differentiable tile)."""
    x = as_tensor(x)
    if factor < 1:
        raise UsageError(f"upsample factor must be >= 1, got {factor}")
    data = np.repeat(np.repeat(x.data, factor, axis=-2), factor, axis=-1)

    def bw(out):
        def run():
            shp = x.data.shape
            g = out.grad.reshape(shp[:-2] + (shp[-2], factor, shp[-1], factor))
            x._accumulate(g.sum(axis=(-3, -1)))
        return run

    return _result(data, "upsample_nearest", (x,), bw)


def downsample_nearest(x, factor: int) -> Tensor:
    """Integer-factor nearest downsample of the last two axes (differentiable pick)."""
    x = as_tensor(x)
    if factor < 1:
        raise UsageError(f"downsample factor must be >= 1, got {factor}")
    if x.data.shape[-2] % factor or x.data.shape[-1] % factor:
        raise ShapeError(f"downsample factor {factor} does not divide spatial dims of {x.shape}")
    data = x.data[..., ::factor, ::factor].copy()

    def bw(out):
        def run():
            g = np.zeros_like(x.data)
            g[..., ::factor, ::factor] = out.grad
            x._accumulate(g)
        return run

    return _result(data, "downsample_nearest", (x,), bw)


def one_hot(ids, num_classes: int) -> Tensor:
    """Constant one-hot encoding over a trailing class axis."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= num_classes):
        raise DataError(f"one_hot: id outside [0, {num_classes})")
    data = np.zeros(ids.shape + (num_classes,))
    np.put_along_axis(data, ids[..., None], 1.0, axis=-1)
    return Tensor(data)
