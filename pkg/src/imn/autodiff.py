"""Dense tensors with tape-based reverse-mode differentiation.

Every numeric primitive the network needs lives here. Values are float64
numpy arrays; a :class:`Tensor` that takes part in differentiation records
its parents and a closure that pushes an upstream gradient back to them.

Tape policy: ``backward()`` walks the graph once, accumulates into ``.grad``
of every ``requires_grad`` tensor it reaches and then drops the recorded
edges, so each loss can be differentiated only once.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64
LOG_FLOOR = 1e-12

_grad_enabled = True


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._consumed = False

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    # -- differentiation --------------------------------------------------
    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if self._consumed:
            raise RuntimeError("graph already consumed by a previous backward()")
        if not self.requires_grad:
            raise RuntimeError("loss does not depend on any tensor requiring grad")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self._accum(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            node._parents = ()
            node._backward = None
        self._consumed = True

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0

    def bw(g):
        x._accum(g * pos)

    return _make(np.where(pos, x.data, 0.0), (x,), bw)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def bw(g):
        x._accum(g * out)

    return _make(out, (x,), bw)


def log(x: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """Natural log with inputs clamped from below at ``floor``."""
    clipped = x.data < floor
    safe = np.maximum(x.data, floor)

    def bw(g):
        x._accum(np.where(clipped, 0.0, g / safe))

    return _make(np.log(safe), (x,), bw)


# ---------------------------------------------------------------------------
# reductions and shape manipulation


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accum(np.broadcast_to(g, x.shape))

    return _make(out, (x,), bw)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    return sum_(x, axis=axis) * (1.0 / n)


def masked_mean(x: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Mean of ``x`` over ``axis`` counting only positions where ``mask`` is set."""
    mask = np.asarray(mask, dtype=DTYPE)
    counts = mask.sum(axis=axis)
    if np.any(counts == 0):
        raise ValueError("masked_mean over an empty selection")
    return sum_(x * mask, axis=axis) * (1.0 / counts)


def reshape(x: Tensor, shape) -> Tensor:
    def bw(g):
        x._accum(g.reshape(x.shape))

    return _make(x.data.reshape(shape), (x,), bw)


def swapaxes(x: Tensor, a1: int, a2: int) -> Tensor:
    def bw(g):
        x._accum(np.swapaxes(g, a1, a2))

    return _make(np.swapaxes(x.data, a1, a2), (x,), bw)


def index(x: Tensor, idx) -> Tensor:
    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        x._accum(full)

    return _make(x.data[idx], (x,), bw)


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(ts, np.split(g, bounds, axis=axis)):
            if t.requires_grad:
                t._accum(piece)

    return _make(out, ts, bw)


def broadcast_to(x: Tensor, shape) -> Tensor:
    def bw(g):
        x._accum(_unbroadcast(g, x.shape))

    return _make(np.broadcast_to(x.data, shape).copy(), (x,), bw)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            if b.ndim == 1:
                ga = np.multiply.outer(g, b.data)
            else:
                ga = g @ np.swapaxes(b.data, -1, -2)
            a._accum(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            if b.ndim == 1:
                gb = (a.data * g[..., None]).reshape(-1, b.shape[0]).sum(axis=0)
            elif a.ndim == 1:
                gb = np.multiply.outer(a.data, g)
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
                while gb.ndim > b.ndim:
                    gb = gb.sum(axis=0)
            b._accum(_unbroadcast(gb, b.shape))

    return _make(out, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` over the last axis, with an input-size check."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input dim {x.shape[-1]} != weight rows {weight.shape[0]}")
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-length 1D convolution with zero padding.

    ``x`` is ``(..., n, d)``; ``weight`` is ``(k, d, f)`` with odd ``k``.
    Output position ``i`` reads input positions ``i-c .. i+c`` where
    ``k = 2c + 1``; positions outside the sequence contribute zeros.
    """
    k, d, f = weight.shape
    if k % 2 != 1:
        raise ShapeError(f"conv1d kernel size must be odd, got {k}")
    if x.shape[-1] != d:
        raise ShapeError(f"conv1d: input dim {x.shape[-1]} != filter dim {d}")
    n = x.shape[-2]
    if n == 0:
        raise ShapeError("conv1d on an empty sequence")
    c = k // 2
    pad = [(0, 0)] * (x.ndim - 2) + [(c, c), (0, 0)]
    xp = np.pad(x.data, pad)
    # windows: (..., n, d, k) -> (..., n, k, d)
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=-2)
    # 2-D contiguous operands keep the products on the BLAS path
    cols = np.ascontiguousarray(np.swapaxes(win, -1, -2)).reshape(-1, k * d)
    w2 = weight.data.reshape(k * d, f)
    out = (cols @ w2).reshape(*x.shape[:-1], f)
    if bias is not None:
        out = out + bias.data

    def bw(g):
        g2 = np.ascontiguousarray(g).reshape(-1, f)
        if weight.requires_grad:
            weight._accum((cols.T @ g2).reshape(k, d, f))
        if bias is not None and bias.requires_grad:
            bias._accum(g2.sum(axis=0))
        if x.requires_grad:
            gcols = (g2 @ w2.T).reshape(*x.shape[:-2], n, k, d)
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[..., j:j + n, :] += gcols[..., j, :]
            x._accum(gxp[..., c:c + n, :])

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, bw)


def embedding(table: Tensor, ids: np.ndarray, frozen_rows: Sequence[int] = ()) -> Tensor:
    """Row lookup; gradients flow only into the looked-up rows.

    Rows listed in ``frozen_rows`` (e.g. padding) never receive gradient.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range [0, {table.shape[0]})")

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        for r in frozen_rows:
            full[r] = 0.0
        table._accum(full)

    return _make(table.data[ids], (table,), bw)


# ---------------------------------------------------------------------------
# probabilistic layers


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None,
            empty_ok: bool = False) -> Tensor:
    """Softmax along ``axis``; entries where ``mask`` is False get exactly 0.

    A slice with every entry excluded is an error unless ``empty_ok``, in
    which case that slice comes out all-zero.
    """
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        has_any = mask.any(axis=axis, keepdims=True)
        if not empty_ok and not has_any.all():
            raise ValueError("softmax: every entry of a slice is excluded")
        z = np.where(mask, z, -np.inf)
        zmax = np.where(has_any, np.max(z, axis=axis, keepdims=True), 0.0)
        e = np.where(mask, np.exp(z - zmax), 0.0)
        denom = e.sum(axis=axis, keepdims=True)
        out = np.where(has_any, e / np.where(denom == 0, 1.0, denom), 0.0)
    else:
        e = np.exp(z - np.max(z, axis=axis, keepdims=True))
        out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        x._accum(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (x,), bw)


def cross_entropy(probs: Tensor, gold: np.ndarray, floor: float = LOG_FLOOR) -> Tensor:
    """Per-position ``-log(probs[gold])`` for class probabilities on the last axis.

    ``gold`` holds integer class ids with shape ``probs.shape[:-1]``; an id
    of ``-1`` marks a position that contributes exactly zero loss.
    Probabilities below ``floor`` are clamped so the loss stays finite.
    """
    gold = np.asarray(gold, dtype=np.int64)
    if gold.shape != probs.shape[:-1]:
        raise ShapeError(f"cross_entropy: gold shape {gold.shape} vs probs {probs.shape}")
    active = gold >= 0
    safe_gold = np.where(active, gold, 0)
    p = np.take_along_axis(probs.data, safe_gold[..., None], axis=-1)[..., 0]
    p_safe = np.maximum(p, floor)
    out = np.where(active, -np.log(p_safe), 0.0)

    def bw(g):
        coef = np.where(active & (p >= floor), -g / p_safe, 0.0)
        full = np.zeros_like(probs.data)
        np.put_along_axis(full, safe_gold[..., None], coef[..., None], axis=-1)
        probs._accum(full)

    return _make(out, (probs,), bw)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: keep with prob ``1-p`` and rescale by ``1/(1-p)``."""
    if not training or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, keep)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=DTYPE), requires_grad=True)
