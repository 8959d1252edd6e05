"""CNN encoders, opinion-gated self-attention and document attention.

All functions work on ``(n, d)`` sequences or ``(B, n, d)`` padded batches;
``mask`` (same leading shape, True on real tokens) keeps padding out of
every computation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


@dataclass
class ConvLayer:
    """One CNN layer: parallel filter groups whose outputs are concatenated."""
    weights: list[Tensor]  # each (k, d_in, f)
    biases: list[Tensor]

    @property
    def out_dim(self) -> int:
        return sum(w.shape[2] for w in self.weights)


def glorot(rng: np.random.Generator, shape: Sequence[int], fan_in: int, fan_out: int) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return ad.parameter(rng.uniform(-limit, limit, size=tuple(shape)))


def make_conv_layer(rng: np.random.Generator, d_in: int,
                    groups: Sequence[tuple[int, int]]) -> ConvLayer:
    """``groups`` lists ``(kernel_size, n_filters)`` pairs."""
    ws, bs = [], []
    for k, f in groups:
        if k % 2 != 1:
            raise ValueError(f"kernel size must be odd, got {k}")
        ws.append(glorot(rng, (k, d_in, f), k * d_in, k * f))
        bs.append(ad.parameter(np.zeros(f)))
    return ConvLayer(ws, bs)


def _mask3(mask, x: Tensor) -> np.ndarray:
    if mask is None:
        return np.ones(x.shape[:-1] + (1,))
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape[:-1]:
        raise ShapeError(f"mask shape {mask.shape} does not match sequence {x.shape[:-1]}")
    return mask[..., None].astype(ad.DTYPE)


def cnn_stack(x: Tensor, layers: Sequence[ConvLayer], mask=None, *, dropout: float = 0.0,
              training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Conv -> ReLU -> dropout per layer; padded positions reset to zero after each."""
    if x.shape[-2] == 0:
        raise ShapeError("cannot encode an empty sequence")
    m = _mask3(mask, x)
    h = x
    for layer in layers:
        outs = [ad.relu(ad.conv1d(h, w, b)) for w, b in zip(layer.weights, layer.biases)]
        h = outs[0] if len(outs) == 1 else ad.concat(outs, axis=-1)
        h = ad.dropout(h, dropout, rng, training)
        h = h * m
    return h


def distance_weights(n: int) -> np.ndarray:
    """``1/|i-j|`` off the diagonal, 0 on it."""
    idx = np.arange(n)
    d = np.abs(idx[:, None] - idx[None, :]).astype(ad.DTYPE)
    with np.errstate(divide="ignore"):
        w = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 0.0)
    return w


def attention_scores(h: Tensor, p_op, w_as: Tensor) -> Tensor:
    """Bilinear relevance x inverse distance x opinion probability of the attended token."""
    n = h.shape[-2]
    p_op = ad.as_tensor(p_op)
    bilinear = ad.matmul(ad.matmul(h, w_as), ad.swapaxes(h, -1, -2))
    gate = ad.reshape(p_op, p_op.shape[:-1] + (1, n))
    return bilinear * distance_weights(n) * gate


def as_self_attention(h: Tensor, p_op, w_as: Tensor, mask=None) -> tuple[Tensor, Tensor]:
    """Opinion-gated self-attention over context tokens.

    Returns ``(A, h_prime)`` with ``A[i, i] = 0`` and rows normalised over the
    other real tokens. A token with no context (single-token sentence) gets
    an all-zero row and a zero output vector.
    """
    n = h.shape[-2]
    if n == 0:
        raise ShapeError("self-attention over an empty sequence")
    if w_as.shape != (h.shape[-1], h.shape[-1]):
        raise ShapeError(f"W_as shape {w_as.shape} vs hidden {h.shape[-1]}")
    p = p_op.data if isinstance(p_op, Tensor) else np.asarray(p_op, dtype=ad.DTYPE)
    if p.shape != h.shape[:-1]:
        raise ShapeError(f"P_op shape {p.shape} vs sequence {h.shape[:-1]}")
    if np.any(p < -1e-9) or np.any(p > 1 + 1e-9):
        raise ValueError("opinion probabilities must lie in [0, 1]")

    scores = attention_scores(h, p_op, w_as)
    allowed = ~np.eye(n, dtype=bool)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        allowed = allowed & mask[..., None, :] & mask[..., :, None]
    attn = ad.softmax(scores, axis=-1, mask=allowed, empty_ok=True)
    return attn, ad.matmul(attn, h)


def doc_attention(h: Tensor, w_o: Tensor, mask=None) -> tuple[Tensor, Tensor]:
    """Softmax attention over tokens; returns ``(weights, pooled vector)``."""
    if h.shape[-2] == 0:
        raise ShapeError("document attention over an empty sequence")
    if w_o.shape != (h.shape[-1],):
        raise ShapeError(f"attention vector shape {w_o.shape} vs hidden {h.shape[-1]}")
    logits = ad.matmul(h, w_o)
    a = ad.softmax(logits, axis=-1, mask=mask)
    pooled = ad.sum_(h * ad.reshape(a, a.shape + (1,)), axis=-2)
    return a, pooled
