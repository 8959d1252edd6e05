"""Task decoders and the AE -> AS opinion bridge."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .data import AE_INDEX
from .encoders import doc_attention

BP, IP = AE_INDEX["BP"], AE_INDEX["IP"]


@dataclass
class Dense:
    weight: Tensor  # (d_in, d_out)
    bias: Tensor

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError(f"decoder expects {self.weight.shape[0]} features, got {x.shape[-1]}")
        return ad.linear(x, self.weight, self.bias)


def decode(dense: Dense, x: Tensor) -> Tensor:
    """Fully-connected layer followed by softmax."""
    return ad.softmax(dense(x), axis=-1)


def ae_decode(dense: Dense, word_emb: Tensor, h_s0: Tensor, h_ae: Tensor) -> Tensor:
    """5-way label distribution from ``[embedding : h_s(0) : h_ae]``."""
    return decode(dense, ad.concat([word_emb, h_s0, h_ae], axis=-1))


def as_decode(dense: Dense, h_s0: Tensor, h_prime: Tensor) -> Tensor:
    """3-way sentiment distribution from ``[h_s(0) : h'_as]``."""
    return decode(dense, ad.concat([h_s0, h_prime], axis=-1))


def opinion_prob(y_ae: Tensor) -> Tensor:
    """Probability mass on BP + IP for each token."""
    if y_ae.shape[-1] != len(AE_INDEX):
        raise ShapeError(f"expected {len(AE_INDEX)} AE classes, got {y_ae.shape[-1]}")
    return y_ae[..., BP] + y_ae[..., IP]


@dataclass
class DocHead:
    attention: Tensor  # (d,)
    dense: Dense

    def __call__(self, h: Tensor, mask=None) -> tuple[Tensor, Tensor]:
        """Returns ``(class distribution, attention weights)``."""
        a, pooled = doc_attention(h, self.attention, mask)
        return decode(self.dense, pooled), a


@dataclass
class HeadOutputs:
    y_ae: Tensor
    y_as: Tensor
    y_ds: Tensor
    y_dd: Tensor
    a_ds: Tensor
    a_dd: Tensor
    p_op: Tensor

    def numpy(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k).data for k in self.__dataclass_fields__}
