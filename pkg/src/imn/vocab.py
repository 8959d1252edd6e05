"""Vocabulary and the concatenated general + domain embedding layer."""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
OOV_INIT_RANGE = 0.05


def normalize(token: str, lowercase: bool = True) -> str:
    return token.lower() if lowercase else token


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    return [normalize(t, lowercase) for t in text.split()]


class Vocabulary:
    """Token <-> id map with PAD=0 and UNK=1 reserved."""

    def __init__(self, tokens: Sequence[str] = (), lowercase: bool = True):
        self.lowercase = lowercase
        self.id_to_token: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self.token_to_id: dict[str, int] = {}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        token = normalize(token, self.lowercase)
        if token in (PAD_TOKEN, UNK_TOKEN):
            raise ValueError(f"token {token!r} collides with a reserved symbol")
        if token not in self.token_to_id:
            self.token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)
        return self.token_to_id[token]

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return normalize(token, self.lowercase) in self.token_to_id

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(normalize(token, self.lowercase), UNK)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.lookup(t) for t in tokens]

    def corpus_tokens(self) -> list[str]:
        """Corpus tokens in id order (ids 2..N)."""
        return self.id_to_token[2:]


def build_vocab(corpora: Sequence[str | Iterable[str]], min_count: int = 1,
                lowercase: bool = True) -> Vocabulary:
    """Collect every token seen at least ``min_count`` times across all streams.

    Each stream is either a whitespace-separated string or an iterable of
    tokens. Ids follow first-seen order.
    """
    if not corpora:
        raise ValueError("build_vocab needs at least one token stream")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    order: list[str] = []
    for stream in corpora:
        toks = stream.split() if isinstance(stream, str) else stream
        for tok in toks:
            tok = normalize(tok, lowercase)
            if tok not in counts:
                order.append(tok)
            counts[tok] += 1
    return Vocabulary([t for t in order if counts[t] >= min_count], lowercase=lowercase)


def load_embeddings(path, vocab: Vocabulary, dim: int,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Build a ``len(vocab) x dim`` matrix from a ``token v1 .. vd`` text file.

    A word2vec ``count dim`` header line is skipped. Tokens missing from the file are drawn from U(-0.05, 0.05); the PAD row
    is zero.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    matrix = rng.uniform(-OOV_INIT_RANGE, OOV_INIT_RANGE, size=(len(vocab), dim))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if parts == [""]:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValueError(
                    f"{path}:{lineno}: expected {dim} values for {token!r}, got {len(values)}")
            try:
                row = np.array([float(v) for v in values])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed number in line") from None
            tid = vocab.token_to_id.get(normalize(token, vocab.lowercase))
            if tid is not None:
                matrix[tid] = row
    matrix[PAD] = 0.0
    return matrix


def random_embeddings(vocab_size: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    matrix = rng.uniform(-OOV_INIT_RANGE, OOV_INIT_RANGE, size=(vocab_size, dim))
    matrix[PAD] = 0.0
    return matrix


class EmbeddingTable:
    """General-purpose and domain-specific rows looked up side by side."""

    def __init__(self, general: np.ndarray, domain: np.ndarray, trainable: bool = True):
        if general.shape[0] != domain.shape[0]:
            raise ValueError("general and domain matrices must have the same row count")
        self.general = Tensor(general, requires_grad=trainable)
        self.domain = Tensor(domain, requires_grad=trainable)
        self.trainable = trainable

    @property
    def d_general(self) -> int:
        return self.general.shape[1]

    @property
    def d_domain(self) -> int:
        return self.domain.shape[1]

    @property
    def dim(self) -> int:
        return self.d_general + self.d_domain

    def __len__(self) -> int:
        return self.general.shape[0]

    def embed(self, token_ids, mask_domain: bool = False) -> Tensor:
        ids = np.asarray(token_ids, dtype=np.int64)
        g = ad.embedding(self.general, ids, frozen_rows=(PAD,))
        if mask_domain:
            d = Tensor(np.zeros(ids.shape + (self.d_domain,)))
        else:
            d = ad.embedding(self.domain, ids, frozen_rows=(PAD,))
        return ad.concat([g, d], axis=-1)
