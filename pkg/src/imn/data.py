"""Aspect- and document-level corpora: parsing, writing and batching.

Aspect files are CoNLL-style: one ``token<TAB>ae_label<TAB>as_label`` line
per token, blank lines between sentences, ``-`` for "no sentiment".
Document files hold one ``label<TAB>token token ...`` line per document.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .vocab import PAD, Vocabulary

AE_LABELS = ("BA", "IA", "BP", "IP", "O")
AS_LABELS = ("pos", "neg", "neu")
CONFLICT, NONE = "conflict", "none"
AS_GOLD_LABELS = AS_LABELS + (CONFLICT, NONE)
DS_LABELS = AS_LABELS
DEFAULT_DOMAINS = ("restaurant", "electronics")

AE_INDEX = {lab: i for i, lab in enumerate(AE_LABELS)}
AS_INDEX = {lab: i for i, lab in enumerate(AS_LABELS)}
ASPECT_TAGS = frozenset({"BA", "IA"})
OPINION_TAGS = frozenset({"BP", "IP"})


class DataFormatError(ValueError):
    """A corpus file or instance violates its format."""


@dataclass
class AspectInstance:
    tokens: list[str]
    ae_labels: list[str]
    as_labels: list[str]

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        n = len(self.tokens)
        if n == 0:
            raise DataFormatError("empty sentence")
        if len(self.ae_labels) != n or len(self.as_labels) != n:
            raise DataFormatError("tokens, AE labels and AS labels differ in length")
        prev = "O"
        for i, (ae, sent) in enumerate(zip(self.ae_labels, self.as_labels)):
            if ae not in AE_INDEX:
                raise DataFormatError(f"token {i}: unknown AE label {ae!r}")
            if sent not in AS_GOLD_LABELS:
                raise DataFormatError(f"token {i}: unknown AS label {sent!r}")
            if ae == "IA" and prev not in ASPECT_TAGS:
                raise DataFormatError(f"token {i}: IA does not continue an aspect span")
            if ae == "IP" and prev not in OPINION_TAGS:
                raise DataFormatError(f"token {i}: IP does not continue an opinion span")
            if (ae in ASPECT_TAGS) != (sent != NONE):
                raise DataFormatError(
                    f"token {i}: AS label must be set exactly on aspect tokens (got {ae}/{sent})")
            if ae == "IA" and sent != self.as_labels[i - 1]:
                raise DataFormatError(f"token {i}: sentiment changes inside an aspect span")
            prev = ae

    @property
    def opinion_indicator(self) -> np.ndarray:
        return np.array([1.0 if a in OPINION_TAGS else 0.0 for a in self.ae_labels])


@dataclass
class DocumentInstance:
    tokens: list[str]
    label_kind: str  # "DS" or "DD"
    label: int


def _as_from_file(value: str) -> str:
    return NONE if value == "-" else value


def _as_to_file(value: str) -> str:
    return "-" if value == NONE else value


def parse_aspect_file(path) -> list[AspectInstance]:
    instances: list[AspectInstance] = []
    rows: list[tuple[str, str, str]] = []
    start = 1

    def flush(lineno):
        if not rows:
            return
        toks, ae, sent = (list(col) for col in zip(*rows))
        try:
            instances.append(AspectInstance(toks, ae, sent))
        except DataFormatError as exc:
            raise DataFormatError(f"{path}: sentence at line {start}: {exc}") from None
        rows.clear()

    with open(path, encoding="utf-8") as fh:
        lineno = 0
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                flush(lineno)
                start = lineno + 1
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not parts[0]:
                raise DataFormatError(f"{path}:{lineno}: expected 'token<TAB>ae<TAB>as'")
            tok, ae, sent = parts
            if ae not in AE_INDEX:
                raise DataFormatError(f"{path}:{lineno}: unknown AE label {ae!r}")
            sent = _as_from_file(sent)
            if sent not in AS_GOLD_LABELS or sent == NONE and parts[2] != "-":
                raise DataFormatError(f"{path}:{lineno}: unknown AS label {parts[2]!r}")
            rows.append((tok, ae, sent))
        flush(lineno)
    return instances


def write_aspect_file(path, instances: Sequence[AspectInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, inst in enumerate(instances):
            if k:
                fh.write("\n")
            for tok, ae, sent in zip(inst.tokens, inst.ae_labels, inst.as_labels):
                fh.write(f"{tok}\t{ae}\t{_as_to_file(sent)}\n")


def parse_doc_file(path, kind: str, classes: Sequence[str] | None = None) -> list[DocumentInstance]:
    """Read ``label<TAB>text`` lines. ``kind`` is ``"DS"`` or ``"DD"``.

    DS labels come from (pos, neg, neu); DD labels from ``classes``
    (default: restaurant, electronics), numbered in declaration order.
    """
    kind = kind.upper()
    if kind not in ("DS", "DD"):
        raise ValueError(f"unknown document label kind {kind!r}")
    if classes is None:
        classes = DS_LABELS if kind == "DS" else DEFAULT_DOMAINS
    index = {c: i for i, c in enumerate(classes)}
    docs: list[DocumentInstance] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            label, sep, text = line.partition("\t")
            if not sep:
                raise DataFormatError(f"{path}:{lineno}: expected 'label<TAB>text'")
            if label not in index:
                raise DataFormatError(f"{path}:{lineno}: label {label!r} not in {list(classes)}")
            tokens = text.split()
            if not tokens:
                raise DataFormatError(f"{path}:{lineno}: empty document text")
            docs.append(DocumentInstance(tokens, kind, index[label]))
    return docs


def write_doc_file(path, docs: Sequence[DocumentInstance], classes: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(f"{classes[d.label]}\t{' '.join(d.tokens)}\n")


# ---------------------------------------------------------------------------
# batching


def make_batches(instances: Sequence, batch_size: int, seed=None, shuffle: bool = True) -> list[list]:
    """Split into batches covering every instance exactly once.

    ``seed`` may be an int or a ``numpy.random.Generator``; the same seed
    gives the same order.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(instances))
    if shuffle:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        rng.shuffle(order)
    n_batches = math.ceil(len(instances) / batch_size)
    return [[instances[j] for j in order[b * batch_size:(b + 1) * batch_size]]
            for b in range(n_batches)]


def pad_ids(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    n = max(len(s) for s in seqs)
    ids = np.full((len(seqs), n), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), n), dtype=bool)
    for b, s in enumerate(seqs):
        ids[b, :len(s)] = s
        mask[b, :len(s)] = True
    return ids, mask


@dataclass
class AspectBatch:
    ids: np.ndarray          # (B, n) token ids, PAD-filled
    mask: np.ndarray         # (B, n) True on real tokens
    gold_ae: np.ndarray      # (B, n) AE class ids, -1 on padding
    gold_as: np.ndarray      # (B, n) AS class ids, -1 where not supervised
    gold_opinion: np.ndarray  # (B, n) 1.0 on gold BP/IP tokens
    instances: list[AspectInstance] = field(default_factory=list)


@dataclass
class DocBatch:
    ids: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    instances: list[DocumentInstance] = field(default_factory=list)


def collate_aspect(instances: Sequence[AspectInstance], vocab: Vocabulary) -> AspectBatch:
    ids, mask = pad_ids([vocab.encode(inst.tokens) for inst in instances])
    gold_ae = np.full(ids.shape, -1, dtype=np.int64)
    gold_as = np.full(ids.shape, -1, dtype=np.int64)
    gold_op = np.zeros(ids.shape)
    for b, inst in enumerate(instances):
        for i, (ae, sent) in enumerate(zip(inst.ae_labels, inst.as_labels)):
            gold_ae[b, i] = AE_INDEX[ae]
            # conflict and none are not trained on
            if ae in ASPECT_TAGS and sent in AS_INDEX:
                gold_as[b, i] = AS_INDEX[sent]
            if ae in OPINION_TAGS:
                gold_op[b, i] = 1.0
    return AspectBatch(ids, mask, gold_ae, gold_as, gold_op, list(instances))


def collate_docs(docs: Sequence[DocumentInstance], vocab: Vocabulary) -> DocBatch:
    ids, mask = pad_ids([vocab.encode(d.tokens) for d in docs])
    labels = np.array([d.label for d in docs], dtype=np.int64)
    return DocBatch(ids, mask, labels, list(docs))


def split_dev(instances: Sequence, dev_fraction: float, rng: np.random.Generator) -> tuple[list, list]:
    """Random disjoint (train, dev) split; dev gets round(fraction * N) items, at least 1."""
    if not 0.0 < dev_fraction < 1.0:
        raise ValueError("dev_fraction must be in (0, 1)")
    if len(instances) < 2:
        raise ValueError("need at least two instances to hold out a dev set")
    n_dev = min(max(1, int(round(dev_fraction * len(instances)))), len(instances) - 1)
    order = rng.permutation(len(instances))
    dev_idx = set(order[:n_dev].tolist())
    train = [x for i, x in enumerate(instances) if i not in dev_idx]
    dev = [x for i, x in enumerate(instances) if i in dev_idx]
    return train, dev
