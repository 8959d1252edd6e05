"""Span decoding and the five extraction / sentiment metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .data import AE_LABELS, AS_LABELS, CONFLICT, AspectInstance

ASPECT, OPINION = "aspect", "opinion"
_KIND = {"BA": ASPECT, "IA": ASPECT, "BP": OPINION, "IP": OPINION}


@dataclass(frozen=True)
class Span:
    start: int
    end: int  # inclusive
    kind: str
    sentiment: str | None = None

    @property
    def key(self) -> tuple[int, int]:
        return (self.start, self.end)


def extract_spans(labels: Sequence[str]) -> list[Span]:
    """Decode BIO labels leniently.

    A B tag always opens a span; an I tag extends an open span of its own
    kind or, when orphaned, opens a new one.
    """
    spans: list[Span] = []
    kind = None
    start = 0
    for i, lab in enumerate(labels):
        lab_kind = _KIND.get(lab)
        continues = lab_kind is not None and lab[0] == "I" and lab_kind == kind
        if kind is not None and not continues:
            spans.append(Span(start, i - 1, kind))
            kind = None
        if lab_kind is not None and not continues:
            kind, start = lab_kind, i
    if kind is not None:
        spans.append(Span(start, len(labels) - 1, kind))
    return spans


def assign_sentiments(spans: Sequence[Span], y_as: np.ndarray) -> list[Span]:
    """Label each aspect span with the argmax sentiment of its first token.

    Ties resolve in (pos, neg, neu) order.
    """
    y_as = np.asarray(y_as)
    out = []
    for s in spans:
        if not 0 <= s.start <= s.end < len(y_as):
            raise IndexError(f"span {s.key} out of range for {len(y_as)} tokens")
        out.append(Span(s.start, s.end, s.kind, AS_LABELS[int(np.argmax(y_as[s.start]))]))
    return out


def gold_spans(inst: AspectInstance) -> tuple[list[Span], list[Span]]:
    spans = extract_spans(inst.ae_labels)
    aspects = [Span(s.start, s.end, s.kind, inst.as_labels[s.start]) for s in spans if s.kind == ASPECT]
    opinions = [s for s in spans if s.kind == OPINION]
    return aspects, opinions


@dataclass
class Prediction:
    """Decoded output for one sentence."""
    ae_labels: list[str]
    aspects: list[Span]
    opinions: list[Span]

    @classmethod
    def from_distributions(cls, y_ae: np.ndarray, y_as: np.ndarray) -> "Prediction":
        labels = [AE_LABELS[int(k)] for k in np.argmax(np.asarray(y_ae), axis=-1)]
        return cls.from_labels(labels, y_as)

    @classmethod
    def from_labels(cls, ae_labels: Sequence[str], y_as: np.ndarray) -> "Prediction":
        spans = extract_spans(ae_labels)
        aspects = assign_sentiments([s for s in spans if s.kind == ASPECT], y_as)
        return cls(list(ae_labels), aspects, [s for s in spans if s.kind == OPINION])


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


@dataclass
class EvalReport:
    f1_a: float
    f1_o: float
    acc_s: float
    f1_s: float
    f1_i: float
    aspect: Counts = field(default_factory=Counts)
    opinion: Counts = field(default_factory=Counts)
    integrated: Counts = field(default_factory=Counts)
    sentiment_matched: int = 0
    sentiment_correct: int = 0
    # confusion[gold][pred] over matched non-conflict spans
    confusion: dict[str, dict[str, int]] = field(default_factory=dict)
    no_matched_spans: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        return "  ".join(f"{name}={100 * getattr(self, key):.2f}" for name, key in (
            ("F1-a", "f1_a"), ("F1-o", "f1_o"), ("acc-s", "acc_s"),
            ("F1-s", "f1_s"), ("F1-I", "f1_i")))


def _match(pred: set, gold: set, c: Counts) -> None:
    tp = len(pred & gold)
    c.tp += tp
    c.fp += len(pred) - tp
    c.fn += len(gold) - tp


def compute_metrics(predictions: Sequence[Prediction], gold: Sequence[AspectInstance]) -> EvalReport:
    if len(predictions) != len(gold):
        raise ValueError(f"{len(predictions)} predictions for {len(gold)} gold sentences")
    aspect, opinion, integrated = Counts(), Counts(), Counts()
    confusion = {g: {p: 0 for p in AS_LABELS} for g in AS_LABELS}
    for pred, inst in zip(predictions, gold):
        g_asp, g_op = gold_spans(inst)
        _match({s.key for s in pred.aspects}, {s.key for s in g_asp}, aspect)
        _match({s.key for s in pred.opinions}, {s.key for s in g_op}, opinion)

        conflict_keys = {s.key for s in g_asp if s.sentiment == CONFLICT}
        g_sent = {s.key: s.sentiment for s in g_asp if s.sentiment != CONFLICT}
        p_sent = {s.key: s.sentiment for s in pred.aspects if s.key not in conflict_keys}
        _match(set(p_sent.items()), set(g_sent.items()), integrated)
        for key, gs in g_sent.items():
            if key in p_sent:
                confusion[gs][p_sent[key]] += 1

    matched = sum(sum(row.values()) for row in confusion.values())
    correct = sum(confusion[c][c] for c in AS_LABELS)
    acc_s = correct / matched if matched else 0.0
    per_class = []
    for c in AS_LABELS:
        tp = confusion[c][c]
        fp = sum(confusion[g][c] for g in AS_LABELS) - tp
        fn = sum(confusion[c].values()) - tp
        per_class.append(Counts(tp, fp, fn).f1)
    f1_s = sum(per_class) / len(per_class) if matched else 0.0
    return EvalReport(
        f1_a=aspect.f1, f1_o=opinion.f1, acc_s=acc_s, f1_s=f1_s, f1_i=integrated.f1,
        aspect=aspect, opinion=opinion, integrated=integrated,
        sentiment_matched=matched, sentiment_correct=correct,
        confusion=confusion, no_matched_spans=matched == 0)
