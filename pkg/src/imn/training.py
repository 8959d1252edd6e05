"""Losses, scheduled sampling and the alternating aspect/document training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import (AspectBatch, AspectInstance, DocumentInstance, collate_aspect, collate_docs,
                   make_batches, split_dev)
from .metrics import EvalReport, compute_metrics
from .model import IMN, ForwardState, ModelConfig, build_model
from .optim import Adam
from .vocab import Vocabulary, build_vocab

log = logging.getLogger(__name__)

ASPECT_GROUPS = ("s", "ae", "as", "re")
DOC_GROUPS = ("s", "ds", "dd")


@dataclass
class TrainConfig:
    T: int = 2
    r: int = 2
    batch_size: int = 32
    learning_rate: float = 1e-4
    max_pretrain_epochs: int = 5
    max_epochs: int = 50
    dev_fraction: float = 0.2
    seed: int = 0
    scheduled_sampling: bool = True

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.dev_fraction < 1.0:
            raise ValueError("dev_fraction must be in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_pretrain_epochs < 0 or self.max_epochs < 0:
            raise ValueError("epoch counts must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# losses


def token_aspect_loss(y_ae: Tensor, y_as: Tensor, gold_ae: np.ndarray, gold_as: np.ndarray,
                      mask: np.ndarray | None = None) -> Tensor:
    """Mean over sentences of the per-sentence mean token loss.

    ``gold_ae`` / ``gold_as`` hold class ids, ``-1`` where a token is not
    supervised (padding for both, non-aspect or conflict tokens for AS).
    """
    gold_ae = np.asarray(gold_ae, dtype=np.int64)
    gold_as = np.asarray(gold_as, dtype=np.int64)
    if gold_ae.shape != y_ae.shape[:-1] or gold_as.shape != y_as.shape[:-1]:
        raise ValueError(f"gold labels {gold_ae.shape}/{gold_as.shape} do not match "
                         f"predictions {y_ae.shape[:-1]}")
    if mask is None:
        mask = np.ones(gold_ae.shape, dtype=bool)
    per_token = ad.cross_entropy(y_ae, gold_ae) + ad.cross_entropy(y_as, gold_as)
    lengths = np.asarray(mask, dtype=bool).sum(axis=-1)
    per_sentence = ad.sum_(per_token, axis=-1) * (1.0 / lengths)
    return ad.mean(per_sentence)


def aspect_loss(state: ForwardState, gold_ae: np.ndarray, gold_as: np.ndarray) -> Tensor:
    """Aspect-level loss on the last iteration's predictions."""
    final = state.final
    return token_aspect_loss(final.y_ae, final.y_as, gold_ae, gold_as, state.mask)


def doc_loss(y_ds: Tensor, gold_ds: np.ndarray, y_dd: Tensor, gold_dd: np.ndarray) -> Tensor:
    """Mean DS cross-entropy plus mean DD cross-entropy."""
    gold_ds = np.asarray(gold_ds, dtype=np.int64)
    gold_dd = np.asarray(gold_dd, dtype=np.int64)
    if gold_ds.size == 0 or gold_dd.size == 0:
        raise ValueError("document batches must be non-empty")
    return ad.mean(ad.cross_entropy(y_ds, gold_ds)) + ad.mean(ad.cross_entropy(y_dd, gold_dd))


def scheduled_sampling_prob(epoch: int) -> float:
    """Probability of feeding gold opinion indicators: inverse sigmoid decay."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return 5.0 / (5.0 + math.exp(epoch / 5.0))


# ---------------------------------------------------------------------------
# training loop


@dataclass
class StepEvent:
    phase: str          # "pretrain" | "aspect" | "document"
    epoch: int
    batch: int          # 1-based within the epoch
    loss: float
    groups: tuple[str, ...]
    gold_opinions: bool = False


@dataclass
class TrainResult:
    model: IMN
    vocab: Vocabulary
    best_epoch: int
    best_f1_i: float
    dev_report: EvalReport | None
    epoch_log: list[dict] = field(default_factory=list)
    events: list[StepEvent] = field(default_factory=list)
    train_set: list[AspectInstance] = field(default_factory=list)
    dev_set: list[AspectInstance] = field(default_factory=list)


class _BatchStream:
    """Endless shuffled minibatches over a dataset."""

    def __init__(self, data: Sequence, batch_size: int, rng: np.random.Generator):
        self.data, self.batch_size, self.rng = data, batch_size, rng
        self._queue: list[list] = []

    def next(self) -> list:
        if not self._queue:
            self._queue = make_batches(self.data, self.batch_size, self.rng)
        return self._queue.pop(0)


def validate_datasets(aspect_data, ds_data, dd_data, n_domains: int) -> None:
    if not aspect_data:
        raise ValueError("aspect-level training data is empty")
    if not ds_data or not dd_data:
        raise ValueError("document-level DS and DD data must be non-empty")
    for d in ds_data:
        if d.label_kind != "DS" or not 0 <= d.label < 3:
            raise ValueError(f"DS dataset holds an invalid instance: {d.label_kind}/{d.label}")
    for d in dd_data:
        if d.label_kind != "DD" or not 0 <= d.label < n_domains:
            raise ValueError(f"DD dataset holds an invalid instance: {d.label_kind}/{d.label}")
    for inst in aspect_data:
        if not isinstance(inst, AspectInstance):
            raise TypeError("aspect data must be AspectInstance objects")


def evaluate(model: IMN, vocab: Vocabulary, data: Sequence[AspectInstance], T: int) -> EvalReport:
    return compute_metrics(model.predict(data, vocab, T), data)


def train(aspect_data: Sequence[AspectInstance], ds_data: Sequence[DocumentInstance],
          dd_data: Sequence[DocumentInstance], config: TrainConfig | None = None,
          model_config: ModelConfig | None = None, *, vocab: Vocabulary | None = None,
          model: IMN | None = None, embeddings: tuple[np.ndarray, np.ndarray] | None = None,
          callback: Callable[[StepEvent, IMN], None] | None = None) -> TrainResult:
    """Pretrain on documents, then alternate aspect and document updates.

    A ``dev_fraction`` share of ``aspect_data`` is held out; the returned
    model carries the parameters of the epoch with the best dev F1-I.
    ``callback(event, model)`` runs after every optimizer step.
    """
    config = config or TrainConfig()
    model_config = model_config or (model.config if model is not None else ModelConfig())
    validate_datasets(aspect_data, ds_data, dd_data, model_config.n_domains)
    rng = np.random.default_rng(config.seed)

    train_a, dev_a = split_dev(list(aspect_data), config.dev_fraction, rng)
    if vocab is None:
        vocab = build_vocab([[t for inst in aspect_data for t in inst.tokens],
                             [t for d in ds_data for t in d.tokens],
                             [t for d in dd_data for t in d.tokens]])
    if model is None:
        general, domain = embeddings if embeddings is not None else (None, None)
        model = build_model(model_config, vocab, rng, general, domain)

    opt_a = Adam(model.trainable(ASPECT_GROUPS), lr=config.learning_rate)
    opt_d = Adam(model.trainable(DOC_GROUPS), lr=config.learning_rate)
    ds_stream = _BatchStream(ds_data, config.batch_size, rng)
    dd_stream = _BatchStream(dd_data, config.batch_size, rng)
    events: list[StepEvent] = []

    def emit(ev: StepEvent) -> None:
        events.append(ev)
        if callback is not None:
            callback(ev, model)

    def doc_step(phase: str, epoch: int, b: int) -> float:
        bds = collate_docs(ds_stream.next(), vocab)
        bdd = collate_docs(dd_stream.next(), vocab)
        y_ds, _ = model.forward_ds(bds.ids, bds.mask, training=True, rng=rng)
        y_dd, _ = model.forward_dd(bdd.ids, bdd.mask, training=True, rng=rng)
        loss = doc_loss(y_ds, bds.labels, y_dd, bdd.labels)
        model.zero_grad()
        loss.backward()
        opt_d.step()
        emit(StepEvent(phase, epoch, b, loss.item(), DOC_GROUPS))
        return loss.item()

    def aspect_step(batch: AspectBatch, epoch: int, b: int) -> float:
        use_gold = config.scheduled_sampling and rng.random() < scheduled_sampling_prob(epoch)
        override = batch.gold_opinion if use_gold else None
        state = model.forward(batch.ids, batch.mask, T=config.T, training=True, rng=rng,
                              opinion_override=override)
        loss = aspect_loss(state, batch.gold_ae, batch.gold_as)
        model.zero_grad()
        loss.backward()
        opt_a.step()
        emit(StepEvent("aspect", epoch, b, loss.item(), ASPECT_GROUPS, use_gold))
        return loss.item()

    pre_steps = max(math.ceil(len(ds_data) / config.batch_size),
                    math.ceil(len(dd_data) / config.batch_size))
    for e in range(config.max_pretrain_epochs):
        losses = [doc_step("pretrain", e, b) for b in range(1, pre_steps + 1)]
        log.info("pretrain epoch %d  L_d=%.4f", e, float(np.mean(losses)))

    best_f1, best_epoch, best_state, best_report = -1.0, -1, model.state_dict(), None
    epoch_log: list[dict] = []
    for e in range(config.max_epochs):
        a_losses, d_losses = [], []
        for b, insts in enumerate(make_batches(train_a, config.batch_size, rng), 1):
            a_losses.append(aspect_step(collate_aspect(insts, vocab), e, b))
            if b % config.r == 0:
                d_losses.append(doc_step("document", e, b))
        report = evaluate(model, vocab, dev_a, config.T)
        entry = {
            "epoch": e,
            "aspect_loss": float(np.mean(a_losses)),
            "doc_loss": float(np.mean(d_losses)) if d_losses else None,
            "epsilon": scheduled_sampling_prob(e),
            **{k: getattr(report, k) for k in ("f1_a", "f1_o", "acc_s", "f1_s", "f1_i")},
        }
        epoch_log.append(entry)
        log.info("epoch %d  L_a=%.4f  dev %s", e, entry["aspect_loss"], report.summary())
        if report.f1_i > best_f1:
            best_f1, best_epoch, best_report = report.f1_i, e, report
            best_state = model.state_dict()

    model.load_state_dict(best_state)
    return TrainResult(model, vocab, best_epoch, max(best_f1, 0.0), best_report,
                       epoch_log, events, train_a, dev_a)
