import math

import numpy as np
import pytest

from imn.autodiff import Tensor
from imn.data import DocumentInstance, collate_aspect
from imn.synthetic import domain_documents, memorization_corpus, sentiment_documents
from imn.training import (ASPECT_GROUPS, DOC_GROUPS, TrainConfig, doc_loss, evaluate,
                          scheduled_sampling_prob, token_aspect_loss, train)

from conftest import SENTENCES, tiny_config


def _one_hot(ids, k):
    out = np.zeros((len(ids), k))
    out[np.arange(len(ids)), ids] = 1.0
    return Tensor(out[None])


# -- losses -------------------------------------------------------------------


def test_perfect_predictions_give_zero_loss():
    gold_ae, gold_as = np.array([[0, 4]]), np.array([[1, -1]])
    loss = token_aspect_loss(_one_hot([0, 4], 5), _one_hot([1, 0], 3), gold_ae, gold_as)
    assert loss.item() == 0.0


def test_sentence_without_aspects_has_no_as_term():
    y_ae = Tensor(np.full((1, 3, 5), 0.2))
    y_as = Tensor(np.random.default_rng(0).dirichlet(np.ones(3), size=(1, 3)))
    loss = token_aspect_loss(y_ae, y_as, np.array([[4, 4, 2]]), np.full((1, 3), -1))
    assert loss.item() == pytest.approx(math.log(5), abs=1e-12)


def test_two_token_uniform_example():
    loss = token_aspect_loss(Tensor(np.full((1, 2, 5), 0.2)), Tensor(np.full((1, 2, 3), 1 / 3)),
                             np.array([[0, 4]]), np.array([[0, -1]]))
    expected = (math.log(5) + math.log(3)) / 2 + math.log(5) / 2
    assert loss.item() == pytest.approx(expected, abs=1e-12)
    assert loss.item() == pytest.approx(2.156, abs=5e-3)


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        token_aspect_loss(Tensor(np.full((1, 2, 5), 0.2)), Tensor(np.full((1, 2, 3), 1 / 3)),
                          np.array([[0, 4, 4]]), np.array([[0, -1, -1]]))


def test_doc_loss_examples():
    assert doc_loss(_one_hot([2], 3)[0], np.array([2]), _one_hot([1], 2)[0], np.array([1])).item() == 0.0
    uniform = doc_loss(Tensor(np.full((4, 3), 1 / 3)), np.array([0, 1, 2, 0]),
                       Tensor(np.full((2, 2), 0.5)), np.array([0, 1]))
    assert uniform.item() == pytest.approx(math.log(3) + math.log(2), abs=1e-12)
    with pytest.raises(ValueError):
        doc_loss(Tensor(np.zeros((0, 3))), np.zeros(0), Tensor(np.full((1, 2), 0.5)), np.array([0]))


def test_doc_loss_ds_term_ignores_dd_gold():
    rng = np.random.default_rng(1)
    y_ds = Tensor(rng.dirichlet(np.ones(3), size=4))
    y_dd = Tensor(rng.dirichlet(np.ones(2), size=3))
    gold_ds = np.array([0, 2, 1, 1])
    a = doc_loss(y_ds, gold_ds, y_dd, np.array([0, 0, 0])).item()
    b = doc_loss(y_ds, gold_ds, y_dd, np.array([1, 1, 1])).item()
    ds_only = float(np.mean(-np.log(y_ds.data[np.arange(4), gold_ds])))
    assert a - ds_only == pytest.approx(float(np.mean(-np.log(y_dd.data[:, 0]))), abs=1e-12)
    assert b - ds_only == pytest.approx(float(np.mean(-np.log(y_dd.data[:, 1]))), abs=1e-12)


def test_loss_masking_under_permutation(make_model, vocab):
    model = make_model(seed=2)
    batch = collate_aspect(SENTENCES, vocab)
    final = model.forward(batch.ids, batch.mask, T=2).final
    base = token_aspect_loss(final.y_ae, final.y_as, batch.gold_ae, batch.gold_as, batch.mask).item()
    rng = np.random.default_rng(0)
    for _ in range(20):
        y_as = final.y_as.data.copy()
        for b in range(len(SENTENCES)):
            free = np.flatnonzero(batch.gold_as[b] < 0)
            y_as[b, free] = y_as[b, rng.permutation(free)]
            y_as[b, free] = rng.dirichlet(np.ones(3), size=len(free))
        loss = token_aspect_loss(final.y_ae, Tensor(y_as), batch.gold_ae, batch.gold_as, batch.mask).item()
        assert loss == base


# -- scheduled sampling -------------------------------------------------------


def test_scheduled_sampling_values():
    assert scheduled_sampling_prob(0) == 5 / 6
    assert scheduled_sampling_prob(5) == pytest.approx(0.6478, abs=1e-4)
    eps = [scheduled_sampling_prob(e) for e in range(200)]
    assert all(a > b for a, b in zip(eps, eps[1:]))
    assert eps[-1] < 1e-15
    with pytest.raises(ValueError):
        scheduled_sampling_prob(-1)


# -- training loop ------------------------------------------------------------


@pytest.fixture(scope="module")
def corpora():
    aspects, _, _ = memorization_corpus()
    rng = np.random.default_rng(0)
    return aspects[:10], sentiment_documents(rng, 12), domain_documents(rng, 12)


def _run(corpora, callback=None, **cfg):
    aspects, ds, dd = corpora
    config = TrainConfig(**{"batch_size": 2, "max_epochs": 2, "max_pretrain_epochs": 1,
                            "learning_rate": 1e-2, **cfg})
    return train(aspects, ds, dd, config, tiny_config(), callback=callback)


def test_group_discipline_and_schedule(corpora):
    snapshots = []

    def watch(event, model):
        snapshots.append((event, model.state_dict()))

    result = _run(corpora, watch)
    groups_changed = []
    prev = None
    init = result.model  # only used for group lookup
    for event, state in snapshots:
        if prev is not None:
            changed = {init.group_of(k) for k in state if not np.array_equal(state[k], prev[k])}
            groups_changed.append((event, changed))
        prev = state
    for event, changed in groups_changed:
        if event.phase == "aspect":
            assert changed <= set(ASPECT_GROUPS) and not changed & {"ds", "dd"}
            assert {"ae", "as", "re", "s"} <= changed
        else:
            assert changed <= set(DOC_GROUPS) and {"ds", "dd"} <= changed
    # 8 training sentences / batch 2 -> 4 batches; with r=2 documents follow batches 2 and 4
    main = [e for e, _ in snapshots if e.phase != "pretrain"]
    for epoch in (0, 1):
        seq = [(e.phase, e.batch) for e in main if e.epoch == epoch]
        assert seq == [("aspect", 1), ("aspect", 2), ("document", 2), ("aspect", 3),
                       ("aspect", 4), ("document", 4)]
    pre = [e for e, _ in snapshots if e.phase == "pretrain"]
    assert len(pre) == 6 and all(e.groups == DOC_GROUPS for e in pre)


def test_seeded_runs_are_identical(corpora):
    a = _run(corpora, seed=3)
    b = _run(corpora, seed=3)
    assert [e.loss for e in a.events] == [e.loss for e in b.events]
    assert [e.gold_opinions for e in a.events] == [e.gold_opinions for e in b.events]
    c = _run(corpora, seed=4)
    assert [e.loss for e in a.events] != [e.loss for e in c.events]


def test_dev_split_and_best_checkpoint(corpora):
    result = _run(corpora, max_epochs=3)
    assert len(result.dev_set) == 2 and len(result.train_set) == 8
    report = evaluate(result.model, result.vocab, result.dev_set, 2)
    assert report.f1_i == result.best_f1_i
    assert len(result.epoch_log) == 3
    assert result.epoch_log[0]["epsilon"] == 5 / 6


def test_invalid_datasets_rejected(corpora):
    aspects, ds, dd = corpora
    with pytest.raises(ValueError):
        train([], ds, dd, TrainConfig(max_epochs=0), tiny_config())
    with pytest.raises(ValueError):
        train(aspects, dd, dd, TrainConfig(max_epochs=0), tiny_config())
    with pytest.raises(ValueError):
        train(aspects, ds, [DocumentInstance(["x"], "DD", 5)], TrainConfig(max_epochs=0), tiny_config())


@pytest.mark.parametrize("bad", [dict(T=-1), dict(r=0), dict(dev_fraction=1.0), dict(batch_size=0)])
def test_train_config_validation(bad):
    with pytest.raises(ValueError):
        TrainConfig(**bad)
