import itertools
import json

import numpy as np
import pytest

from imn.data import AE_LABELS, AS_LABELS, AspectInstance
from imn.metrics import (ASPECT, OPINION, Prediction, Span, assign_sentiments, compute_metrics,
                         extract_spans)
from imn.synthetic import FISH_EXAMPLE

from metric_oracle import oracle_spans


def one_hot_as(sentiments):
    """Per-token sentiment names -> n x 3 distributions (unlisted tokens uniform)."""
    y = np.full((len(sentiments), 3), 1 / 3)
    for i, s in enumerate(sentiments):
        if s in AS_LABELS:
            y[i] = 0.0
            y[i, AS_LABELS.index(s)] = 1.0
    return y


def pred_from(ae, sentiments):
    return Prediction.from_labels(ae, one_hot_as(sentiments))


def test_fish_example_spans():
    spans = extract_spans(FISH_EXAMPLE.ae_labels)
    assert [s.key for s in spans if s.kind == ASPECT] == [(1, 1), (6, 8)]
    assert [s.key for s in spans if s.kind == OPINION] == [(3, 3), (13, 13)]


def test_all_o_has_no_spans():
    assert extract_spans(["O"] * 6) == []


def test_orphan_inside_starts_a_span():
    assert extract_spans(["O", "IA", "IA"]) == [Span(1, 2, ASPECT)]
    assert [s.key for s in extract_spans(["BP", "IA", "IP"])] == [(0, 0), (1, 1), (2, 2)]


def test_decoder_matches_oracle_on_all_short_sequences():
    for n in range(1, 5):
        for labels in itertools.product(AE_LABELS, repeat=n):
            spans = extract_spans(labels)
            assert [s.key for s in spans if s.kind == ASPECT] == oracle_spans(labels, "BA", "IA")
            assert [s.key for s in spans if s.kind == OPINION] == oracle_spans(labels, "BP", "IP")


def test_first_token_sentiment_rule():
    y = one_hot_as(["pos"] * 6 + ["neg", "pos", "pos"])
    [span] = assign_sentiments([Span(6, 8, ASPECT)], y)
    assert span.sentiment == "neg"
    [tie] = assign_sentiments([Span(0, 0, ASPECT)], np.full((1, 3), 1 / 3))
    assert tie.sentiment == "pos"
    [single] = assign_sentiments([Span(2, 2, ASPECT)], one_hot_as(["pos", "pos", "neu"]))
    assert single.sentiment == "neu"
    with pytest.raises(IndexError):
        assign_sentiments([Span(2, 3, ASPECT)], y[:3])


def test_gold_identity_gives_perfect_scores():
    report = compute_metrics([pred_from(FISH_EXAMPLE.ae_labels, FISH_EXAMPLE.as_labels)], [FISH_EXAMPLE])
    assert (report.f1_a, report.f1_o, report.acc_s, report.f1_i) == (1.0, 1.0, 1.0, 1.0)
    # the example has no neutral span, so the zero-support class keeps macro-F1 at 2/3
    assert report.f1_s == pytest.approx(2 / 3)
    full = AspectInstance(["a", "b", "c", "d", "e"], ["BA", "O", "BA", "O", "BA"], ["pos", "none", "neg", "none", "neu"])
    r = compute_metrics([pred_from(full.ae_labels, full.as_labels)], [full])
    assert (r.f1_a, r.f1_o, r.acc_s, r.f1_s, r.f1_i) == (1.0, 0.0, 1.0, 1.0, 1.0)


def test_hand_enumerated_partial_match():
    # gold aspects A=[0], B=[2]; predicted A=[0] (correct sentiment), C=[4]
    gold = AspectInstance(["a", "x", "b", "x", "c"], ["BA", "O", "BA", "O", "O"], ["pos", "none", "neg", "none", "none"])
    pred = pred_from(["BA", "O", "O", "O", "BA"], ["pos", "pos", "pos", "pos", "neg"])
    r = compute_metrics([pred], [gold])
    assert r.f1_a == 0.5 and r.acc_s == 1.0 and r.f1_i == 0.5


def test_conflict_counts_for_f1a_only():
    gold = AspectInstance(["a", "b"], ["BA", "O"], ["conflict", "none"])
    r = compute_metrics([pred_from(["BA", "O"], ["neg", "pos"])], [gold])
    assert r.f1_a == 1.0
    assert r.no_matched_spans and r.acc_s == 0.0 and r.f1_s == 0.0
    assert r.integrated.tp == r.integrated.fp == r.integrated.fn == 0


def test_each_f1_follows_its_counts():
    rng = np.random.default_rng(0)
    from imn.synthetic import random_aspect_sentence
    gold = [random_aspect_sentence(rng) for _ in range(30)]
    preds = [pred_from(list(rng.choice(AE_LABELS, len(g.tokens))), list(rng.choice(AS_LABELS, len(g.tokens))))
             for g in gold]
    r = compute_metrics(preds, gold)
    for f1, c in ((r.f1_a, r.aspect), (r.f1_o, r.opinion), (r.f1_i, r.integrated)):
        p = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
        rc = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
        assert f1 == pytest.approx(2 * p * rc / (p + rc) if p + rc else 0.0, abs=1e-12)


def test_sentence_count_mismatch():
    with pytest.raises(ValueError):
        compute_metrics([], [FISH_EXAMPLE])


def test_report_serialisation():
    r = compute_metrics([pred_from(FISH_EXAMPLE.ae_labels, FISH_EXAMPLE.as_labels)], [FISH_EXAMPLE])
    d = json.loads(r.to_json())
    assert d["f1_a"] == 1.0 and d["aspect"] == {"tp": 2, "fp": 0, "fn": 0}
    assert r.summary().startswith("F1-a=100.00")
