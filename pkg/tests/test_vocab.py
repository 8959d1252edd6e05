import numpy as np
import pytest

from imn import autodiff as ad
from imn.vocab import PAD, UNK, EmbeddingTable, Vocabulary, build_vocab, load_embeddings


def test_min_count_threshold():
    v = build_vocab(["a a b"], min_count=2)
    assert v.corpus_tokens() == ["a"]
    assert v.lookup("b") == UNK


def test_first_seen_ids():
    v = build_vocab(["x y"])
    assert v.token_to_id == {"x": 2, "y": 3}
    assert v.id_to_token[PAD] == "<pad>" and v.id_to_token[UNK] == "<unk>"


def test_union_of_sources():
    aspect = [["the", "fish", "is", "fresh"]]
    docs = ["great phone", "the battery died"]
    v = build_vocab([aspect[0], *docs])
    expected = set(aspect[0]) | {t for d in docs for t in d.split()}
    assert set(v.corpus_tokens()) == expected
    assert len(v) == len(expected) + 2


def test_empty_corpora_rejected():
    with pytest.raises(ValueError):
        build_vocab([])


def test_lowercasing_and_reserved_tokens():
    v = Vocabulary(["Fish"])
    assert v.lookup("FISH") == 2
    with pytest.raises(ValueError):
        v.add("<pad>")


def test_load_embeddings(tmp_path):
    path = tmp_path / "e.vec"
    path.write_text("cat 1.0 2.0\n<pad> 9 9\n")
    v = Vocabulary(["cat", "dog"])
    m = load_embeddings(path, v, 2, np.random.default_rng(0))
    np.testing.assert_array_equal(m[v.lookup("cat")], [1.0, 2.0])
    assert np.all(np.abs(m[v.lookup("dog")]) < 0.05)
    assert not m[PAD].any()


def test_load_embeddings_skips_word2vec_header(tmp_path):
    path = tmp_path / "w2v.txt"
    path.write_text("2 2\ncat 1.0 2.0 \ndog 3.0 4.0\n")
    v = Vocabulary(["cat", "dog"])
    m = load_embeddings(path, v, 2)
    np.testing.assert_array_equal(m[2:], [[1.0, 2.0], [3.0, 4.0]])


@pytest.mark.parametrize("text", ["cat 1.0\n", "cat 1.0 x\n"])
def test_load_embeddings_errors_name_the_line(tmp_path, text):
    path = tmp_path / "bad.vec"
    path.write_text("ok 0.5 0.5\n" + text)
    with pytest.raises(ValueError, match=":2:"):
        load_embeddings(path, Vocabulary(["cat"]), 2)


def _table():
    rng = np.random.default_rng(0)
    g, d = rng.normal(size=(5, 4)), rng.normal(size=(5, 3))
    g[PAD] = d[PAD] = 0.0
    return EmbeddingTable(g, d), g, d


def test_embed_layout_and_masking():
    table, g, d = _table()
    ids = np.array([2, 3, 4])
    full = table.embed(ids, mask_domain=False).data
    masked = table.embed(ids, mask_domain=True).data
    assert full.shape == (3, 7)
    np.testing.assert_array_equal(full[:, 4:], d[ids])
    assert not masked[:, 4:].any()
    np.testing.assert_array_equal(masked[:, :4], full[:, :4])


def test_pad_row_is_zero_under_both_masks():
    table, _, _ = _table()
    for m in (False, True):
        assert not table.embed(np.array([PAD]), mask_domain=m).data.any()


def test_out_of_range_id_rejected():
    table, _, _ = _table()
    with pytest.raises(IndexError):
        table.embed(np.array([5]))


def test_gradients_reach_looked_up_rows_only():
    table, _, _ = _table()
    ad.sum_(table.embed(np.array([2, 2, 0]))).backward()
    touched = np.abs(table.general.grad).sum(axis=1) > 0
    assert touched.tolist() == [False, False, True, False, False]
    np.testing.assert_array_equal(table.general.grad[2], 2.0)
