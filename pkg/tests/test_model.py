import numpy as np
import pytest

from imn import autodiff as ad
from imn.autodiff import ShapeError, Tensor
from imn.data import collate_aspect
from imn.encoders import as_self_attention, cnn_stack
from imn.heads import Dense, ae_decode, as_decode, opinion_prob
from imn.model import ModelConfig, mp_update
from imn.training import aspect_loss

from conftest import SENTENCES
from gradcheck import TOL, check_grads


def _components(rng, n=4, d=256):
    y_ae = ad.softmax(Tensor(rng.normal(size=(n, 5))))
    y_as = ad.softmax(Tensor(rng.normal(size=(n, 3))))
    y_ds = ad.softmax(Tensor(rng.normal(size=3)))
    a_ds = ad.softmax(Tensor(rng.normal(size=n)))
    a_dd = ad.softmax(Tensor(rng.normal(size=n)))
    return Tensor(rng.normal(size=(n, d))), y_ae, y_as, y_ds, a_ds, a_dd


def test_re_encoder_input_dim():
    assert ModelConfig().re_input_dim == 269


def test_mp_update_zero_params_give_zero():
    rng = np.random.default_rng(0)
    re = Dense(Tensor(np.zeros((269, 256))), Tensor(np.zeros(256)))
    assert not mp_update(*_components(rng), re).data.any()


def test_mp_update_concatenation_layout():
    rng = np.random.default_rng(1)
    h, y_ae, y_as, y_ds, a_ds, a_dd = _components(rng)
    w = np.zeros((269, 256))
    for k in range(5):
        w[256 + k, k] = 1.0         # y_ae -> outputs 0..4
    for k in range(3):
        w[261 + k, 5 + k] = 1.0     # y_as -> 5..7
        w[264 + k, 8 + k] = 1.0     # y_ds -> 8..10
    w[267, 11] = 1.0                # a_ds
    w[268, 12] = 1.0                # a_dd
    out = mp_update(h, y_ae, y_as, y_ds, a_ds, a_dd, Dense(Tensor(w), Tensor(np.zeros(256)))).data
    np.testing.assert_allclose(out[:, :5], y_ae.data)
    np.testing.assert_allclose(out[:, 5:8], y_as.data)
    np.testing.assert_allclose(out[:, 8:11], np.tile(y_ds.data, (4, 1)))
    np.testing.assert_allclose(out[:, 11], a_ds.data)
    np.testing.assert_allclose(out[:, 12], a_dd.data)


def test_mp_update_is_non_negative_and_checks_dims():
    rng = np.random.default_rng(2)
    re = Dense(Tensor(rng.normal(size=(269, 256))), Tensor(rng.normal(size=256)))
    assert np.all(mp_update(*_components(rng), re).data >= 0)
    h, y_ae, y_as, y_ds, a_ds, a_dd = _components(rng)
    with pytest.raises(ShapeError):
        mp_update(h, y_as, y_as, y_ds, a_ds, a_dd, re)


def _batch(vocab, sentences=SENTENCES):
    return collate_aspect(sentences, vocab)


@pytest.mark.parametrize("T", [0, 1, 2, 3])
def test_snapshot_count(make_model, vocab, T):
    b = _batch(vocab)
    state = make_model().forward(b.ids, b.mask, T=T)
    assert len(state.heads) == T + 1 and len(state.attention) == T + 1 and len(state.h_s) == T + 1


def test_iteration_zero_is_the_shared_encoding(make_model, vocab):
    model = make_model()
    b = _batch(vocab)
    state = model.forward(b.ids, b.mask, T=2)
    emb = model.embeddings.embed(b.ids) * b.mask[..., None].astype(float)
    np.testing.assert_array_equal(state.h_s[0].data, cnn_stack(emb, model.shared, b.mask).data)


def test_t1_matches_manual_composition(make_model, vocab):
    model = make_model(seed=3)
    b = _batch(vocab, SENTENCES[1:2])
    ids = b.ids[0]
    emb = model.embeddings.embed(ids)
    h0 = cnn_stack(emb, model.shared)

    def heads(h):
        y_ae = ae_decode(model.ae_dec, emb, h0, cnn_stack(h, model.ae_cnn))
        _, hp = as_self_attention(h, opinion_prob(y_ae), model.w_as)
        y_as = as_decode(model.as_dec, h0, hp)
        y_ds, a_ds = model.ds_head(h)
        h_dd = cnn_stack(model.embeddings.embed(ids, mask_domain=True), model.shared)
        y_dd, a_dd = model.dd_head(h_dd)
        return y_ae, y_as, y_ds, y_dd, a_ds, a_dd

    y_ae, y_as, y_ds, _, a_ds, a_dd = heads(h0)
    h1 = mp_update(h0, y_ae, y_as, y_ds, a_ds, a_dd, model.re)
    manual = heads(h1)
    state = model.forward(ids, T=1)
    for got, want in zip((state.final.y_ae, state.final.y_as, state.final.y_ds, state.final.y_dd),
                         (manual[0], manual[1], manual[2], manual[3])):
        np.testing.assert_allclose(got.data, want.data, atol=1e-12)


def test_eval_forward_is_deterministic(make_model, vocab):
    model = make_model()
    b = _batch(vocab)
    a = model.forward(b.ids, b.mask, T=2).final
    c = model.forward(b.ids, b.mask, T=2).final
    for k in ("y_ae", "y_as", "y_ds", "y_dd"):
        np.testing.assert_array_equal(getattr(a, k).data, getattr(c, k).data)


def test_batched_equals_single(make_model, vocab):
    model = make_model(seed=4)
    b = _batch(vocab)
    batched = model.forward(b.ids, b.mask, T=2).final
    for i, inst in enumerate(SENTENCES):
        n = len(inst.tokens)
        single = model.forward(b.ids[i, :n], T=2).final
        np.testing.assert_allclose(batched.y_ae.data[i, :n], single.y_ae.data, atol=1e-10)
        np.testing.assert_allclose(batched.y_as.data[i, :n], single.y_as.data, atol=1e-10)
        np.testing.assert_allclose(batched.y_ds.data[i], single.y_ds.data, atol=1e-10)
        np.testing.assert_allclose(batched.a_dd.data[i, :n], single.a_dd.data, atol=1e-10)


def test_padded_positions_receive_no_attention(make_model, vocab):
    b = _batch(vocab)
    state = make_model().forward(b.ids, b.mask, T=2)
    for t in range(3):
        assert not state.attention[t].data[~b.mask[:, None, :].repeat(b.mask.shape[1], 1)].any()
        assert not state.heads[t].a_ds.data[~b.mask].any()


def test_document_paths_are_iteration_zero(make_model, vocab):
    model = make_model(seed=5)
    b = _batch(vocab)
    state = model.forward(b.ids, b.mask, T=2)
    y_ds, a_ds = model.forward_ds(b.ids, b.mask)
    y_dd, a_dd = model.forward_dd(b.ids, b.mask)
    np.testing.assert_allclose(y_ds.data, state.heads[0].y_ds.data, atol=1e-12)
    np.testing.assert_allclose(y_dd.data, state.heads[0].y_dd.data, atol=1e-12)
    # the masked DD path is computed once per forward
    np.testing.assert_array_equal(state.heads[0].a_dd.data, state.heads[2].a_dd.data)


def test_dd_ignores_domain_embeddings_when_masked(make_model, vocab):
    model = make_model()
    b = _batch(vocab)
    before = model.forward_dd(b.ids, b.mask)[0].data.copy()
    model.embeddings.domain.data += 1.0
    np.testing.assert_array_equal(model.forward_dd(b.ids, b.mask)[0].data, before)


def test_unmasked_dd_switch(make_model, vocab):
    model = make_model(dd_masked_path=False)
    b = _batch(vocab)
    state = model.forward(b.ids, b.mask, T=1)
    assert state.h_s_dd is None
    assert not np.array_equal(state.heads[0].a_dd.data, state.heads[1].a_dd.data)


def test_re_encoder_gradient_is_nontrivial_and_correct(make_model, vocab):
    model = make_model(seed=6, dropout=0.0)
    b = _batch(vocab)

    def loss():
        return aspect_loss(model.forward(b.ids, b.mask, T=2), b.gold_ae, b.gold_as)

    re = {k: p for k, p in model.params.items() if k.startswith("re.")}
    errors = check_grads(loss, re)
    assert np.linalg.norm(model.params["re.w"].grad) > 0
    assert max(errors.values()) < TOL, errors


def test_parameter_groups_partition(make_model):
    model = make_model()
    groups = model.parameter_groups()
    names = [n for g in groups.values() for n in g]
    assert sorted(names) == sorted(model.params)
    assert set(groups) == {"s", "ae", "as", "ds", "dd", "re"}
    assert all(groups[g] for g in ("s", "ae", "as", "ds", "dd", "re"))


def test_state_dict_roundtrip(make_model):
    a, b = make_model(seed=1), make_model(seed=2)
    b.load_state_dict(a.state_dict())
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].data, b.params[k].data)
    bad = a.state_dict()
    bad["re.w"] = bad["re.w"][:-1]
    with pytest.raises(ShapeError):
        b.load_state_dict(bad)
