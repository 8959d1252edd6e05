"""The interactive multi-task network: parameters, forward pass, message passing."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .data import AE_LABELS, AS_LABELS, AspectInstance, pad_ids
from .encoders import ConvLayer, as_self_attention, cnn_stack, glorot, make_conv_layer
from .heads import Dense, DocHead, HeadOutputs, ae_decode, as_decode, opinion_prob
from .metrics import Prediction
from .vocab import EmbeddingTable, Vocabulary, random_embeddings

GROUPS = ("s", "ae", "as", "ds", "dd", "re")
N_AE, N_AS, N_DS = len(AE_LABELS), len(AS_LABELS), len(AS_LABELS)


@dataclass
class ModelConfig:
    d_general: int = 300
    d_domain: int = 100
    first_layer: tuple[tuple[int, int], ...] = ((3, 128), (5, 128))  # (kernel, filters)
    hidden: int = 256
    kernel: int = 5
    m_s: int = 2
    m_ae: int = 2
    m_as: int = 0
    m_ds: int = 0
    m_dd: int = 0
    n_domains: int = 2
    dropout: float = 0.5
    dd_masked_path: bool = True
    trainable_embeddings: bool = True

    def __post_init__(self):
        self.first_layer = tuple(tuple(int(v) for v in g) for g in self.first_layer)
        if self.m_s < 1:
            raise ValueError("the shared encoder needs at least one CNN layer")
        sizes = [self.d_general, self.d_domain, self.hidden, self.kernel, *(v for g in self.first_layer for v in g)]
        if not self.first_layer or min(sizes) < 1:
            raise ValueError("dimensions, kernel widths and filter counts must be positive")
        if any(k % 2 == 0 for k in (self.kernel, *(k for k, _ in self.first_layer))):
            raise ValueError("kernel widths must be odd")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        for name in ("m_ae", "m_as", "m_ds", "m_dd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_domains < 2:
            raise ValueError("domain classification needs at least two domains")

    @property
    def shared_dim(self) -> int:
        return self.hidden if self.m_s > 1 else sum(f for _, f in self.first_layer)

    @property
    def re_input_dim(self) -> int:
        return self.shared_dim + N_AE + N_AS + N_DS + 1 + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["first_layer"] = [list(g) for g in self.first_layer]
        return d


def mp_update(h_prev: Tensor, y_ae: Tensor, y_as: Tensor, y_ds: Tensor, a_ds: Tensor,
              a_dd: Tensor, re: Dense) -> Tensor:
    """Re-encode each token from ``[h : y_ae : y_as : y_ds : a_ds : a_dd]`` with a ReLU layer.

    ``y_ds`` is per-sentence and is repeated for every token.
    """
    n = h_prev.shape[-2]
    if y_ae.shape[-1] != N_AE or y_as.shape[-1] != N_AS or y_ds.shape[-1] != N_DS:
        raise ShapeError("message components have the wrong class counts")
    if a_ds.shape != h_prev.shape[:-1] or a_dd.shape != h_prev.shape[:-1]:
        raise ShapeError("attention weights must have one entry per token")
    y_ds_tok = ad.broadcast_to(ad.reshape(y_ds, y_ds.shape[:-1] + (1, N_DS)),
                               h_prev.shape[:-2] + (n, N_DS))
    msg = ad.concat([h_prev, y_ae, y_as, y_ds_tok,
                     ad.reshape(a_ds, a_ds.shape + (1,)),
                     ad.reshape(a_dd, a_dd.shape + (1,))], axis=-1)
    return ad.relu(re(msg))


@dataclass
class ForwardState:
    T: int
    embedded: Tensor          # embedding output after dropout
    h_s: list[Tensor]         # shared sequence per iteration, h_s[0] from the CNN encoder
    heads: list[HeadOutputs]  # one per iteration 0..T
    attention: list[Tensor]   # AS self-attention matrix per iteration
    mask: np.ndarray
    h_s_dd: Tensor | None = None  # shared encoding of domain-masked embeddings

    @property
    def final(self) -> HeadOutputs:
        return self.heads[-1]


def _ids_mask(ids, mask) -> tuple[np.ndarray, np.ndarray]:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 0 or ids.shape[-1] == 0:
        raise ShapeError("cannot run the network on an empty token sequence")
    mask = np.ones(ids.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != ids.shape:
        raise ShapeError(f"mask shape {mask.shape} vs ids {ids.shape}")
    return ids, mask


class IMN:
    """Parameters plus forward computation.

    ``params`` maps ``"<group>.<name>"`` to tensors, with groups
    s / ae / as / ds / dd / re.
    """

    def __init__(self, config: ModelConfig, embeddings: EmbeddingTable, rng: np.random.Generator):
        if embeddings.d_general != config.d_general or embeddings.d_domain != config.d_domain:
            raise ShapeError("embedding table dims do not match the model config")
        self.config = config
        self.embeddings = embeddings
        c = config
        d_emb = c.d_general + c.d_domain
        hid = c.hidden
        deep = [(c.kernel, hid)]

        self.shared: list[ConvLayer] = [make_conv_layer(rng, d_emb, c.first_layer)]
        d = self.shared[0].out_dim
        for _ in range(c.m_s - 1):
            self.shared.append(make_conv_layer(rng, d, deep))
            d = hid
        ds = d

        def task_stack(m):
            layers, dim = [], ds
            for _ in range(m):
                layers.append(make_conv_layer(rng, dim, deep))
                dim = hid
            return layers, dim

        self.ae_cnn, d_ae = task_stack(c.m_ae)
        self.as_cnn, d_as = task_stack(c.m_as)
        self.ds_cnn, d_ds = task_stack(c.m_ds)
        self.dd_cnn, d_dd = task_stack(c.m_dd)

        def dense(d_in, d_out):
            return Dense(glorot(rng, (d_in, d_out), d_in, d_out), ad.parameter(np.zeros(d_out)))

        def attention_vector(dim):
            return ad.parameter(glorot(rng, (dim, 1), dim, 1).data.reshape(-1))

        self.ae_dec = dense(d_emb + ds + d_ae, N_AE)
        self.w_as = glorot(rng, (d_as, d_as), d_as, d_as)
        self.as_dec = dense(ds + d_as, N_AS)
        self.ds_head = DocHead(attention_vector(d_ds), dense(d_ds, N_DS))
        self.dd_head = DocHead(attention_vector(d_dd), dense(d_dd, c.n_domains))
        self.re = dense(c.re_input_dim, ds)

        self.params: dict[str, Tensor] = {
            "s.emb_general": embeddings.general,
            "s.emb_domain": embeddings.domain,
        }
        self._add_convs("s.cnn", self.shared)
        self._add_convs("ae.cnn", self.ae_cnn)
        self._add_dense("ae.dec", self.ae_dec)
        self._add_convs("as.cnn", self.as_cnn)
        self.params["as.w_att"] = self.w_as
        self._add_dense("as.dec", self.as_dec)
        self._add_convs("ds.cnn", self.ds_cnn)
        self.params["ds.w_att"] = self.ds_head.attention
        self._add_dense("ds.dec", self.ds_head.dense)
        self._add_convs("dd.cnn", self.dd_cnn)
        self.params["dd.w_att"] = self.dd_head.attention
        self._add_dense("dd.dec", self.dd_head.dense)
        self._add_dense("re", self.re)

    def _add_convs(self, prefix: str, layers: list[ConvLayer]) -> None:
        for i, layer in enumerate(layers):
            for j, (w, b) in enumerate(zip(layer.weights, layer.biases)):
                self.params[f"{prefix}{i}.{j}.w"] = w
                self.params[f"{prefix}{i}.{j}.b"] = b

    def _add_dense(self, prefix: str, dense: Dense) -> None:
        self.params[f"{prefix}.w"] = dense.weight
        self.params[f"{prefix}.b"] = dense.bias

    # -- parameter bookkeeping --------------------------------------------
    @staticmethod
    def group_of(name: str) -> str:
        return name.split(".", 1)[0]

    def parameter_groups(self) -> dict[str, dict[str, Tensor]]:
        groups: dict[str, dict[str, Tensor]] = {g: {} for g in GROUPS}
        for name, p in self.params.items():
            groups[self.group_of(name)][name] = p
        return groups

    def trainable(self, groups: Sequence[str]) -> dict[str, Tensor]:
        return {k: p for k, p in self.params.items()
                if self.group_of(k) in groups and p.requires_grad}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, p in self.params.items():
            arr = np.asarray(state[k], dtype=ad.DTYPE)
            if arr.shape != p.shape:
                raise ShapeError(f"{k}: checkpoint shape {arr.shape} vs model {p.shape}")
            p.data[...] = arr

    # -- forward ----------------------------------------------------------
    def _encode_shared(self, ids, mask, mask_domain, training, rng):
        c = self.config
        emb = self.embeddings.embed(ids, mask_domain=mask_domain)
        emb = ad.dropout(emb, c.dropout, rng, training)
        emb = emb * np.asarray(mask, dtype=ad.DTYPE)[..., None]
        h = cnn_stack(emb, self.shared, mask, dropout=c.dropout, training=training, rng=rng)
        return emb, h

    def _stack(self, h, layers, mask, training, rng):
        if not layers:
            return h
        return cnn_stack(h, layers, mask, dropout=self.config.dropout, training=training, rng=rng)

    def forward(self, ids, mask=None, T: int = 2, training: bool = False,
                rng: np.random.Generator | None = None, opinion_override=None) -> ForwardState:
        """Run the shared encoder once and ``T`` rounds of message passing.

        ``opinion_override`` replaces the predicted opinion probabilities fed
        to the AS attention (scheduled sampling with gold indicators).
        """
        if T < 0:
            raise ValueError("T must be >= 0")
        ids, mask = _ids_mask(ids, mask)
        c = self.config

        emb, h0 = self._encode_shared(ids, mask, False, training, rng)
        dd_const = None
        h_dd = None
        if c.dd_masked_path:
            _, h_dd = self._encode_shared(ids, mask, True, training, rng)
            dd_const = self.dd_head(self._stack(h_dd, self.dd_cnn, mask, training, rng), mask)

        h = h0
        hs, heads, attns = [h0], [], []
        for t in range(T + 1):
            h_ae = self._stack(h, self.ae_cnn, mask, training, rng)
            y_ae = ae_decode(self.ae_dec, emb, h0, h_ae)
            if opinion_override is not None:
                p_op = ad.as_tensor(np.asarray(opinion_override, dtype=ad.DTYPE))
            else:
                p_op = opinion_prob(y_ae)
            h_as = self._stack(h, self.as_cnn, mask, training, rng)
            attn, h_prime = as_self_attention(h_as, p_op, self.w_as, mask)
            y_as = as_decode(self.as_dec, h0, h_prime)
            y_ds, a_ds = self.ds_head(self._stack(h, self.ds_cnn, mask, training, rng), mask)
            if dd_const is not None:
                y_dd, a_dd = dd_const
            else:
                y_dd, a_dd = self.dd_head(self._stack(h, self.dd_cnn, mask, training, rng), mask)
            heads.append(HeadOutputs(y_ae, y_as, y_ds, y_dd, a_ds, a_dd, p_op))
            attns.append(attn)
            if t < T:
                h = mp_update(h, y_ae, y_as, y_ds, a_ds, a_dd, self.re)
                h = h * mask[..., None].astype(ad.DTYPE)
                hs.append(h)
        return ForwardState(T, emb, hs, heads, attns, mask, h_dd)

    def forward_ds(self, ids, mask=None, training: bool = False,
                   rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
        """Document sentiment ``(y_ds, a_ds)`` from the initial shared encoding."""
        ids, mask = _ids_mask(ids, mask)
        _, h = self._encode_shared(ids, mask, False, training, rng)
        return self.ds_head(self._stack(h, self.ds_cnn, mask, training, rng), mask)

    def forward_dd(self, ids, mask=None, training: bool = False,
                   rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
        """Document domain ``(y_dd, a_dd)``; reads domain-masked embeddings when so configured."""
        ids, mask = _ids_mask(ids, mask)
        _, h = self._encode_shared(ids, mask, self.config.dd_masked_path, training, rng)
        return self.dd_head(self._stack(h, self.dd_cnn, mask, training, rng), mask)

    # -- inference --------------------------------------------------------
    def predict_tokens(self, sentences: Sequence[Sequence[str]], vocab: Vocabulary, T: int,
                       batch_size: int = 64) -> list[Prediction]:
        out: list[Prediction] = []
        for k in range(0, len(sentences), batch_size):
            chunk = sentences[k:k + batch_size]
            ids, mask = pad_ids([vocab.encode(s) for s in chunk])
            with ad.no_grad():
                final = self.forward(ids, mask, T=T, training=False).final
            for b, s in enumerate(chunk):
                n = len(s)
                out.append(Prediction.from_distributions(final.y_ae.data[b, :n], final.y_as.data[b, :n]))
        return out

    def predict(self, instances: Sequence[AspectInstance], vocab: Vocabulary, T: int) -> list[Prediction]:
        return self.predict_tokens([inst.tokens for inst in instances], vocab, T)


def build_model(config: ModelConfig, vocab: Vocabulary, rng: np.random.Generator,
                general: np.ndarray | None = None, domain: np.ndarray | None = None) -> IMN:
    if general is None:
        general = random_embeddings(len(vocab), config.d_general, rng)
    if domain is None:
        domain = random_embeddings(len(vocab), config.d_domain, rng)
    table = EmbeddingTable(general, domain, trainable=config.trainable_embeddings)
    return IMN(config, table, rng)
