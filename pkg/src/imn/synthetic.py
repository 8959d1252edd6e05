"""Synthetic review corpora for tests, smoke runs and desk-scale experiments.

Run ``python -m imn.synthetic OUTDIR`` to write the fixture files
(aspect train file, DS / DD document files, two embedding files and a
run config) into ``OUTDIR``.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .data import (DEFAULT_DOMAINS, DS_LABELS, AspectInstance, DocumentInstance,
                   write_aspect_file, write_doc_file)

RESTAURANT = ["food", "service", "fish", "pizza", "staff", "wine", "dessert", "soup", "waiter", "pasta"]
ELECTRONICS = ["battery", "screen", "keyboard", "speaker", "camera", "charger", "laptop", "touchpad"]
MULTI_RESTAURANT = [["variety", "of", "fish"], ["wine", "list"], ["dessert", "menu"]]
MULTI_ELECTRONICS = [["battery", "life"], ["screen", "resolution"]]
POSITIVE = ["great", "fresh", "friendly", "tasty", "excellent", "delicious", "amazing", "good"]
NEGATIVE = ["dreadful", "slow", "rude", "bland", "awful", "terrible", "ordinary", "bad"]
NEUTRAL = ["average", "standard", "okay"]
FILLER = ["we", "went", "there", "on", "a", "friday", "with", "my", "friends", "and",
          "then", "later", "that", "night", "after", "work", "it", "honestly", "i", "think"]

FISH_EXAMPLE = AspectInstance(
    "The fish is fresh but the variety of fish is nothing out of ordinary .".split(),
    ["O", "BA", "O", "BP", "O", "O", "BA", "IA", "IA", "O", "O", "O", "O", "BP", "O"],
    ["none", "pos", "none", "none", "none", "none", "neg", "neg", "neg",
     "none", "none", "none", "none", "none", "none"],
)

_POLARITY = {"pos": POSITIVE, "neg": NEGATIVE, "neu": NEUTRAL}


class _Builder:
    def __init__(self):
        self.tokens: list[str] = []
        self.ae: list[str] = []
        self.sent: list[str] = []

    def plain(self, *words: str) -> "_Builder":
        for w in words:
            self.tokens.append(w)
            self.ae.append("O")
            self.sent.append("none")
        return self

    def aspect(self, words, polarity: str) -> "_Builder":
        words = [words] if isinstance(words, str) else words
        for k, w in enumerate(words):
            self.tokens.append(w)
            self.ae.append("BA" if k == 0 else "IA")
            self.sent.append(polarity)
        return self

    def opinion(self, words) -> "_Builder":
        words = [words] if isinstance(words, str) else words
        for k, w in enumerate(words):
            self.tokens.append(w)
            self.ae.append("BP" if k == 0 else "IP")
            self.sent.append("none")
        return self

    def build(self) -> AspectInstance:
        return AspectInstance(self.tokens, self.ae, self.sent)


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def random_aspect_sentence(rng: np.random.Generator, domain: str = "restaurant",
                           lexicon: dict | None = None) -> AspectInstance:
    """One sentence from a handful of templates; every aspect is tied to a nearby opinion."""
    lex = lexicon or full_lexicon(domain)
    nouns, multi = lex["nouns"], lex["multi"]

    def aspect_words():
        return _pick(rng, multi) if multi and rng.random() < 0.2 else _pick(rng, nouns)

    def polarity():
        return _pick(rng, ["pos", "pos", "neg", "neg", "neu"])

    def opinion(pol):
        return _pick(rng, lex[pol])

    b = _Builder()
    template = int(rng.integers(5))
    p1, p2 = polarity(), polarity()
    if template == 0:
        b.plain("the").aspect(aspect_words(), p1).plain("is").opinion(opinion(p1)).plain(".")
    elif template == 1:
        b.opinion(opinion(p1)).aspect(aspect_words(), p1).plain(".")
    elif template == 2:
        b.plain("the").aspect(aspect_words(), p1).plain("is").opinion(opinion(p1))
        b.plain("but", "the").aspect(aspect_words(), p2).plain("is").opinion(opinion(p2))
        b.plain(".")
    elif template == 3:
        b.plain("the").aspect(aspect_words(), p1).plain("was")
        b.opinion(["very", opinion(p1)]).plain(".")
    else:
        b.plain("we", "had").aspect(aspect_words(), p1).plain("which", "was")
        b.opinion(opinion(p1)).plain(".")
    return b.build()


def full_lexicon(domain: str = "restaurant") -> dict:
    if domain == "restaurant":
        nouns, multi = RESTAURANT, MULTI_RESTAURANT
    else:
        nouns, multi = ELECTRONICS, MULTI_ELECTRONICS
    return {"nouns": nouns, "multi": multi, **_POLARITY}


def _templated(template: int, aspect, pol: str, op: str, aspect2=None, pol2=None, op2=None):
    b = _Builder()
    if template == 0:
        b.plain("the").aspect(aspect, pol).plain("is").opinion(op).plain(".")
    elif template == 1:
        b.opinion(op).aspect(aspect, pol).plain(".")
    elif template == 2:
        b.plain("the").aspect(aspect, pol).plain("was").opinion(["very", op]).plain(".")
    elif template == 3:
        b.plain("we", "had").aspect(aspect, pol).plain("which", "was").opinion(op).plain(".")
    else:
        b.plain("the").aspect(aspect, pol).plain("is").opinion(op)
        b.plain("but", "the").aspect(aspect2, pol2).plain("is").opinion(op2).plain(".")
    return b.build()


def memorization_corpus(seed: int = 7, n_sentences: int = 20, n_docs: int = 200):
    """Aspect sentences for overfit runs, plus DS / DD corpora.

    Four distinct sentences (the annotated fish example and three templated
    ones covering every polarity) each repeat ``n_sentences // 4`` times.
    With five copies, any dev split of at most four sentences leaves a copy
    of every sentence in the training portion.
    """
    rng = np.random.default_rng(seed)
    distinct = [
        FISH_EXAMPLE,
        _templated(0, "service", "neg", "slow"),
        _templated(4, ["wine", "list"], "neu", "average", "staff", "pos", "great"),
        _templated(3, "food", "pos", "tasty"),
    ]
    if n_sentences < len(distinct):
        raise ValueError(f"n_sentences must be >= {len(distinct)}")
    out = [distinct[i % len(distinct)] for i in range(n_sentences)]
    return out, sentiment_documents(rng, n_docs), domain_documents(rng, n_docs)


def _doc_clause(rng, nouns, pol: str) -> list[str]:
    if pol == "neu":
        return ["we", "ordered", "the", _pick(rng, nouns), "there"]
    return ["the", _pick(rng, nouns), "is", _pick(rng, _POLARITY[pol])]


def sentiment_documents(rng: np.random.Generator, n: int) -> list[DocumentInstance]:
    """Balanced pos / neg / neu documents; neutral ones carry no opinion word."""
    docs = []
    for i in range(n):
        label = i % 3
        pol = DS_LABELS[label]
        nouns = RESTAURANT if rng.random() < 0.5 else ELECTRONICS
        toks: list[str] = []
        for _ in range(int(rng.integers(1, 3))):
            toks += _doc_clause(rng, nouns, pol) + ["."]
        docs.append(DocumentInstance(toks, "DS", label))
    order = rng.permutation(n)
    return [docs[i] for i in order]


def domain_documents(rng: np.random.Generator, n: int) -> list[DocumentInstance]:
    docs = []
    for i in range(n):
        label = i % 2
        nouns = RESTAURANT if label == 0 else ELECTRONICS
        toks: list[str] = []
        for _ in range(int(rng.integers(1, 3))):
            toks += _doc_clause(rng, nouns, _pick(rng, ["pos", "neg", "neu"])) + ["."]
        docs.append(DocumentInstance(toks, "DD", label))
    order = rng.permutation(n)
    return [docs[i] for i in order]


# ---------------------------------------------------------------------------
# long-range family: whether a noun is an aspect depends on an opinion that
# sits outside the CNN receptive field


def long_range_sentence(rng: np.random.Generator, gap: int = 10) -> AspectInstance:
    """``[opinion] filler*gap [noun] ...`` or the same without any opinion.

    With an opinion present the noun is an aspect carrying the opinion's
    polarity; without one it is an ordinary word.
    """
    nouns = RESTAURANT + ELECTRONICS
    has_opinion = rng.random() < 0.5
    pol = _pick(rng, ["pos", "neg"])
    b = _Builder()
    noun = _pick(rng, nouns)
    filler = [_pick(rng, FILLER) for _ in range(gap)]
    if has_opinion:
        b.opinion(_pick(rng, _POLARITY[pol])).plain(*filler).aspect(noun, pol).plain(".")
    else:
        b.plain(_pick(rng, FILLER)).plain(*filler).plain(noun, ".")
    return b.build()


def long_range_corpus(seed: int, n_train: int = 60, n_test: int = 40, n_docs: int = 120, gap: int = 10):
    rng = np.random.default_rng(seed)
    train = [long_range_sentence(rng, gap) for _ in range(n_train)]
    test = [long_range_sentence(rng, gap) for _ in range(n_test)]
    ds, dd = [], []
    for i in range(n_docs):
        label = i % 3
        pol = DS_LABELS[label]
        toks = [_pick(rng, FILLER) for _ in range(int(rng.integers(3, 8)))]
        pos = int(rng.integers(len(toks) + 1))
        if pol != "neu":
            toks.insert(pos, _pick(rng, _POLARITY[pol]))
        toks.append(_pick(rng, RESTAURANT + ELECTRONICS))
        ds.append(DocumentInstance(toks, "DS", label))
    for i in range(n_docs):
        label = i % 2
        nouns = RESTAURANT if label == 0 else ELECTRONICS
        toks = [_pick(rng, FILLER) for _ in range(int(rng.integers(2, 6)))] + [_pick(rng, nouns)]
        dd.append(DocumentInstance(toks, "DD", label))
    return train, test, ds, dd


# ---------------------------------------------------------------------------
# embeddings and fixture files


def all_words() -> list[str]:
    words = set(RESTAURANT + ELECTRONICS + POSITIVE + NEGATIVE + NEUTRAL + FILLER)
    for m in MULTI_RESTAURANT + MULTI_ELECTRONICS:
        words.update(m)
    words.update(t.lower() for t in FISH_EXAMPLE.tokens)
    words.update(["the", "is", "was", "but", "which", "had", "very", "ordered", ".", ","])
    return sorted(words)


def word_classes() -> dict[str, str]:
    """Coarse semantic class per fixture word; words outside any class map to themselves."""
    classes = {}
    for w in RESTAURANT:
        classes[w] = "restaurant"
    for w in ELECTRONICS:
        classes[w] = "electronics"
    for name, words in _POLARITY.items():
        for w in words:
            classes[w] = name
    return classes


def write_embedding_file(path, words, dim: int, rng: np.random.Generator, scale: float = 0.3) -> None:
    """Random vectors clustered by :func:`word_classes`, mimicking pretrained embeddings."""
    classes = word_classes()
    centroids: dict[str, np.ndarray] = {}
    with open(path, "w", encoding="utf-8") as fh:
        for w in words:
            cls = classes.get(w, w)
            if cls not in centroids:
                centroids[cls] = rng.normal(0.0, scale, size=dim)
            vec = centroids[cls] + rng.normal(0.0, 0.5 * scale, size=dim)
            fh.write(w + " " + " ".join(f"{v:.5f}" for v in vec) + "\n")


FIXTURE_CONFIG = """\
# overfit run on the synthetic fixture; all other settings are defaults
aspect_train = aspect_train.tsv
aspect_test = aspect_train.tsv
ds_corpus = ds.tsv
dd_corpus = dd.tsv
general_embeddings = general.vec
domain_embeddings = domain.vec
checkpoint_dir = checkpoints
domains = restaurant,electronics
max_epochs = 300
d_general = {d_general}
d_domain = {d_domain}
"""


def write_fixture_dir(outdir, seed: int = 7, d_general: int = 300, d_domain: int = 100) -> Path:
    """Write the memorization fixture: corpora, embeddings, raw text and ``fixture.cfg``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    aspects, ds, dd = memorization_corpus(seed)
    write_aspect_file(out / "aspect_train.tsv", aspects)
    write_doc_file(out / "ds.tsv", ds, DS_LABELS)
    write_doc_file(out / "dd.tsv", dd, DEFAULT_DOMAINS)
    rng = np.random.default_rng(seed + 1)
    write_embedding_file(out / "general.vec", all_words(), d_general, rng)
    write_embedding_file(out / "domain.vec", all_words(), d_domain, rng)
    (out / "example.txt").write_text(" ".join(FISH_EXAMPLE.tokens) + "\n", encoding="utf-8")
    (out / "fixture.cfg").write_text(FIXTURE_CONFIG.format(d_general=d_general, d_domain=d_domain),
                                     encoding="utf-8")
    return out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    write_fixture_dir(args.outdir, args.seed)


if __name__ == "__main__":
    main()
