"""Command line entry point: ``imn train | eval | tag``.

Exit codes: 0 success, 1 runtime failure, 2 configuration or input
validation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, format_config, load_config
from .data import DS_LABELS, DataFormatError, parse_aspect_file, parse_doc_file
from .metrics import compute_metrics
from .training import train
from .vocab import UNK, build_vocab, load_embeddings, random_embeddings, tokenize

log = logging.getLogger("imn")

CHECKPOINT_NAME = "model.npz"
LOG_NAME = "train_log.tsv"
REPORT_NAME = "dev_report.json"
LOG_COLUMNS = ("epoch", "aspect_loss", "doc_loss", "epsilon", "f1_a", "f1_o", "acc_s", "f1_s", "f1_i")


class UsageError(Exception):
    """Raised for exit code 2 conditions discovered after config loading."""


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _warn_oov(sentences, vocab, what: str) -> None:
    total = sum(len(s) for s in sentences)
    unk = sum(1 for s in sentences for t in vocab.encode(s) if t == UNK)
    if unk:
        log.warning("%s: %d of %d tokens are out of vocabulary and map to UNK", what, unk, total)


def cmd_train(args) -> int:
    overrides = {}
    for kv in args.set or []:
        key, sep, value = kv.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {kv!r}")
        overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    cfg = load_config(args.config, overrides={k.strip(): v.strip() for k, v in overrides.items()})
    try:
        aspect = parse_aspect_file(cfg.aspect_train)
        ds = parse_doc_file(cfg.ds_corpus, "DS", DS_LABELS)
        dd = parse_doc_file(cfg.dd_corpus, "DD", cfg.domains)
    except DataFormatError as exc:
        raise UsageError(str(exc)) from None
    if not aspect:
        raise UsageError(f"{cfg.aspect_train}: no sentences")

    mcfg = cfg.model_config()
    vocab = build_vocab([[t for i in aspect for t in i.tokens], [t for d in ds for t in d.tokens],
                         [t for d in dd for t in d.tokens]], min_count=cfg.min_count)
    emb_rng = np.random.default_rng(cfg.train.seed)
    general = domain = None
    try:
        if cfg.general_embeddings is not None:
            general = load_embeddings(cfg.general_embeddings, vocab, mcfg.d_general, emb_rng)
        if cfg.domain_embeddings is not None:
            domain = load_embeddings(cfg.domain_embeddings, vocab, mcfg.d_domain, emb_rng)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if general is None:
        general = random_embeddings(len(vocab), mcfg.d_general, emb_rng)
    if domain is None:
        domain = random_embeddings(len(vocab), mcfg.d_domain, emb_rng)

    result = train(aspect, ds, dd, cfg.train, mcfg, vocab=vocab, embeddings=(general, domain))

    out = Path(cfg.checkpoint_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / LOG_NAME, "w", encoding="utf-8") as fh:
        fh.write("\t".join(LOG_COLUMNS) + "\n")
        for entry in result.epoch_log:
            fh.write("\t".join(_fmt(entry[c]) for c in LOG_COLUMNS) + "\n")
    if result.dev_report is not None:
        (out / REPORT_NAME).write_text(result.dev_report.to_json() + "\n", encoding="utf-8")
    (out / "run.cfg").write_text(format_config(cfg), encoding="utf-8")
    save_checkpoint(out / CHECKPOINT_NAME, result.model, result.vocab,
                    train_config=cfg.train.to_dict(), run_config=cfg.to_dict(), domains=cfg.domains,
                    extra={"best_epoch": result.best_epoch, "best_dev_f1_i": result.best_f1_i})
    print(f"best epoch {result.best_epoch}  dev "
          + (result.dev_report.summary() if result.dev_report else "(no dev report)"))
    print(f"checkpoint written to {out / CHECKPOINT_NAME}")
    return 0


def _load(checkpoint):
    if not Path(checkpoint).is_file():
        raise ConfigError(f"checkpoint not found: {checkpoint}")
    try:
        return load_checkpoint(checkpoint)
    except CheckpointError as exc:
        raise UsageError(str(exc)) from None


def cmd_eval(args) -> int:
    model, vocab, meta = _load(args.checkpoint)
    if not Path(args.test).is_file():
        raise ConfigError(f"test file not found: {args.test}")
    try:
        data = parse_aspect_file(args.test)
    except DataFormatError as exc:
        raise UsageError(str(exc)) from None
    if not data:
        raise UsageError(f"{args.test}: no sentences to evaluate")
    _warn_oov([i.tokens for i in data], vocab, str(args.test))
    T = meta["train_config"].get("T", 2)
    report = compute_metrics(model.predict(data, vocab, T), data)
    print(report.summary())
    if args.output:
        Path(args.output).write_text(report.to_json() + "\n", encoding="utf-8")
    return 0


def format_tags(tokens, prediction) -> str:
    lines = ["# " + " ".join(tokens)]
    for s in prediction.aspects:
        lines.append(f"aspect\t{' '.join(tokens[s.start:s.end + 1])}\t{s.sentiment}")
    for s in prediction.opinions:
        lines.append(f"opinion\t{' '.join(tokens[s.start:s.end + 1])}")
    return "\n".join(lines) + "\n\n"


def cmd_tag(args) -> int:
    model, vocab, meta = _load(args.checkpoint)
    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        log.error("cannot read %s: %s", args.input, exc)
        return 1
    sentences = [line.split() for line in text.splitlines()]
    _warn_oov([[t.lower() if vocab.lowercase else t for t in s] for s in sentences], vocab, str(args.input))
    T = meta["train_config"].get("T", 2)
    nonempty = [s for s in sentences if s]
    preds = iter(model.predict_tokens([tokenize(" ".join(s), vocab.lowercase) for s in nonempty], vocab, T))
    out = sys.stdout
    for s in sentences:
        if not s:
            out.write("# \n\n")
            continue
        out.write(format_tags(s, next(preds)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="imn", description="Interactive multi-task aspect-based sentiment analysis.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a run config")
    t.add_argument("--config", required=True, help="flat key=value run config")
    t.add_argument("--seed", type=int, help="override the config seed")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on an aspect-level test file")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--output", help="write the full report as JSON")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("tag", help="extract aspect and opinion terms from raw text, one sentence per line")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--input", required=True)
    g.set_defaults(func=cmd_tag)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"imn: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level runtime failure
        print(f"imn: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
