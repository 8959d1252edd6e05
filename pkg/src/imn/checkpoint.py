"""Checkpoint container.

Layout (an uncompressed ``.npz`` archive):

* ``param/<group>.<name>`` -- one float64 array per model parameter;
* ``__meta__`` -- a 0-d unicode array holding JSON with keys
  ``format`` (``"imn-checkpoint"``), ``version`` (major.minor string),
  ``model_config``, ``train_config``, ``run_config``, ``vocab`` (corpus
  tokens in id order from id 2), ``lowercase``, ``domains`` and any extras.

Readers accept any checkpoint with the same major version.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .model import IMN, ModelConfig
from .vocab import EmbeddingTable, Vocabulary

FORMAT = "imn-checkpoint"
VERSION = "1.0"


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, model: IMN, vocab: Vocabulary, *, train_config: dict | None = None,
                    run_config: dict | None = None, domains=None, extra: dict | None = None) -> Path:
    """Write atomically: a failed save never leaves a partial file at ``path``."""
    path = Path(path)
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "model_config": model.config.to_dict(),
        "train_config": train_config or {},
        "run_config": run_config or {},
        "vocab": vocab.corpus_tokens(),
        "lowercase": vocab.lowercase,
        "domains": list(domains) if domains is not None else None,
        **(extra or {}),
    }
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".npz")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_checkpoint(path) -> tuple[IMN, Vocabulary, dict]:
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    with archive:
        if "__meta__" not in archive.files:
            raise CheckpointError(f"{path} is not an IMN checkpoint (no metadata)")
        meta = json.loads(str(archive["__meta__"]))
        if meta.get("format") != FORMAT:
            raise CheckpointError(f"{path}: unexpected format {meta.get('format')!r}")
        if str(meta.get("version", "")).split(".")[0] != VERSION.split(".")[0]:
            raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        state = {k[len("param/"):]: archive[k] for k in archive.files if k.startswith("param/")}

    vocab = Vocabulary(meta["vocab"], lowercase=meta.get("lowercase", True))
    config = ModelConfig(**meta["model_config"])
    table = EmbeddingTable(state["s.emb_general"], state["s.emb_domain"],
                           trainable=config.trainable_embeddings)
    model = IMN(config, table, np.random.default_rng(0))
    model.load_state_dict(state)
    return model, vocab, meta
