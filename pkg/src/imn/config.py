"""Flat ``key = value`` run configuration shared by the CLI commands.

Lines are ``key = value``; ``#`` starts a comment. Relative paths are
resolved against the directory holding the config file. Unknown keys are
errors so that typos cannot silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid or incomplete run configuration (CLI exit code 2)."""


PATH_KEYS = ("aspect_train", "aspect_test", "ds_corpus", "dd_corpus",
             "general_embeddings", "domain_embeddings", "checkpoint_dir")
REQUIRED_PATHS = ("aspect_train", "ds_corpus", "dd_corpus")
_TRAIN_KEYS = {f.name: f.type for f in fields(TrainConfig)}
_MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"n_domains"}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_first_layer(text: str) -> tuple[tuple[int, int], ...]:
    """``"3:128,5:128"`` -> ((3, 128), (5, 128))."""
    groups = []
    for part in text.split(","):
        k, _, f = part.strip().partition(":")
        groups.append((int(k), int(f)))
    return tuple(groups)


@dataclass
class RunConfig:
    aspect_train: Path | None = None
    aspect_test: Path | None = None
    ds_corpus: Path | None = None
    dd_corpus: Path | None = None
    general_embeddings: Path | None = None
    domain_embeddings: Path | None = None
    checkpoint_dir: Path = Path("checkpoints")
    min_count: int = 1
    domains: tuple[str, ...] = ("restaurant", "electronics")
    train: TrainConfig = field(default_factory=TrainConfig)
    model: dict = field(default_factory=dict)

    def model_config(self) -> ModelConfig:
        return ModelConfig(n_domains=len(self.domains), **self.model)

    def validate(self, check_paths: bool = True) -> "RunConfig":
        for key in REQUIRED_PATHS:
            if getattr(self, key) is None:
                raise ConfigError(f"missing required key '{key}'")
        if check_paths:
            for key in PATH_KEYS:
                p = getattr(self, key)
                if key != "checkpoint_dir" and p is not None and not Path(p).is_file():
                    raise ConfigError(f"{key}: file not found: {p}")
        if self.min_count < 1:
            raise ConfigError("min_count must be >= 1")
        if len(self.domains) < 2 or len(set(self.domains)) != len(self.domains):
            raise ConfigError("domains must list at least two distinct names")
        try:
            self.model_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid model settings: {exc}") from None
        return self

    def to_dict(self) -> dict:
        out = {k: (str(getattr(self, k)) if getattr(self, k) is not None else None) for k in PATH_KEYS}
        out.update(min_count=self.min_count, domains=list(self.domains),
                   train=self.train.to_dict(), model=dict(self.model))
        if "first_layer" in out["model"]:
            out["model"]["first_layer"] = [list(g) for g in out["model"]["first_layer"]]
        return out


def parse_config(text: str, base_dir: Path | str = ".", overrides: dict | None = None) -> RunConfig:
    """Parse config text; ``overrides`` (raw strings or values) win over the file."""
    raw: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        raw[key.strip()] = value.strip()
    raw.update(overrides or {})

    base = Path(base_dir)
    run, train, model = {}, {}, {}
    for key, value in raw.items():
        try:
            if key in PATH_KEYS:
                p = Path(str(value)).expanduser()
                run[key] = p if p.is_absolute() else base / p
            elif key == "min_count":
                run[key] = int(value)
            elif key == "domains":
                run[key] = tuple(d.strip() for d in str(value).split(",") if d.strip())
            elif key in _TRAIN_KEYS:
                kind = _TRAIN_KEYS[key]
                conv = {"int": int, "float": float, "bool": _parse_bool}[kind if isinstance(kind, str) else kind.__name__]
                train[key] = value if not isinstance(value, str) else conv(value)
            elif key in _MODEL_KEYS:
                if key == "first_layer":
                    model[key] = _parse_first_layer(str(value))
                elif key in ("dd_masked_path", "trainable_embeddings"):
                    model[key] = _parse_bool(str(value))
                elif key == "dropout":
                    model[key] = float(value)
                else:
                    model[key] = int(value)
            else:
                raise ConfigError(f"unknown config key '{key}'")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{key}: {exc}") from None
    run.setdefault("checkpoint_dir", base / "checkpoints")
    try:
        train_cfg = TrainConfig(**train)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(**run, train=train_cfg, model=model)


def load_config(path, overrides: dict | None = None, check_paths: bool = True) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config(text, path.parent, overrides).validate(check_paths)


def format_config(cfg: RunConfig) -> str:
    """Serialize back to the flat format (paths absolute)."""
    lines = []
    for key in PATH_KEYS:
        value = getattr(cfg, key)
        if value is not None:
            lines.append(f"{key} = {Path(value).resolve()}")
    lines.append(f"min_count = {cfg.min_count}")
    lines.append(f"domains = {','.join(cfg.domains)}")
    for key, value in cfg.train.to_dict().items():
        lines.append(f"{key} = {value}")
    for key, value in cfg.model.items():
        if key == "first_layer":
            value = ",".join(f"{k}:{f}" for k, f in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
