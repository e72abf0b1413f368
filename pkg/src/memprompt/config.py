"""Experiment configuration: dataclasses plus a flat key = value file format.

Config files look like:

    # desk-scale benchmark
    run.n_tasks = 5
    run.permutation_seeds = 1, 2, 3, 4, 5
    encoder.embedding_dim = 32
    train.learning_rate = 3e-4
    gen.n_types = 10

Unknown keys are errors; every key has a dataclass-backed default so an empty
file is a valid config.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

from .data import GenParams
from .training import PRESETS, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class EncoderParams:
    """Encoder sizing; vocab size comes from the data at run time."""
    embedding_dim: int = 32
    num_layers: int = 2
    num_heads: int = 4
    feedforward_dim: int = 64
    max_sequence_length: int = 64
    seed: int = 0


@dataclass
class RunParams:
    data_dir: str = "data"
    n_tasks: int = 5
    permutation_seeds: tuple = (1, 2, 3, 4, 5)
    presets: tuple = ("emp",)
    sweep_buffer_sizes: tuple = (0, 10, 20)
    use_lexicon_embeddings: bool = True   # seed encoder rows from the lexicon


@dataclass
class ExperimentConfig:
    run: RunParams = field(default_factory=RunParams)
    gen: GenParams = field(default_factory=GenParams)
    encoder: EncoderParams = field(default_factory=EncoderParams)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self):
        if self.encoder.embedding_dim != self.gen.embedding_dim:
            raise ConfigError(
                f"encoder.embedding_dim {self.encoder.embedding_dim} != "
                f"gen.embedding_dim {self.gen.embedding_dim}; the lexicon "
                "feeds the encoder so the two must agree")
        for preset in self.run.presets:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}")
        span = self.gen.max_len + 1  # sentence + prompts must fit
        cap = self.encoder.max_sequence_length
        if span + 1 + self.gen.n_types > cap:
            raise ConfigError(
                f"max_sequence_length {cap} cannot fit {self.gen.max_len} "
                f"tokens plus {1 + self.gen.n_types} prompts")
        return self


def _parse_scalar(text: str, kind):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def _coerce(text: str, f: dataclasses.Field):
    kind = f.type if isinstance(f.type, type) else None
    name = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
    if kind is None:
        if name in ("int", "float", "bool", "str"):
            kind = {"int": int, "float": float, "bool": bool, "str": str}[name]
        elif name == "tuple" or name.startswith("tuple"):
            kind = tuple
        elif name.startswith("float | None") or name.endswith("| None"):
            if text.strip().lower() in ("none", ""):
                return None
            return float(text)
        else:
            kind = str
    if kind is tuple:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        sample = f.default if f.default is not dataclasses.MISSING else None
        if sample is None and f.default_factory is not dataclasses.MISSING:
            sample = f.default_factory()
        elem = type(sample[0]) if sample else str
        return tuple(_parse_scalar(p, elem) for p in parts)
    return _parse_scalar(text, kind)


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    sections = {"run": cfg.run, "gen": cfg.gen, "encoder": cfg.encoder,
                "train": cfg.train}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} needs a section prefix")
        section, attr = key.split(".", 1)
        target = sections.get(section)
        if target is None:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        fmap = {f.name: f for f in fields(target)}
        if attr not in fmap:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            setattr(target, attr, _coerce(value, fmap[attr]))
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return cfg


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, base)


def render_config(cfg: ExperimentConfig) -> str:
    """Flat text form of a config; parsing it back gives the same values."""
    lines = []
    for section, obj in (("run", cfg.run), ("gen", cfg.gen),
                         ("encoder", cfg.encoder), ("train", cfg.train)):
        for f in fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, tuple):
                text = ", ".join(str(x) for x in v)
            elif v is None:
                text = "none"
            else:
                text = repr(v) if isinstance(v, float) else str(v)
            lines.append(f"{section}.{f.name} = {text}")
        lines.append("")
    return "\n".join(lines)
