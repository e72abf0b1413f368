"""Frozen contextual encoder.

A small bidirectional transformer with all weights fixed at initialisation.
It plays the role of a frozen pretrained encoder: token ids plus any number of
appended continuous prompt vectors go in, contextual representations come out,
and gradients flow only to the prompt vectors, never to encoder weights.

Weight scheme: every embedding row and projection matrix is drawn i.i.d. from
N(0, 0.02^2) by a generator seeded from the config; layer-norm scales start at
one and shifts at zero. Optionally, token embedding rows can be overridden
with vectors from an embedding lexicon so that token geometry is meaningful
for synthetic experiments.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

INIT_STD = 0.02


class LexiconParseError(ValueError):
    """Raised for malformed embedding lexicon lines; carries the line number."""


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    embedding_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    feedforward_dim: int = 128
    max_sequence_length: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        if self.embedding_dim % self.num_heads != 0:
            raise ValueError(
                f"embedding_dim {self.embedding_dim} not divisible by "
                f"num_heads {self.num_heads}"
            )
        if min(self.num_layers, self.feedforward_dim, self.max_sequence_length) < 1:
            raise ValueError("num_layers, feedforward_dim and "
                             "max_sequence_length must be positive")


class FrozenEncoder:
    """Deterministic post-norm transformer encoder with non-trainable weights."""

    def __init__(self, config: EncoderConfig,
                 token_embeddings: dict[int, np.ndarray] | None = None):
        self.config = config
        e, ff = config.embedding_dim, config.feedforward_dim
        rng = np.random.default_rng(config.seed)

        def w(name, *shape):
            return Tensor(rng.normal(0.0, INIT_STD, shape), name=f"encoder.{name}")

        def ones(name, n):
            return Tensor(np.ones(n), name=f"encoder.{name}")

        def zeros(name, n):
            return Tensor(np.zeros(n), name=f"encoder.{name}")

        self.tok_emb = w("tok_emb", config.vocab_size, e)
        self.pos_emb = w("pos_emb", config.max_sequence_length, e)
        self.emb_gamma = ones("emb_gamma", e)
        self.emb_beta = zeros("emb_beta", e)
        self.layers = []
        for i in range(config.num_layers):
            self.layers.append({
                "wq": w(f"l{i}.wq", e, e), "bq": zeros(f"l{i}.bq", e),
                "wk": w(f"l{i}.wk", e, e), "bk": zeros(f"l{i}.bk", e),
                "wv": w(f"l{i}.wv", e, e), "bv": zeros(f"l{i}.bv", e),
                "wo": w(f"l{i}.wo", e, e), "bo": zeros(f"l{i}.bo", e),
                "ln1_g": ones(f"l{i}.ln1_g", e), "ln1_b": zeros(f"l{i}.ln1_b", e),
                "w1": w(f"l{i}.w1", e, ff), "b1": zeros(f"l{i}.b1", ff),
                "w2": w(f"l{i}.w2", ff, e), "b2": zeros(f"l{i}.b2", e),
                "ln2_g": ones(f"l{i}.ln2_g", e), "ln2_b": zeros(f"l{i}.ln2_b", e),
            })

        if token_embeddings:
            for tid, vec in token_embeddings.items():
                vec = np.asarray(vec, dtype=np.float64)
                if vec.shape != (e,):
                    raise ValueError(
                        f"embedding for token {tid} has shape {vec.shape}, "
                        f"expected ({e},)"
                    )
                if not 0 <= tid < config.vocab_size:
                    raise ValueError(f"token id {tid} outside vocab")
                self.tok_emb.data[tid] = vec

    def parameters(self) -> list[Tensor]:
        out = [self.tok_emb, self.pos_emb, self.emb_gamma, self.emb_beta]
        for layer in self.layers:
            out.extend(layer.values())
        return out

    def checksum(self) -> str:
        """SHA-256 over all weight bytes in a fixed order."""
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(p.data.tobytes())
        return h.hexdigest()

    def encode(self, token_ids, prompt_vectors=()) -> tuple[Tensor, Tensor]:
        """Encode ``[tokens; prompts]`` with full bidirectional attention.

        Returns the (L, e) token representations and the (P, e) prompt
        representations. Prompts occupy positions L..L+P-1. Gradients reach
        the prompt vectors only; encoder weights stay out of the tape.
        """
        cfg = self.config
        ids = np.asarray(token_ids, dtype=np.intp)
        length = ids.shape[0]
        prompts = list(prompt_vectors)
        total = length + len(prompts)
        if total > cfg.max_sequence_length:
            raise ValueError(
                f"sequence of {length} tokens + {len(prompts)} prompts exceeds "
                f"max_sequence_length {cfg.max_sequence_length}"
            )
        for p in prompts:
            if p.shape != (cfg.embedding_dim,):
                raise ValueError(
                    f"prompt vector shape {p.shape} != ({cfg.embedding_dim},)"
                )

        tok = ad.gather_rows(self.tok_emb, ids)
        if prompts:
            x = ad.concat([tok, ad.stack(prompts)], axis=0)
        else:
            x = tok
        x = x + ad.narrow(self.pos_emb, 0, 0, total)
        x = ad.layer_norm(x, self.emb_gamma, self.emb_beta)
        for ly in self.layers:
            attn = ad.multi_head_attention(
                x, ly["wq"], ly["bq"], ly["wk"], ly["bk"],
                ly["wv"], ly["bv"], ly["wo"], ly["bo"], cfg.num_heads,
            )
            x = ad.layer_norm(x + attn, ly["ln1_g"], ly["ln1_b"])
            h = ad.gelu(ad.linear(x, ly["w1"], ly["b1"]))
            x = ad.layer_norm(x + ad.linear(h, ly["w2"], ly["b2"]),
                              ly["ln2_g"], ly["ln2_b"])
        return ad.narrow(x, 0, 0, length), ad.narrow(x, 0, length, len(prompts))


def load_embedding_lexicon(path, expected_dim: int | None = None) -> dict[str, np.ndarray]:
    """Read a plain-text lexicon: ``token v1 v2 ... v_e`` per line.

    All vectors must share one dimension (``expected_dim`` if given, else the
    first line's). Blank lines are skipped; malformed lines raise
    :class:`LexiconParseError` with the line number.
    """
    table: dict[str, np.ndarray] = {}
    dim = expected_dim
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise LexiconParseError(f"{path}:{lineno}: bad float ({exc})") from None
            if dim is None:
                dim = vec.size
            if vec.size != dim or dim == 0:
                raise LexiconParseError(
                    f"{path}:{lineno}: expected {dim} values, got {vec.size}"
                )
            table[token] = vec
    return table
