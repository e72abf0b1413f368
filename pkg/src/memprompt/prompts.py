"""Episodic memory prompts: one trainable vector per learned event type.

The bank is append-only. Index 0 is always the Other prompt; type prompts
follow in the order their tasks arrived, which keeps prompt index == classifier
class index everywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

OTHER = "Other"
PROMPT_INIT_STD = 0.02


@dataclass
class PromptEntry:
    type_name: str
    vector: Tensor
    task_of_origin: int


class PromptBank:
    def __init__(self, other_vector: Tensor):
        self.entries: list[PromptEntry] = [PromptEntry(OTHER, other_vector, 0)]

    def __len__(self):
        return len(self.entries)

    @property
    def type_names(self) -> list[str]:
        return [e.type_name for e in self.entries]

    def vectors(self) -> list[Tensor]:
        return [e.vector for e in self.entries]

    def trainable_vectors(self) -> list[Tensor]:
        return [e.vector for e in self.entries if e.vector.trainable]

    def extend(self, type_names, vectors, task: int):
        """Append prompts for a new task; existing entries are untouched."""
        if len(type_names) != len(vectors):
            raise ValueError("type_names and vectors must align")
        existing = set(self.type_names)
        for name in type_names:
            if name in existing:
                raise ValueError(f"type {name!r} already has a prompt")
            existing.add(name)
        for name, vec in zip(type_names, vectors):
            self.entries.append(PromptEntry(name, vec, task))

    def stacked(self) -> Tensor:
        return ad.stack(self.vectors())


class PromptMLP:
    """One-hidden-layer perceptron (dim -> dim, tanh) applied to prompt
    representations before the dot product with span features.

    The output layer carries no bias: an output bias would add the same
    b . f term to every class's prompt-path logit, which the row-wise
    softmax cancels, leaving a parameter that can never receive gradient.
    """

    def __init__(self, dim: int, rng: np.random.Generator, name: str = "prompt_mlp",
                 trainable: bool = True):
        std = 1.0 / np.sqrt(dim)
        self.w1 = Tensor(rng.normal(0.0, std, (dim, dim)), trainable=trainable,
                         name=f"{name}.w1")
        self.b1 = Tensor(np.zeros(dim), trainable=trainable, name=f"{name}.b1")
        self.w2 = Tensor(rng.normal(0.0, std, (dim, dim)), trainable=trainable,
                         name=f"{name}.w2")

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2]

    def apply(self, x: Tensor) -> Tensor:
        return ad.matmul(ad.tanh(ad.linear(x, self.w1, self.b1)), self.w2)


def prompt_logits(prompt_reps: Tensor, span_rep: Tensor, mlp: PromptMLP) -> Tensor:
    """Dot product between MLP-transformed prompt representations and span
    features. Accepts a single (e,) span or a (n, e) batch."""
    transformed = mlp.apply(prompt_reps)
    single = span_rep.ndim == 1
    spans = ad.reshape(span_rep, (1, -1)) if single else span_rep
    if spans.shape[-1] != prompt_reps.shape[-1]:
        raise ValueError(
            f"span dim {spans.shape[-1]} != prompt dim {prompt_reps.shape[-1]}"
        )
    logits = ad.matmul(spans, ad.transpose(transformed))
    return ad.reshape(logits, (-1,)) if single else logits


def init_task_prompts(type_names, lexicon: dict[str, np.ndarray],
                      synonym_map: dict[str, str], rng: np.random.Generator,
                      dim: int) -> list[np.ndarray]:
    """Name-based prompt initialisation.

    Per name: a single in-lexicon token copies its embedding; a multi-token
    name averages its tokens' embeddings; out-of-lexicon tokens are first
    mapped through the synonym table. Names that still contain unknown tokens
    fall back to a seeded random vector.
    """
    out = []
    for name in type_names:
        words = name.split()
        if not words:
            raise ValueError("empty type name")
        vecs = []
        for word in words:
            if word not in lexicon and word in synonym_map:
                word = synonym_map[word]
            vecs.append(lexicon.get(word))
        if any(v is None for v in vecs):
            out.append(rng.normal(0.0, PROMPT_INIT_STD, dim))
        else:
            out.append(np.mean(np.stack(vecs), axis=0))
    return out


def init_other_prompt(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Random initialisation for the Other prompt (no name to draw on)."""
    return rng.normal(0.0, PROMPT_INIT_STD, dim)


def load_synonym_map(path) -> dict[str, str]:
    """Read ``oov_token synonym_token`` pairs, one per line."""
    table: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two tokens")
            table[parts[0]] = parts[1]
    return table
