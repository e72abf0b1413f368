"""Span representation and the growing linear classifier.

Class ordering is the single source of truth here: row 0 is Other, later rows
append in the order their types were learned, and the prompt bank mirrors the
same order so the two logit vectors can be summed elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CLASSIFIER_INIT_STD = 0.02


@dataclass
class ClassRow:
    type_name: str
    weight: Tensor
    bias: Tensor


@dataclass
class SpanPrediction:
    span: tuple[int, int]
    logits: np.ndarray
    predicted_class: int
    feature: np.ndarray
    feature_normalized: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.feature_normalized is None:
            norm = np.linalg.norm(self.feature)
            self.feature_normalized = self.feature / norm if norm else self.feature


class SpanHead:
    """Span MLP (2e -> e, one tanh hidden layer) plus append-only classifier."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.dim = dim
        std = 1.0 / np.sqrt(2 * dim)
        self.w1 = Tensor(rng.normal(0.0, std, (2 * dim, dim)), trainable=True,
                         name="span_mlp.w1")
        self.b1 = Tensor(np.zeros(dim), trainable=True, name="span_mlp.b1")
        std2 = 1.0 / np.sqrt(dim)
        self.w2 = Tensor(rng.normal(0.0, std2, (dim, dim)), trainable=True,
                         name="span_mlp.w2")
        self.b2 = Tensor(np.zeros(dim), trainable=True, name="span_mlp.b2")
        self.classes: list[ClassRow] = []

    @property
    def class_names(self) -> list[str]:
        return [c.type_name for c in self.classes]

    def num_classes(self) -> int:
        return len(self.classes)

    def mlp_parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def classifier_parameters(self) -> list[Tensor]:
        out = []
        for c in self.classes:
            out.extend((c.weight, c.bias))
        return out

    def extend_classifier(self, type_names, rng: np.random.Generator):
        """Append one seeded-random row (std 0.02) per new type."""
        existing = set(self.class_names)
        for name in type_names:
            if name in existing:
                raise ValueError(f"class {name!r} already present")
            existing.add(name)
        for name in type_names:
            idx = len(self.classes)
            self.classes.append(ClassRow(
                name,
                Tensor(rng.normal(0.0, CLASSIFIER_INIT_STD, self.dim),
                       trainable=True, name=f"classifier.{idx}.w"),
                Tensor(np.zeros(1), trainable=True, name=f"classifier.{idx}.b"),
            ))

    def span_features(self, token_reps: Tensor, spans) -> Tensor:
        """MLP over [start; end] token representations for a batch of spans."""
        length = token_reps.shape[0]
        starts, ends = [], []
        for i, j in spans:
            if not (0 <= i <= j < length):
                raise ValueError(f"span ({i}, {j}) invalid for length {length}")
            starts.append(i)
            ends.append(j)
        pair = ad.concat(
            [ad.gather_rows(token_reps, starts), ad.gather_rows(token_reps, ends)],
            axis=1,
        )
        return ad.linear(ad.tanh(ad.linear(pair, self.w1, self.b1)),
                         self.w2, self.b2)

    def classify(self, span_reps: Tensor) -> Tensor:
        """Affine map to one logit per learned class; (n, e) -> (n, K)."""
        if not self.classes:
            raise ValueError("classifier has no classes yet")
        weights = ad.transpose(ad.stack([c.weight for c in self.classes]))
        biases = ad.concat([c.bias for c in self.classes])
        return ad.linear(span_reps, weights, biases)


def combined_logits(p: Tensor, p_c: Tensor) -> Tensor:
    """Elementwise sum of classifier and prompt logits (softmax comes later)."""
    if p.shape != p_c.shape:
        raise ValueError(f"logit shapes differ: {p.shape} vs {p_c.shape}")
    return p + p_c


def detection_loss(base_logits: Tensor, prompt_path_logits: Tensor | None,
                   gold_classes) -> Tensor:
    """Mean cross-entropy over a batch of spans.

    With ``prompt_path_logits`` the two logit vectors are summed before the
    softmax; without it this is plain cross-entropy on the classifier logits.
    """
    logits = base_logits
    if prompt_path_logits is not None:
        logits = combined_logits(base_logits, prompt_path_logits)
    return ad.tmean(ad.cross_entropy_rows(logits, gold_classes))
