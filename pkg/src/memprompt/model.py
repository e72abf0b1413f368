"""The trainable model around the frozen encoder.

Bundles the span head, the prompt bank and the prompt MLP, and owns the class
ordering shared by all of them. Growth happens only through
:meth:`ModelState.add_types` at task boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import FrozenEncoder
from .heads import SpanHead, SpanPrediction, combined_logits
from .prompts import (
    OTHER,
    PromptBank,
    PromptMLP,
    init_other_prompt,
    init_task_prompts,
    prompt_logits,
)


@dataclass
class ForwardResult:
    base_logits: Tensor            # (n, K) classifier pathway
    prompt_path_logits: Tensor | None  # (n, K) prompt pathway, None without EPO
    logits: Tensor                 # what the prediction rule uses
    span_features: Tensor          # (n, e)
    prompt_reps: Tensor | None     # (P, e)


class ModelState:
    def __init__(self, encoder: FrozenEncoder, rng: np.random.Generator,
                 use_prompts: bool = True, use_epo: bool = True,
                 prompts_frozen: bool = False):
        self.encoder = encoder
        self.dim = encoder.config.embedding_dim
        self.use_prompts = use_prompts
        self.use_epo = use_epo and use_prompts
        self.prompts_frozen = prompts_frozen
        self.span_head = SpanHead(self.dim, rng)
        self.span_head.extend_classifier([OTHER], rng)
        if use_prompts:
            other = Tensor(init_other_prompt(rng, self.dim),
                           trainable=not prompts_frozen, name="prompt.0")
            self.prompt_bank: PromptBank | None = PromptBank(other)
            # frozen prompts means the whole prompt pathway is fixed: hard
            # name prompts with an untrained transform, nothing soft to learn
            self.prompt_mlp: PromptMLP | None = PromptMLP(
                self.dim, rng, trainable=not prompts_frozen)
        else:
            self.prompt_bank = None
            self.prompt_mlp = None

    @property
    def class_names(self) -> list[str]:
        return self.span_head.class_names

    def num_classes(self) -> int:
        return self.span_head.num_classes()

    def class_index(self, name: str) -> int:
        return self.class_names.index(name)

    def add_types(self, type_names, rng: np.random.Generator, task: int,
                  lexicon=None, synonym_map=None, use_einit: bool = True):
        """Grow the classifier (and prompt bank) for a new task's types."""
        self.span_head.extend_classifier(type_names, rng)
        if self.prompt_bank is None:
            return
        if use_einit and lexicon is not None:
            raw = init_task_prompts(type_names, lexicon, synonym_map or {},
                                    rng, self.dim)
        else:
            raw = [rng.normal(0.0, 0.02, self.dim) for _ in type_names]
        vectors = [
            Tensor(v, trainable=not self.prompts_frozen,
                   name=f"prompt.{len(self.prompt_bank) + i}")
            for i, v in enumerate(raw)
        ]
        self.prompt_bank.extend(type_names, vectors, task)

    # -- forward -------------------------------------------------------

    def forward(self, token_ids, spans) -> ForwardResult:
        if self.prompt_bank is not None:
            token_reps, prompt_reps = self.encoder.encode(
                token_ids, self.prompt_bank.vectors())
        else:
            token_reps, prompt_reps = self.encoder.encode(token_ids)
            prompt_reps = None
        feats = self.span_head.span_features(token_reps, spans)
        base = self.span_head.classify(feats)
        ppath = None
        if self.use_epo:
            ppath = prompt_logits(prompt_reps, feats, self.prompt_mlp)
        logits = combined_logits(base, ppath) if ppath is not None else base
        return ForwardResult(base, ppath, logits, feats, prompt_reps)

    def predict(self, token_ids, spans) -> list[SpanPrediction]:
        """Argmax over (combined) logits per span; ties go to the lowest
        class index. Runs off the tape."""
        with ad.no_grad():
            res = self.forward(token_ids, spans)
        out = []
        for row, (span, feat) in enumerate(zip(spans, res.span_features.data)):
            logits = res.logits.data[row]
            out.append(SpanPrediction(tuple(span), logits,
                                      int(np.argmax(logits)), feat.copy()))
        return out

    # -- parameters ----------------------------------------------------

    def trainable_parameters(self) -> list[Tensor]:
        params = self.span_head.mlp_parameters() + self.span_head.classifier_parameters()
        if self.prompt_mlp is not None:
            params += [p for p in self.prompt_mlp.parameters() if p.trainable]
        if self.prompt_bank is not None:
            params += self.prompt_bank.trainable_vectors()
        return params

    def all_parameters(self) -> list[Tensor]:
        params = self.span_head.mlp_parameters() + self.span_head.classifier_parameters()
        if self.prompt_mlp is not None:
            params += self.prompt_mlp.parameters()
        if self.prompt_bank is not None:
            params += self.prompt_bank.vectors()
        return params

    def snapshot_values(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.all_parameters()}

    def restore_values(self, values: dict[str, np.ndarray]):
        for p in self.all_parameters():
            if p.name in values:
                np.copyto(p.data, values[p.name])

    def clone(self) -> "ModelState":
        """Deep copy of all heads and prompts with every tensor frozen;
        shares the (immutable) encoder. Used for teacher snapshots."""
        twin = ModelState.__new__(ModelState)
        twin.encoder = self.encoder
        twin.dim = self.dim
        twin.use_prompts = self.use_prompts
        twin.use_epo = self.use_epo
        twin.prompts_frozen = True

        rng = np.random.default_rng(0)  # placeholder weights, overwritten below
        twin.span_head = SpanHead(self.dim, rng)
        twin.span_head.extend_classifier(self.class_names, rng)
        for mine, theirs in zip(
            self.span_head.mlp_parameters() + self.span_head.classifier_parameters(),
            twin.span_head.mlp_parameters() + twin.span_head.classifier_parameters(),
        ):
            np.copyto(theirs.data, mine.data)

        if self.prompt_bank is not None:
            vectors = [Tensor(e.vector.data.copy(), name=e.vector.name)
                       for e in self.prompt_bank.entries]
            twin.prompt_bank = PromptBank(vectors[0])
            for entry, vec in zip(self.prompt_bank.entries[1:], vectors[1:]):
                twin.prompt_bank.extend([entry.type_name], [vec],
                                        entry.task_of_origin)
            twin.prompt_mlp = PromptMLP(self.dim, rng)
            for mine, theirs in zip(self.prompt_mlp.parameters(),
                                    twin.prompt_mlp.parameters()):
                np.copyto(theirs.data, mine.data)
        else:
            twin.prompt_bank = None
            twin.prompt_mlp = None

        for p in twin.all_parameters():
            p.trainable = False
            p.needs_grad = False
        return twin
