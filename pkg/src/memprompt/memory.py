"""Herding-based exemplar selection and the replay buffer."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .heads import detection_loss

log = logging.getLogger(__name__)


def herding_select(features, m: int) -> list[int]:
    """Greedy herding order over feature vectors.

    Selects min(m, n) indices one at a time so that the running mean of the
    selected features stays as close as possible (L2) to the mean of all
    features. Ties break toward the lowest index, matching a brute-force
    greedy scan.
    """
    feats = [np.asarray(f, dtype=np.float64) for f in features]
    if feats:
        d = feats[0].shape
        for f in feats:
            if f.shape != d:
                raise ValueError(f"feature shape mismatch: {f.shape} vs {d}")
        mat = np.stack(feats)
    else:
        mat = np.zeros((0, 0))
    n = mat.shape[0]
    count = min(m, n)
    if count <= 0:
        return []

    mu = mat.mean(axis=0)
    chosen: list[int] = []
    selected_sum = np.zeros_like(mu)
    available = np.ones(n, dtype=bool)
    for k in range(1, count + 1):
        gap = mu[None, :] - (selected_sum[None, :] + mat) / k
        dist = np.einsum("ij,ij->i", gap, gap)
        dist[~available] = np.inf
        pick = int(np.argmin(dist))  # argmin takes the first (lowest) index on ties
        chosen.append(pick)
        available[pick] = False
        selected_sum += mat[pick]
    return chosen


@dataclass
class Exemplar:
    tokens: list[int]
    span: tuple[int, int]
    label: str
    feature: np.ndarray  # span feature cached at selection time


class MemoryBuffer:
    """Per-type exemplar lists, each at most ``capacity`` long."""

    def __init__(self, capacity: int, seed: int = 0):
        self.capacity = capacity
        self.per_type: dict[str, list[Exemplar]] = {}
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return sum(len(v) for v in self.per_type.values())

    def types(self) -> list[str]:
        return list(self.per_type)

    def add_type(self, type_name: str, exemplars: list[Exemplar]):
        if type_name in self.per_type:
            raise ValueError(f"buffer already holds exemplars for {type_name!r}")
        if len(exemplars) > self.capacity:
            raise ValueError(f"{len(exemplars)} exemplars exceed capacity "
                             f"{self.capacity}")
        self.per_type[type_name] = list(exemplars)

    def sample(self) -> Exemplar | None:
        """One exemplar uniform over everything stored; None when empty."""
        total = len(self)
        if total == 0:
            return None
        pick = int(self.rng.integers(total))
        for exemplars in self.per_type.values():
            if pick < len(exemplars):
                return exemplars[pick]
            pick -= len(exemplars)
        raise AssertionError("unreachable")


def build_buffer(model, task_instances, new_types, buffer: MemoryBuffer):
    """Select exemplars for each newly learned type via herding.

    Runs after a task finishes training: span features come from the current
    model's prompted pathway, and each type only ever draws from the training
    data of its own task.
    """
    mentions: dict[str, list[tuple[list[int], tuple[int, int]]]] = {
        t: [] for t in new_types}
    features: dict[str, list[np.ndarray]] = {t: [] for t in new_types}
    wanted = set(new_types)
    for inst in task_instances:
        idxs = [k for k, s in enumerate(inst.spans) if s.label in wanted]
        if not idxs:
            continue
        spans = [(inst.spans[k].start, inst.spans[k].end) for k in idxs]
        with ad.no_grad():
            feats = model.forward(inst.tokens, spans).span_features.data
        for row, k in enumerate(idxs):
            label = inst.spans[k].label
            mentions[label].append((inst.tokens, spans[row]))
            features[label].append(feats[row].copy())

    for t in new_types:
        if not features[t]:
            log.warning("type %r has no training mentions; buffer entry empty", t)
            buffer.add_type(t, [])
            continue
        order = herding_select(features[t], buffer.capacity)
        buffer.add_type(t, [
            Exemplar(list(mentions[t][i][0]), mentions[t][i][1], t, features[t][i])
            for i in order
        ])


def replay_loss(model, exemplar: Exemplar):
    """Detection loss on one replayed instance (same computation as training)."""
    res = model.forward(exemplar.tokens, [exemplar.span])
    gold = [model.class_index(exemplar.label)]
    return detection_loss(res.base_logits, res.prompt_path_logits, gold)
