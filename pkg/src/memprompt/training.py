"""Lifelong training loop: per-task optimization, replay, and distillation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .distill import feature_kd, prediction_kd, snapshot_teacher, teacher_outputs
from .heads import detection_loss
from .memory import MemoryBuffer, build_buffer
from .metrics import LossRow, RunMetrics, dev_f1, evaluate_stage
from .model import ModelState
from .optim import AdamW

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-2
    accumulation_steps: int = 8     # sentences per optimizer step
    replay_interval: int = 10       # replay/KD every this many sentences
    max_epochs: int = 20
    patience: int = 5               # epochs without dev improvement
    buffer_size: int = 20           # exemplars kept per type
    temperature: float = 2.0
    use_prompts: bool = True
    use_epo: bool = True            # prompt-feature pathway in the logits
    use_einit: bool = True          # type-name-based prompt initialization
    use_replay: bool = True
    use_kd: bool = True
    prompts_frozen: bool = False    # fixed prompt pathway: no soft updates
    alpha: float | None = None      # replay weight; None = count-based
    beta: float | None = None       # distillation weight; None = count-based
    seed: int = 0

    def __post_init__(self):
        if self.accumulation_steps < 1:
            raise ValueError("accumulation_steps must be >= 1")
        if self.replay_interval < 1:
            raise ValueError("replay_interval must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def compute_weights(n_old: int, n_new: int):
    """Loss weights (alpha, beta) from class counts: n_old / (n_old + n_new).

    Zero before the first task boundary (no old classes, nothing to replay
    or distill).
    """
    if n_old < 0 or n_new < 0:
        raise ValueError(f"negative class count ({n_old}, {n_new})")
    if n_old == 0 and n_new == 0:
        raise ValueError("no classes at all")
    if n_old == 0:
        return 0.0, 0.0
    w = n_old / (n_old + n_new)
    return w, w


class LifelongTrainer:
    """Drives one model through a task stream."""

    def __init__(self, encoder, config: TrainConfig, lexicon=None, synonyms=None):
        self.config = config
        self.lexicon = lexicon or {}
        self.synonyms = synonyms or {}
        self.rng = np.random.default_rng(config.seed)
        self.model = ModelState(encoder, self.rng,
                                use_prompts=config.use_prompts,
                                use_epo=config.use_epo,
                                prompts_frozen=config.prompts_frozen)
        self.optimizer = AdamW(self.model.trainable_parameters(),
                               lr=config.learning_rate,
                               weight_decay=config.weight_decay)
        self.memory = MemoryBuffer(config.buffer_size, seed=config.seed + 1)
        self.teacher = None
        self.seen_types: list[str] = []
        self.loss_rows: list[LossRow] = []
        self.global_step = 0
        self._accum: dict = {}
        self._accum_count = 0

    # -- gradient accumulation ------------------------------------------

    def _accumulate(self, grads):
        for p, g in grads.items():
            if p in self._accum:
                self._accum[p] += g
            else:
                self._accum[p] = g.copy()
        self._accum_count += 1
        if self._accum_count >= self.config.accumulation_steps:
            mean = {p: g / self._accum_count for p, g in self._accum.items()}
            self.optimizer.step(mean)
            self._drop_accum()

    def _drop_accum(self):
        self._accum = {}
        self._accum_count = 0

    # -- one training sentence ------------------------------------------

    def _replay_terms(self, alpha, beta):
        """Replay CE and KD losses on one sampled exemplar, or None."""
        ex = self.memory.sample()
        if ex is None:
            return None
        cfg = self.config
        res = self.model.forward(ex.tokens, [ex.span])
        l_er = None
        if cfg.use_replay:
            l_er = detection_loss(res.base_logits, res.prompt_path_logits,
                                  [self.model.class_index(ex.label)])
        l_pd = l_fd = None
        if cfg.use_kd and self.teacher is not None and beta > 0:
            t_logits, t_feat = teacher_outputs(self.teacher, ex.tokens, ex.span)
            student_row = ad.reshape(res.logits, (res.logits.data.shape[1],))
            l_pd = prediction_kd(t_logits, student_row, cfg.temperature)
            feat_row = ad.reshape(res.span_features,
                                  (res.span_features.data.shape[1],))
            l_fd = feature_kd(t_feat, feat_row)
        return l_er, l_pd, l_fd

    def train_sentence(self, instance, step_in_task, alpha, beta):
        if not instance.spans:
            return None
        gold = [self.model.class_index(s.label) for s in instance.spans]
        spans = [(s.start, s.end) for s in instance.spans]
        res = self.model.forward(instance.tokens, spans)
        l_c = detection_loss(res.base_logits, res.prompt_path_logits, gold)
        total = l_c
        er_val = pd_val = fd_val = 0.0

        due = (step_in_task % self.config.replay_interval == 0)
        if due and (alpha > 0 or beta > 0):
            terms = self._replay_terms(alpha, beta)
            if terms is not None:
                l_er, l_pd, l_fd = terms
                if l_er is not None and alpha > 0:
                    total = total + alpha * l_er
                    er_val = float(l_er.data)
                if l_pd is not None:
                    total = total + beta * (l_pd + l_fd)
                    pd_val = float(l_pd.data)
                    fd_val = float(l_fd.data)

        grads = ad.backward(total)
        self._accumulate(grads)
        self.global_step += 1
        row = LossRow(self.global_step, float(l_c.data), er_val, pd_val, fd_val,
                      float(total.data))
        self.loss_rows.append(row)
        return row

    # -- one task --------------------------------------------------------

    def train_task(self, task, task_index: int):
        """Add the task's types, train with early stopping, then refresh the
        buffer and teacher. task_index is 1-based."""
        cfg = self.config
        if not task.train:
            raise ValueError(f"task {task_index} has an empty training split")
        overlap = set(task.types) & set(self.seen_types)
        if overlap:
            raise ValueError(f"types {sorted(overlap)} already learned")

        n_old, n_new = len(self.seen_types), len(task.types)
        alpha, beta = compute_weights(n_old, n_new)
        if cfg.alpha is not None:
            alpha = cfg.alpha
        if cfg.beta is not None:
            beta = cfg.beta

        self.model.add_types(task.types, self.rng, task_index,
                             lexicon=self.lexicon, synonym_map=self.synonyms,
                             use_einit=cfg.use_einit)
        self.optimizer.add_params(self.model.trainable_parameters())
        self.seen_types.extend(task.types)

        best_f1 = -1.0
        best_values = None
        stale = 0
        step_in_task = 0
        history = []
        for epoch in range(1, cfg.max_epochs + 1):
            order = self.rng.permutation(len(task.train))
            for idx in order:
                step_in_task += 1
                self.train_sentence(task.train[idx], step_in_task, alpha, beta)
            if not task.dev:
                continue
            f1 = dev_f1(self.model, task.dev, self.seen_types)
            history.append(f1)
            if f1 > best_f1:
                best_f1 = f1
                best_values = self.model.snapshot_values()
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    log.info("task %d: stopping after epoch %d (best dev %.4f)",
                             task_index, epoch, best_f1)
                    break
        # a partial accumulation window is dropped, not applied, so optimizer
        # steps always cover exactly accumulation_steps sentences
        self._drop_accum()
        if best_values is not None:
            self.model.restore_values(best_values)

        if (cfg.use_replay or cfg.use_kd) and cfg.buffer_size > 0:
            build_buffer(self.model, task.train, task.types, self.memory)
        if cfg.use_kd:
            self.teacher = snapshot_teacher(self.model)
        return history

    # -- the full stream -------------------------------------------------

    def run_stream(self, stream) -> RunMetrics:
        stages = []
        for t, task in enumerate(stream.tasks, 1):
            old = list(self.seen_types)
            self.train_task(task, t)
            stages.append(evaluate_stage(self.model, stream.test, t,
                                         old, task.types))
            log.info("stage %d: test micro-F1 %.4f", t, stages[-1].f1)
        return RunMetrics(stages, self.loss_rows)


def config_for_preset(base: TrainConfig, preset: str) -> TrainConfig:
    """Named model variants used in experiments and tests."""
    flags = PRESETS.get(preset)
    if flags is None:
        raise ValueError(f"unknown preset {preset!r} "
                         f"(choose from {', '.join(sorted(PRESETS))})")
    return replace(base, **flags)


PRESETS = {
    # full method: prompts + entangled logits + name init + replay + KD
    "emp": {},
    # replay and distillation but no prompt machinery
    "replay_kd": {"use_prompts": False, "use_epo": False, "use_einit": False},
    # plain fine-tuning, nothing that fights forgetting
    "plain": {"use_prompts": False, "use_epo": False, "use_einit": False,
              "use_replay": False, "use_kd": False},
    # ablations of the full method
    "no_einit": {"use_einit": False},
    "no_epo": {"use_epo": False},
    "no_kd": {"use_kd": False},
    # hard name prompts: vectors and prompt MLP stay at initialization
    "discrete": {"prompts_frozen": True},
}
