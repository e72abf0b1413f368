"""The lifelong training loop: loss weighting, early stopping, replay
scheduling, and run-level invariants."""

import numpy as np
import pytest

from memprompt import training
from memprompt.data import GenParams, build_task_stream, gen_synthetic
from memprompt.encoder import EncoderConfig, FrozenEncoder
from memprompt.training import (
    PRESETS,
    LifelongTrainer,
    TrainConfig,
    compute_weights,
    config_for_preset,
)

GEN = GenParams(n_types=4, train_per_type=12, dev_per_type=3, test_per_type=4,
                vocab_size=130, embedding_dim=16, seed=21, max_len=10)
CORPUS = gen_synthetic(GEN)
ENCODER = FrozenEncoder(
    EncoderConfig(vocab_size=GEN.vocab_size, embedding_dim=16, num_layers=1,
                  num_heads=2, feedforward_dim=32, max_sequence_length=32,
                  seed=0),
    CORPUS.token_embeddings())
STREAM = build_task_stream(CORPUS.instances, CORPUS.ontology, 2, 0)

FAST = dict(max_epochs=1, accumulation_steps=4, replay_interval=3,
            buffer_size=4, seed=5)


def make_trainer(**overrides):
    cfg = TrainConfig(**{**FAST, **overrides})
    return LifelongTrainer(ENCODER, cfg,
                           lexicon=CORPUS.lexicon, synonyms=CORPUS.synonyms)


# ---------------------------------------------------------------------------
# loss weights


def test_compute_weights_pinned():
    assert compute_weights(3, 2) == (0.6, 0.6)
    assert compute_weights(0, 4) == (0.0, 0.0)
    assert compute_weights(10, 0) == (1.0, 1.0)
    assert compute_weights(2, 2) == (0.5, 0.5)


def test_compute_weights_errors():
    with pytest.raises(ValueError):
        compute_weights(-1, 2)
    with pytest.raises(ValueError):
        compute_weights(0, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(accumulation_steps=0)
    with pytest.raises(ValueError):
        TrainConfig(replay_interval=0)
    with pytest.raises(ValueError):
        TrainConfig(temperature=0.0)


def test_presets():
    base = TrainConfig()
    plain = config_for_preset(base, "plain")
    assert not plain.use_prompts and not plain.use_replay and not plain.use_kd
    assert config_for_preset(base, "emp") == base
    assert config_for_preset(base, "discrete").prompts_frozen
    with pytest.raises(ValueError):
        config_for_preset(base, "bogus")
    assert set(PRESETS) == {"emp", "replay_kd", "plain", "no_einit", "no_epo",
                            "no_kd", "discrete"}


# ---------------------------------------------------------------------------
# early stopping


def test_flat_dev_stops_after_patience(monkeypatch):
    """A dev score that never strictly improves exhausts patience; the model
    rolls back to the first epoch's snapshot."""
    seen = []
    first_snapshot = {}

    def fake_dev(model, dev, types):
        seen.append(1)
        if len(seen) == 1:
            first_snapshot.update(model.snapshot_values())
        return 0.5

    monkeypatch.setattr(training, "dev_f1", fake_dev)
    trainer = make_trainer(max_epochs=20, patience=2)
    history = trainer.train_task(STREAM.tasks[0], 1)
    # epoch 1 improves over -inf, epochs 2 and 3 are stale -> stop
    assert len(history) == 3
    final = trainer.model.snapshot_values()
    assert set(final) == set(first_snapshot)
    for name, val in final.items():
        np.testing.assert_array_equal(val, first_snapshot[name])


def test_best_epoch_restored(monkeypatch):
    scores = iter([0.3, 0.8, 0.4, 0.4, 0.4])
    snapshots = []

    def fake_dev(model, dev, types):
        snapshots.append(model.snapshot_values())
        return next(scores)

    monkeypatch.setattr(training, "dev_f1", fake_dev)
    trainer = make_trainer(max_epochs=5, patience=3)
    history = trainer.train_task(STREAM.tasks[0], 1)
    assert history == [0.3, 0.8, 0.4, 0.4, 0.4]
    final = trainer.model.snapshot_values()
    for name, val in final.items():
        np.testing.assert_array_equal(val, snapshots[1][name])


def test_no_dev_no_early_stop():
    from memprompt.data import Task
    task = STREAM.tasks[0]
    bare = Task(task.types, task.train, [])
    trainer = make_trainer(max_epochs=2)
    history = trainer.train_task(bare, 1)
    assert history == []
    # all epochs ran: global step count is 2 * len(train)
    assert trainer.global_step == 2 * len(task.train)


# ---------------------------------------------------------------------------
# replay and distillation scheduling


def test_plain_preset_logs_no_auxiliary_losses():
    cfg = config_for_preset(TrainConfig(**FAST), "plain")
    trainer = LifelongTrainer(ENCODER, cfg)
    trainer.run_stream(STREAM)
    assert trainer.loss_rows
    for row in trainer.loss_rows:
        assert row.l_er == 0.0 and row.l_pd == 0.0 and row.l_fd == 0.0
        assert row.total == row.l_c


def test_first_task_has_no_auxiliary_losses():
    trainer = make_trainer()
    trainer.train_task(STREAM.tasks[0], 1)
    for row in trainer.loss_rows:
        assert row.l_er == 0.0 and row.l_pd == 0.0 and row.l_fd == 0.0


def test_replay_only_on_interval_steps():
    trainer = make_trainer(replay_interval=3, max_epochs=1)
    trainer.train_task(STREAM.tasks[0], 1)
    task1_steps = trainer.global_step
    trainer.train_task(STREAM.tasks[1], 2)
    task2_rows = [r for r in trainer.loss_rows if r.step > task1_steps]
    due = [r for i, r in enumerate(task2_rows, 1) if i % 3 == 0]
    off = [r for i, r in enumerate(task2_rows, 1) if i % 3 != 0]
    assert all(r.l_er == 0.0 and r.l_pd == 0.0 and r.l_fd == 0.0 for r in off)
    assert due
    assert all(r.l_er > 0.0 and r.l_pd > 0.0 for r in due)
    assert any(r.l_fd > 0.0 for r in due)


def test_replay_rows_fold_weights_into_total():
    trainer = make_trainer(replay_interval=2, max_epochs=1)
    trainer.train_task(STREAM.tasks[0], 1)
    n_old = len(STREAM.tasks[0].types)
    n_new = len(STREAM.tasks[1].types)
    w = n_old / (n_old + n_new)
    trainer.train_task(STREAM.tasks[1], 2)
    hit = 0
    for row in trainer.loss_rows:
        if row.l_er > 0.0:
            expect = row.l_c + w * row.l_er + w * (row.l_pd + row.l_fd)
            assert row.total == pytest.approx(expect, rel=1e-12)
            hit += 1
    assert hit > 0


def test_alpha_beta_overrides():
    trainer = make_trainer(replay_interval=2, max_epochs=1, beta=0.0, alpha=0.5)
    trainer.train_task(STREAM.tasks[0], 1)
    trainer.train_task(STREAM.tasks[1], 2)
    er_rows = [r for r in trainer.loss_rows if r.l_er > 0.0]
    assert er_rows
    for row in er_rows:
        assert row.l_pd == 0.0 and row.l_fd == 0.0
        assert row.total == pytest.approx(row.l_c + 0.5 * row.l_er, rel=1e-12)


# ---------------------------------------------------------------------------
# optimizer stepping and parameter growth


def test_partial_accumulation_window_dropped():
    # 1 epoch x 12 sentences with window 5 -> exactly 2 optimizer steps,
    # the trailing 2-sentence window is discarded
    from memprompt.data import Task
    task = STREAM.tasks[0]
    trainer = make_trainer(accumulation_steps=5, max_epochs=1)
    trainer.train_task(Task(task.types, task.train[:12], []), 1)
    steps = {trainer.optimizer.slots[p].step for p in trainer.optimizer.params}
    assert steps == {2}
    assert trainer._accum_count == 0 and trainer._accum == {}


def test_parameters_grow_only_at_boundaries():
    trainer = make_trainer()
    trainer.train_task(STREAM.tasks[0], 1)
    names1 = {p.name for p in trainer.model.trainable_parameters()}
    trainer.train_task(STREAM.tasks[1], 2)
    names2 = {p.name for p in trainer.model.trainable_parameters()}
    assert names1 <= names2
    added = names2 - names1
    n_new = len(STREAM.tasks[1].types)
    # each new type brings one prompt and one classifier row (w and b)
    assert len(added) == 3 * n_new
    assert sum(1 for n in added if n.startswith("prompt.")) == n_new
    assert sum(1 for n in added if n.startswith("classifier.")) == 2 * n_new


def test_protocol_invariants_along_stream():
    trainer = make_trainer()
    total = 0
    for t, task in enumerate(STREAM.tasks, 1):
        trainer.train_task(task, t)
        total += len(task.types)
        assert len(trainer.model.prompt_bank) == 1 + total
        assert trainer.model.span_head.num_classes() == 1 + total
        assert trainer.model.class_names == ["Other"] + trainer.seen_types


def test_duplicate_type_rejected():
    trainer = make_trainer()
    trainer.train_task(STREAM.tasks[0], 1)
    with pytest.raises(ValueError):
        trainer.train_task(STREAM.tasks[0], 2)


def test_empty_train_rejected():
    from memprompt.data import Task
    trainer = make_trainer()
    with pytest.raises(ValueError):
        trainer.train_task(Task(["q"], [], []), 1)


# ---------------------------------------------------------------------------
# ablation behaviors


def test_discrete_prompts_never_move():
    cfg = config_for_preset(TrainConfig(**FAST), "discrete")
    trained = LifelongTrainer(ENCODER, cfg, lexicon=CORPUS.lexicon,
                              synonyms=CORPUS.synonyms)
    trained.run_stream(STREAM)
    # same config but zero epochs: prompts keep their initial values
    untouched = LifelongTrainer(ENCODER, TrainConfig(**{**FAST, **PRESETS["discrete"],
                                                        "max_epochs": 0}),
                                lexicon=CORPUS.lexicon, synonyms=CORPUS.synonyms)
    untouched.run_stream(STREAM)
    assert len(trained.model.prompt_bank) == len(untouched.model.prompt_bank)
    for a, b in zip(trained.model.prompt_bank.entries,
                    untouched.model.prompt_bank.entries):
        assert a.type_name == b.type_name
        assert not a.vector.trainable
        np.testing.assert_array_equal(a.vector.data, b.vector.data)
    # the prompt MLP is part of the fixed pathway too
    for p, q in zip(trained.model.prompt_mlp.parameters(),
                    untouched.model.prompt_mlp.parameters()):
        assert not p.trainable
        np.testing.assert_array_equal(p.data, q.data)
    assert all(not p.name.startswith("prompt") for p in trained.optimizer.params)


def test_no_epo_still_trains_prompts():
    cfg = config_for_preset(TrainConfig(**FAST), "no_epo")
    trainer = LifelongTrainer(ENCODER, cfg, lexicon=CORPUS.lexicon,
                              synonyms=CORPUS.synonyms)
    trainer.run_stream(STREAM)
    assert trainer.model.prompt_bank is not None
    assert any(p.name.startswith("prompt.") for p in trainer.optimizer.params)


# ---------------------------------------------------------------------------
# whole-stream behavior


def test_single_task_stream_runs():
    one = build_task_stream(CORPUS.instances, CORPUS.ontology, 1, 0)
    trainer = make_trainer()
    run = trainer.run_stream(one)
    assert len(run.stages) == 1
    assert run.stages[0].old_f1 is None
    assert run.stages[0].seen_types == one.tasks[0].types


def test_same_seed_same_run():
    runs = []
    for _ in range(2):
        trainer = make_trainer(max_epochs=2)
        runs.append(trainer.run_stream(STREAM))
    a, b = runs
    assert len(a.loss_log) == len(b.loss_log)
    for ra, rb in zip(a.loss_log, b.loss_log):
        assert ra == rb
    for sa, sb in zip(a.stages, b.stages):
        assert (sa.precision, sa.recall, sa.f1) == (sb.precision, sb.recall, sb.f1)
        assert sa.per_type == sb.per_type


def test_stage_metrics_shape():
    trainer = make_trainer(max_epochs=2)
    run = trainer.run_stream(STREAM)
    assert [s.stage for s in run.stages] == [1, 2]
    s2 = run.stages[1]
    assert s2.seen_types == STREAM.tasks[0].types + STREAM.tasks[1].types
    assert s2.new_types == STREAM.tasks[1].types
    assert s2.old_f1 is not None and s2.new_f1 is not None
    assert 0.0 <= s2.f1 <= 1.0
