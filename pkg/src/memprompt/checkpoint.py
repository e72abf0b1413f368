"""Save and restore full trainer state as structured JSON.

Floats go through repr/JSON which round-trips every finite double exactly,
so save -> load -> save produces byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np

from .memory import Exemplar, MemoryBuffer
from .model import ModelState
from .optim import AdamW

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _array_out(a):
    return {"shape": list(a.shape), "data": [float(v) for v in a.reshape(-1)]}


def _array_in(obj):
    return np.array(obj["data"], dtype=np.float64).reshape(obj["shape"])


def save_checkpoint(path, trainer, stage: int):
    """Write model parameters, optimizer slots, and the replay buffer."""
    model = trainer.model
    arrays = {p.name: _array_out(p.data) for p in model.all_parameters()}
    slots = {}
    for p, slot in trainer.optimizer.slots.items():
        slots[p.name] = {"m": _array_out(slot.m), "v": _array_out(slot.v),
                         "step": slot.step}
    mem = {
        "capacity": trainer.memory.capacity,
        "rng_state": trainer.memory.rng.bit_generator.state,
        "types": [
            {"name": t,
             "exemplars": [{"tokens": ex.tokens, "span": list(ex.span),
                            "label": ex.label, "feature": _array_out(ex.feature)}
                           for ex in exs]}
            for t, exs in trainer.memory.per_type.items()
        ],
    }
    doc = {
        "format_version": FORMAT_VERSION,
        "stage": stage,
        "encoder_checksum": model.encoder.checksum(),
        "flags": {"use_prompts": model.use_prompts, "use_epo": model.use_epo,
                  "prompts_frozen": model.prompts_frozen},
        "class_names": model.class_names,
        "prompt_tasks": [e.task_of_origin for e in model.prompt_bank.entries]
        if model.prompt_bank is not None else [],
        "seen_types": list(trainer.seen_types),
        "arrays": arrays,
        "optimizer": slots,
        "memory": mem,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path, encoder, trainer_cls, config):
    """Rebuild a trainer from a checkpoint written against the same encoder."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: not valid JSON ({exc})") from None
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version!r}, "
                              f"expected {FORMAT_VERSION}")
    if doc["encoder_checksum"] != encoder.checksum():
        raise CheckpointError(f"{path}: encoder checksum mismatch")
    flags = doc["flags"]
    for key, want in (("use_prompts", config.use_prompts),
                      ("use_epo", config.use_epo),
                      ("prompts_frozen", config.prompts_frozen)):
        if flags[key] != want:
            raise CheckpointError(f"{path}: flag {key} was {flags[key]}, "
                                  f"config says {want}")

    trainer = trainer_cls(encoder, config)
    model: ModelState = trainer.model
    names = doc["class_names"]
    tasks = doc["prompt_tasks"]
    # grow classifier rows and prompt slots past the built-in Other entry;
    # the random init values are overwritten from the checkpoint below
    for idx, name in enumerate(names[1:], 1):
        task = tasks[idx] if model.prompt_bank is not None else 0
        model.add_types([name], trainer.rng, task, use_einit=False)
    trainer.seen_types = list(doc["seen_types"])

    values = {k: _array_in(v) for k, v in doc["arrays"].items()}
    params = {p.name: p for p in model.all_parameters()}
    if set(values) != set(params):
        missing = set(params) - set(values)
        extra = set(values) - set(params)
        raise CheckpointError(f"{path}: parameter names differ "
                              f"(missing {sorted(missing)}, extra {sorted(extra)})")
    model.restore_values(values)

    trainer.optimizer = AdamW(model.trainable_parameters(),
                              lr=config.learning_rate,
                              weight_decay=config.weight_decay)
    trainer.optimizer.restore_slots(
        {name: (_array_in(s["m"]), _array_in(s["v"]), int(s["step"]))
         for name, s in doc["optimizer"].items()})

    mem = doc["memory"]
    buffer = MemoryBuffer(mem["capacity"], seed=0)
    buffer.rng.bit_generator.state = mem["rng_state"]
    for entry in mem["types"]:
        buffer.add_type(entry["name"], [
            Exemplar(list(ex["tokens"]), tuple(ex["span"]), ex["label"],
                     _array_in(ex["feature"]))
            for ex in entry["exemplars"]
        ])
    trainer.memory = buffer

    stage = int(doc["stage"])
    if config.use_kd and stage >= 1:
        from .distill import snapshot_teacher
        trainer.teacher = snapshot_teacher(model)
    return trainer, stage
