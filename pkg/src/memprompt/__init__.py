"""Lifelong event detection with episodic memory prompts.

A self-contained class-incremental learner: a frozen transformer encoder,
a growing span classifier, per-type prompt vectors entangled with span
features, herding-based replay, and two-level knowledge distillation,
all on a hand-rolled reverse-mode tape over numpy.
"""

from .autodiff import Tensor, backward, grad_check, no_grad
from .config import ExperimentConfig, load_config
from .data import GenParams, Instance, Span, build_task_stream, gen_synthetic
from .encoder import EncoderConfig, FrozenEncoder
from .memory import MemoryBuffer, herding_select
from .metrics import RunMetrics, StageMetrics, micro_f1
from .model import ModelState
from .optim import AdamW
from .training import PRESETS, LifelongTrainer, TrainConfig, compute_weights

__version__ = "0.1.0"

__all__ = [
    "AdamW", "EncoderConfig", "ExperimentConfig", "FrozenEncoder", "GenParams",
    "Instance", "LifelongTrainer", "MemoryBuffer", "ModelState", "PRESETS",
    "RunMetrics", "Span", "StageMetrics", "Tensor", "TrainConfig",
    "backward", "build_task_stream", "compute_weights", "gen_synthetic",
    "grad_check", "herding_select", "load_config", "micro_f1", "no_grad",
    "__version__",
]
