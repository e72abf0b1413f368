"""AdamW with decoupled weight decay."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class _Slot:
    __slots__ = ("m", "v", "step")

    def __init__(self, shape):
        self.m = np.zeros(shape, dtype=np.float64)
        self.v = np.zeros(shape, dtype=np.float64)
        self.step = 0


class AdamW:
    """Decoupled-decay Adam over a growing set of parameter tensors.

    Moment buffers and the step counter are per parameter, so tensors added
    at a later stage (new classifier rows, new prompts) get fresh bias
    correction instead of inheriting a stale global step.
    """

    def __init__(self, params=(), lr: float = 1e-4, weight_decay: float = 1e-2,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.params: list[Tensor] = []
        self.slots: dict[Tensor, _Slot] = {}
        self.add_params(params)

    def add_params(self, params):
        for p in params:
            if p in self.slots:
                continue
            if not p.trainable:
                raise ValueError(f"cannot optimise frozen tensor {p!r}")
            self.params.append(p)
            self.slots[p] = _Slot(p.data.shape)

    def restore_slots(self, named: dict[str, tuple[np.ndarray, np.ndarray, int]]):
        """Overwrite moment buffers by parameter name (checkpoint loading)."""
        by_name = {p.name: p for p in self.params}
        for name, (m, v, step) in named.items():
            p = by_name.get(name)
            if p is None:
                raise ValueError(f"no parameter named {name!r}")
            slot = self.slots[p]
            if m.shape != slot.m.shape or v.shape != slot.v.shape:
                raise ValueError(f"moment shape mismatch for {name!r}")
            slot.m = m.copy()
            slot.v = v.copy()
            slot.step = int(step)

    def step(self, grads: dict[Tensor, np.ndarray]):
        """Apply one update to every parameter that has a gradient entry."""
        for p in self.params:
            g = grads.get(p)
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"shape {p.data.shape} for {p!r}"
                )
            slot = self.slots[p]
            slot.step += 1
            slot.m = self.beta1 * slot.m + (1.0 - self.beta1) * g
            slot.v = self.beta2 * slot.v + (1.0 - self.beta2) * (g * g)
            m_hat = slot.m / (1.0 - self.beta1**slot.step)
            v_hat = slot.v / (1.0 - self.beta2**slot.step)
            p.data -= self.lr * (
                m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.data
            )
