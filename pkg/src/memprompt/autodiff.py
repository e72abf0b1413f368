"""Reverse-mode automatic differentiation over float64 numpy arrays.

The op set is deliberately small: exactly what a frozen transformer encoder
plus trainable span/prompt heads need. Every op is deterministic (same inputs
give bit-identical outputs) and each backward rule is validated against
central finite differences in the test suite.

Gradients are only materialised for trainable leaf tensors; frozen parameters
(e.g. encoder weights) never receive a gradient entry, and branches of the
graph that cannot reach a trainable leaf skip their backward work entirely.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (e.g. evaluation, teacher)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse mode.

    ``trainable`` marks optimisable leaf parameters. Interior nodes carry the
    parent tensors and a vjp closure; ``needs_grad`` is true iff a trainable
    leaf is reachable, which lets backward prune dead branches.
    """

    __slots__ = ("data", "trainable", "needs_grad", "name", "_parents", "_vjp")

    def __init__(self, data, trainable: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.trainable = trainable
        self.needs_grad = trainable
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = self.name or ("param" if self.trainable else "tensor")
        return f"Tensor({tag}, shape={self.data.shape})"

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not part of the op set")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, vjp) -> Tensor:
    """Wrap an op result; record graph edges only when gradients may flow."""
    out = Tensor(data)
    if _grad_enabled and any(p.needs_grad for p in parents):
        out.needs_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise and structural ops ------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        ga = _unbroadcast(g, a.data.shape) if a.needs_grad else None
        gb = _unbroadcast(g, b.data.shape) if b.needs_grad else None
        return ga, gb

    return _node(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor) and np.isscalar(b):
        s = float(b)

        def vjp_s(g):
            return (g * s if a.needs_grad else None,)

        return _node(a.data * s, (a,), vjp_s)
    b = as_tensor(b)

    def vjp(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if a.needs_grad else None
        gb = _unbroadcast(g * a.data, b.data.shape) if b.needs_grad else None
        return ga, gb

    return _node(a.data * b.data, (a, b), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects tensors with ndim >= 2")
    out = a.data @ b.data

    def vjp(g):
        ga = gb = None
        if a.needs_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        if b.needs_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _node(out, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""

    def vjp(g):
        return (np.swapaxes(g, -1, -2),)

    return _node(np.swapaxes(a.data, -1, -2), (a,), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape

    def vjp(g):
        return (g.reshape(old),)

    return _node(a.data.reshape(shape), (a,), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def vjp(g):
        pieces = np.split(g, np.cumsum(sizes)[:-1], axis=axis)
        return tuple(p if t.needs_grad else None for p, t in zip(pieces, tensors))

    return _node(out, tuple(tensors), vjp)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        pieces = np.moveaxis(g, axis, 0)
        return tuple(pieces[i] if t.needs_grad else None for i, t in enumerate(tensors))

    return _node(out, tuple(tensors), vjp)


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows of a 2-d tensor; repeated indices accumulate in backward."""
    idx = np.asarray(indices, dtype=np.intp)
    out = a.data[idx]

    def vjp(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        return (buf,)

    return _node(out, (a,), vjp)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def vjp(g):
        buf = np.zeros_like(a.data)
        buf[sl] = g
        return (buf,)

    return _node(a.data[sl], (a,), vjp)


def tsum(a: Tensor) -> Tensor:
    def vjp(g):
        return (np.full_like(a.data, float(g)),)

    return _node(a.data.sum(), (a,), vjp)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size

    def vjp(g):
        return (np.full_like(a.data, float(g) / n),)

    return _node(a.data.mean(), (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _node(out, (a,), vjp)


def gelu(a: Tensor) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    x = a.data
    inner = _SQRT_2_OVER_PI * (x + _GELU_C * x**3)
    t = np.tanh(inner)

    def vjp(g):
        d_inner = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _node(0.5 * x * (1.0 + t), (a,), vjp)


# -- fused neural-net ops ----------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for 2-d x, fused to keep graphs small."""
    out = x.data @ w.data + b.data

    def vjp(g):
        gx = g @ w.data.T if x.needs_grad else None
        gw = x.data.T @ g if w.needs_grad else None
        gb = g.sum(axis=0) if b.needs_grad else None
        return gx, gw, gb

    return _node(out, (x, w, b), vjp)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def vjp(g):
        gx = ggamma = gbeta = None
        if x.needs_grad:
            gh = g * gamma.data
            m1 = gh.mean(axis=-1, keepdims=True)
            m2 = (gh * xhat).mean(axis=-1, keepdims=True)
            gx = (gh - m1 - xhat * m2) * inv
        if gamma.needs_grad:
            ggamma = (g * xhat).reshape(-1, x.data.shape[-1]).sum(axis=0)
        if beta.needs_grad:
            gbeta = g.reshape(-1, x.data.shape[-1]).sum(axis=0)
        return gx, ggamma, gbeta

    return _node(gamma.data * xhat + beta.data, (x, gamma, beta), vjp)


def multi_head_attention(
    x: Tensor,
    wq: Tensor, bq: Tensor,
    wk: Tensor, bk: Tensor,
    wv: Tensor, bv: Tensor,
    wo: Tensor, bo: Tensor,
    num_heads: int,
) -> Tensor:
    """Full bidirectional self-attention over a (seq, dim) input.

    Fused into a single graph node; the backward pass recomputes only the
    paths that can reach trainable leaves (with a frozen encoder that is just
    the input path).
    """
    seq, dim = x.data.shape
    dh = dim // num_heads
    scale = 1.0 / math.sqrt(dh)

    def split(m):  # (seq, dim) -> (heads, seq, dh)
        return np.moveaxis(m.reshape(seq, num_heads, dh), 0, 1)

    def merge(m):  # (heads, seq, dh) -> (seq, dim)
        return np.moveaxis(m, 0, 1).reshape(seq, dim)

    q = split(x.data @ wq.data + bq.data)
    k = split(x.data @ wk.data + bk.data)
    v = split(x.data @ wv.data + bv.data)
    scores = (q @ np.swapaxes(k, -1, -2)) * scale
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    probs = e / e.sum(axis=-1, keepdims=True)
    ctx = merge(probs @ v)
    out = ctx @ wo.data + bo.data

    parents = (x, wq, bq, wk, bk, wv, bv, wo, bo)

    def vjp(g):
        g_ctx = g @ wo.data.T
        g_wo = ctx.T @ g if wo.needs_grad else None
        g_bo = g.sum(axis=0) if bo.needs_grad else None

        gc = split(g_ctx)
        g_probs = gc @ np.swapaxes(v, -1, -2)
        g_v = np.swapaxes(probs, -1, -2) @ gc
        g_scores = (g_probs - (g_probs * probs).sum(axis=-1, keepdims=True)) * probs
        g_scores *= scale
        g_q = g_scores @ k
        g_k = np.swapaxes(g_scores, -1, -2) @ q

        gq_m, gk_m, gv_m = merge(g_q), merge(g_k), merge(g_v)
        gx = None
        if x.needs_grad:
            gx = gq_m @ wq.data.T + gk_m @ wk.data.T + gv_m @ wv.data.T
        g_wq = x.data.T @ gq_m if wq.needs_grad else None
        g_wk = x.data.T @ gk_m if wk.needs_grad else None
        g_wv = x.data.T @ gv_m if wv.needs_grad else None
        g_bq = gq_m.sum(axis=0) if bq.needs_grad else None
        g_bk = gk_m.sum(axis=0) if bk.needs_grad else None
        g_bv = gv_m.sum(axis=0) if bv.needs_grad else None
        return gx, g_wq, g_bq, g_wk, g_bk, g_wv, g_bv, g_wo, g_bo

    return _node(out, parents, vjp)


# -- losses and similarity ---------------------------------------------


def softmax_temperature(logits, temperature: float) -> np.ndarray:
    """Temperature-scaled softmax of a plain array (max-subtracted for
    stability). Not a graph op; the differentiable path goes through
    :func:`log_softmax` / :func:`cross_entropy`."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / float(temperature)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(a: Tensor) -> Tensor:
    """Log-softmax over the last axis of a 1-d tensor."""
    z = a.data - a.data.max()
    lse = np.log(np.exp(z).sum())
    out = z - lse

    def vjp(g):
        p = np.exp(out)
        return (g - p * g.sum(),)

    return _node(out, (a,), vjp)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Negative log softmax probability of ``target`` for a (K,) logit vector."""
    k = logits.data.shape[0]
    if not 0 <= target < k:
        raise IndexError(f"target {target} out of range for {k} classes")
    return reshape(
        cross_entropy_rows(reshape(logits, (1, k)), np.array([target])), ()
    )


def cross_entropy_rows(logits: Tensor, targets) -> Tensor:
    """Per-row negative log likelihood for (n, K) logits; returns shape (n,)."""
    t = np.asarray(targets, dtype=np.intp)
    n, k = logits.data.shape
    if t.shape != (n,):
        raise ValueError(f"expected {n} targets, got shape {t.shape}")
    if t.size and (t.min() < 0 or t.max() >= k):
        raise IndexError(f"targets out of range for {k} classes")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    losses = lse - z[np.arange(n), t]

    def vjp(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(n), t] -= 1.0
        return (p * g[:, None],)

    return _node(losses, (logits,), vjp)


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """Cosine of the angle between two nonzero 1-d vectors."""
    a, b = as_tensor(a), as_tensor(b)
    na = np.linalg.norm(a.data)
    nb = np.linalg.norm(b.data)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    c = float(a.data @ b.data) / (na * nb)

    def vjp(g):
        ga = gb = None
        if a.needs_grad:
            ga = g * (b.data / (na * nb) - c * a.data / (na * na))
        if b.needs_grad:
            gb = g * (a.data / (na * nb) - c * b.data / (nb * nb))
        return ga, gb

    return _node(c, (a, b), vjp)


# -- backward pass ------------------------------------------------------


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Run reverse mode from a scalar loss.

    Returns the gradient map: one entry per *trainable* leaf tensor reachable
    from the loss, keyed by tensor identity. Frozen tensors never appear.
    """
    if loss.data.shape != ():
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not np.isfinite(loss.data):
        raise FloatingPointError("loss is not finite")
    if not loss.needs_grad:
        return {}

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.needs_grad and id(p) not in seen:
                stack.append((p, False))

    acc: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    grads: dict[Tensor, np.ndarray] = {}
    for node in reversed(topo):
        g = acc.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.trainable:
                grads[node] = g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.needs_grad:
                continue
            key = id(parent)
            if key in acc:
                acc[key] = acc[key] + pg
            else:
                acc[key] = pg
    return grads


def grad_check(loss_fn, params, eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``loss_fn`` takes no arguments and rebuilds the scalar loss from the
    current values of ``params``; it must be deterministic.
    """
    loss = loss_fn()
    if not np.isfinite(loss.data):
        raise FloatingPointError("loss is not finite")
    grads = backward(loss)

    def eval_loss() -> float:
        with no_grad():
            return loss_fn().item()

    worst = 0.0
    for p in params:
        g = grads.get(p)
        if g is None:
            g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = eval_loss()
            flat[i] = orig - eps
            f_minus = eval_loss()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            denom = max(1e-8, abs(fd), abs(gflat[i]))
            worst = max(worst, abs(fd - gflat[i]) / denom)
    return worst
