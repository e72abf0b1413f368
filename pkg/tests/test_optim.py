"""AdamW: decoupled decay, per-parameter state, growth."""

import numpy as np
import pytest

from memprompt.autodiff import Tensor
from memprompt.optim import AdamW


def param(values):
    return Tensor(np.array(values, dtype=np.float64), trainable=True, name="p")


def test_zero_grad_no_decay_leaves_params():
    p = param([1.0, -2.0])
    opt = AdamW([p], lr=1e-4, weight_decay=0.0)
    opt.step({p: np.zeros(2)})
    np.testing.assert_allclose(p.data, [1.0, -2.0], atol=0)


def test_zero_grad_with_decay_shrinks_by_decoupled_factor():
    p = param([1.0, -0.5, 3.0])
    opt = AdamW([p], lr=1e-4, weight_decay=1e-2)
    before = p.data.copy()
    opt.step({p: np.zeros(3)})
    # decoupled decay: p <- p - lr*wd*p = p * (1 - 1e-6)
    np.testing.assert_allclose(p.data, before * (1.0 - 1e-6), rtol=1e-15)


def test_first_step_is_signed_lr():
    # at step 1, m_hat = g and v_hat = g^2, so the update tends to
    # -lr * sign(g) as eps -> 0
    for g0 in (0.7, -1.3, 100.0):
        p = param([0.0])
        opt = AdamW([p], lr=1e-3, weight_decay=0.0, eps=1e-12)
        opt.step({p: np.array([g0])})
        assert p.data[0] == pytest.approx(-1e-3 * np.sign(g0), rel=1e-6)


def test_matches_reference_sequence():
    # independent re-implementation of the update rule, run side by side
    rng = np.random.default_rng(0)
    p = param(rng.normal(size=4))
    ref = p.data.copy()
    lr, wd, b1, b2, eps = 1e-3, 1e-2, 0.9, 0.999, 1e-8
    opt = AdamW([p], lr=lr, weight_decay=wd, beta1=b1, beta2=b2, eps=eps)
    m = np.zeros(4)
    v = np.zeros(4)
    for step in range(1, 8):
        g = rng.normal(size=4)
        opt.step({p: g})
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**step)
        vh = v / (1 - b2**step)
        ref = ref - lr * (mh / (np.sqrt(vh) + eps) + wd * ref)
        np.testing.assert_allclose(p.data, ref, atol=1e-15)


def test_step_counter_per_parameter():
    a, b = param([1.0]), param([2.0])
    opt = AdamW([a], lr=1e-3)
    opt.step({a: np.array([0.1])})
    opt.step({a: np.array([0.1])})
    opt.add_params([b])  # added later: fresh bias correction
    opt.step({a: np.array([0.1]), b: np.array([0.1])})
    assert opt.slots[a].step == 3
    assert opt.slots[b].step == 1


def test_params_without_grads_untouched():
    a, b = param([1.0]), param([2.0])
    opt = AdamW([a, b], lr=1e-3, weight_decay=1e-2)
    opt.step({a: np.array([0.5])})
    assert b.data[0] == 2.0
    assert opt.slots[b].step == 0


def test_shape_mismatch_rejected():
    p = param([1.0, 2.0])
    opt = AdamW([p])
    with pytest.raises(ValueError):
        opt.step({p: np.zeros(3)})


def test_frozen_param_rejected():
    frozen = Tensor(np.zeros(2), trainable=False)
    with pytest.raises(ValueError):
        AdamW([frozen])


def test_add_params_deduplicates():
    p = param([1.0])
    opt = AdamW([p])
    opt.add_params([p])
    assert len(opt.params) == 1


def test_moment_shapes_match_parameters():
    p = param(np.zeros((3, 2)))
    opt = AdamW([p])
    assert opt.slots[p].m.shape == (3, 2)
    assert opt.slots[p].v.shape == (3, 2)
