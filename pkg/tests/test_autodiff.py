"""Numeric core: op correctness, gradient checks, determinism."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memprompt import autodiff as ad
from memprompt.autodiff import Tensor


def tensor(values, trainable=True):
    return Tensor(np.array(values, dtype=np.float64), trainable=trainable)


# ---------------------------------------------------------------------------
# cross entropy


def test_cross_entropy_uniform_logits():
    t = tensor([0.0, 0.0, 0.0])
    assert ad.cross_entropy(t, 0).item() == pytest.approx(np.log(3.0), abs=1e-12)


def test_cross_entropy_peaked_logits():
    # oracle: direct softmax evaluation
    logits = np.array([10.0, 0.0, 0.0])
    p = np.exp(logits - logits.max())
    p /= p.sum()
    t = tensor(logits)
    assert ad.cross_entropy(t, 0).item() == pytest.approx(-np.log(p[0]), abs=1e-12)
    assert ad.cross_entropy(t, 0).item() == pytest.approx(9.079573e-5, rel=1e-5)
    assert ad.cross_entropy(t, 1).item() == pytest.approx(-np.log(p[1]), abs=1e-12)
    assert ad.cross_entropy(t, 1).item() == pytest.approx(10.0000908, abs=1e-6)


def test_cross_entropy_target_out_of_range():
    t = tensor([1.0, 2.0])
    with pytest.raises(IndexError):
        ad.cross_entropy(t, 2)
    with pytest.raises(IndexError):
        ad.cross_entropy(t, -1)


def test_cross_entropy_rows_matches_single():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(5, 4))
    targets = [0, 3, 1, 2, 2]
    rows = ad.cross_entropy_rows(tensor(logits), targets)
    for i, tgt in enumerate(targets):
        single = ad.cross_entropy(tensor(logits[i]), tgt)
        assert rows.data[i] == pytest.approx(single.item(), abs=1e-12)


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=6), st.data())
@settings(max_examples=50, deadline=None)
def test_cross_entropy_nonnegative(logits, data):
    target = data.draw(st.integers(0, len(logits) - 1))
    val = ad.cross_entropy(tensor(logits), target).item()
    assert val >= -1e-12


# ---------------------------------------------------------------------------
# temperature softmax


def test_softmax_temperature_pinned():
    out = ad.softmax_temperature([2.0, 0.0], 2.0)
    assert out == pytest.approx([0.73106, 0.26894], abs=5e-6)
    # oracle: softmax([1, 0]) by hand
    e = np.exp(1.0)
    assert out[0] == pytest.approx(e / (1 + e), abs=1e-12)


def test_softmax_temperature_identity_and_symmetry():
    logits = np.array([0.3, -1.2, 2.0])
    z = np.exp(logits - logits.max())
    np.testing.assert_allclose(ad.softmax_temperature(logits, 1.0), z / z.sum(),
                               atol=1e-12)
    np.testing.assert_allclose(ad.softmax_temperature([5.0, 5.0], 3.7), [0.5, 0.5],
                               atol=1e-12)


def test_softmax_temperature_rejects_nonpositive():
    for t in (0.0, -1.0):
        with pytest.raises(ValueError):
            ad.softmax_temperature([1.0, 2.0], t)


@given(st.lists(st.floats(-30, 30), min_size=1, max_size=8),
       st.floats(0.1, 10.0))
@settings(max_examples=100, deadline=None)
def test_softmax_temperature_sums_to_one(logits, temp):
    out = ad.softmax_temperature(logits, temp)
    assert abs(out.sum() - 1.0) < 1e-12
    assert (out >= 0).all()


# ---------------------------------------------------------------------------
# cosine


def test_cosine_basics():
    v = tensor([1.0, 2.0, -3.0])
    assert ad.cosine_similarity(v, tensor([1.0, 2.0, -3.0])).item() == \
        pytest.approx(1.0, abs=1e-12)
    assert ad.cosine_similarity(v, tensor([-1.0, -2.0, 3.0])).item() == \
        pytest.approx(-1.0, abs=1e-12)
    assert ad.cosine_similarity(tensor([1.0, 0.0]), tensor([0.0, 1.0])).item() == \
        pytest.approx(0.0, abs=1e-12)


def test_cosine_zero_vector_rejected():
    with pytest.raises(ValueError):
        ad.cosine_similarity(tensor([0.0, 0.0]), tensor([1.0, 0.0]))


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6))
@settings(max_examples=50, deadline=None)
def test_cosine_in_range(values):
    a = np.array(values)
    if np.linalg.norm(a) < 1e-6:
        return
    b = a[::-1].copy()
    if np.linalg.norm(b) < 1e-6:
        return
    c = ad.cosine_similarity(tensor(a), tensor(b)).item()
    assert -1.0 - 1e-9 <= c <= 1.0 + 1e-9


# ---------------------------------------------------------------------------
# gradient checks per op


def _check(loss_fn, params, tol=1e-6):
    err = ad.grad_check(loss_fn, params, eps=1e-5)
    assert err < tol, f"max rel grad error {err}"


def test_grads_elementwise_chain():
    rng = np.random.default_rng(1)
    a = tensor(rng.normal(size=(3, 4)))
    b = tensor(rng.normal(size=(3, 4)))

    def loss():
        return ad.tsum(ad.tanh(a * b + a) * 0.5)

    _check(loss, [a, b])


def test_grads_matmul_transpose_reshape():
    rng = np.random.default_rng(2)
    a = tensor(rng.normal(size=(3, 4)))
    b = tensor(rng.normal(size=(4, 5)))

    def loss():
        prod = ad.matmul(a, b)
        return ad.tsum(ad.reshape(ad.transpose(prod), (-1,)) * 0.3)

    _check(loss, [a, b])


def test_grads_concat_stack_gather_narrow():
    rng = np.random.default_rng(3)
    a = tensor(rng.normal(size=(4, 3)))
    b = tensor(rng.normal(size=(2, 3)))

    def loss():
        cat = ad.concat([a, b], axis=0)
        picked = ad.gather_rows(cat, [0, 5, 0, 2])  # repeats must accumulate
        sliced = ad.narrow(picked, 1, 1, 2)
        return ad.tmean(sliced * sliced)

    _check(loss, [a, b])


def test_grads_gelu_layer_norm_linear():
    rng = np.random.default_rng(4)
    x = tensor(rng.normal(size=(5, 6)))
    w = tensor(rng.normal(size=(6, 4)))
    b = tensor(rng.normal(size=4))
    g = tensor(rng.normal(size=6) + 1.0)
    beta = tensor(rng.normal(size=6))

    def loss():
        normed = ad.layer_norm(x, g, beta)
        return ad.tsum(ad.gelu(ad.linear(normed, w, b)))

    _check(loss, [x, w, b, g, beta], tol=1e-5)


def test_grads_attention_all_paths():
    rng = np.random.default_rng(5)
    dim, heads, seq = 8, 2, 5
    x = tensor(rng.normal(size=(seq, dim)) * 0.5)
    ws = [tensor(rng.normal(size=(dim, dim)) * 0.3) for _ in range(4)]
    bs = [tensor(rng.normal(size=dim) * 0.1) for _ in range(4)]

    def loss():
        out = ad.multi_head_attention(x, ws[0], bs[0], ws[1], bs[1],
                                      ws[2], bs[2], ws[3], bs[3], heads)
        return ad.tsum(ad.tanh(out))

    _check(loss, [x] + ws + bs, tol=1e-5)


def test_grads_cross_entropy_and_log_softmax():
    rng = np.random.default_rng(6)
    logits = tensor(rng.normal(size=(4, 3)))
    vec = tensor(rng.normal(size=5))

    def loss_ce():
        return ad.tmean(ad.cross_entropy_rows(logits, [0, 2, 1, 2]))

    _check(loss_ce, [logits])

    weights = np.array([0.2, 0.1, 0.4, 0.05, 0.25])

    def loss_ls():
        return -ad.tsum(ad.log_softmax(vec) * Tensor(weights))

    _check(loss_ls, [vec])


def test_grads_cosine():
    a = tensor([0.3, -1.2, 0.8])
    b = tensor([1.1, 0.4, -0.2])

    def loss():
        return ad.cosine_similarity(a, b)

    _check(loss, [a, b])


def test_grad_check_quadratic_analytic():
    p = tensor([1.0, -2.0, 3.0])

    def loss():
        return ad.tsum(p * p) * 0.5

    grads = ad.backward(loss())
    np.testing.assert_allclose(grads[p], p.data, atol=1e-12)
    assert ad.grad_check(loss, [p]) < 1e-8


def test_grad_check_constant_loss():
    p = tensor([1.0, 2.0])

    def loss():
        return ad.tsum(p * 0.0)

    assert ad.grad_check(loss, [p]) == 0.0


# ---------------------------------------------------------------------------
# backward contract


def test_backward_requires_scalar():
    p = tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        ad.backward(p * 2.0)


@pytest.mark.filterwarnings("ignore:overflow encountered:RuntimeWarning")
def test_backward_rejects_nonfinite():
    p = tensor([1e308])
    loss = ad.tsum(p * 1e308)  # overflows to inf
    with pytest.raises(FloatingPointError):
        ad.backward(loss)


def test_frozen_tensors_get_no_gradient():
    frozen = tensor([1.0, 2.0], trainable=False)
    live = tensor([3.0, 4.0])
    loss = ad.tsum(frozen * live)
    grads = ad.backward(loss)
    assert live in grads
    assert frozen not in grads
    np.testing.assert_allclose(grads[live], frozen.data)


def test_gradient_shapes_match_parameters():
    rng = np.random.default_rng(7)
    w = tensor(rng.normal(size=(3, 2)))
    b = tensor(rng.normal(size=2))
    q = tensor(rng.normal(size=(4, 3)))
    x = Tensor(rng.normal(size=(5, 3)))

    def loss():
        return ad.tsum(ad.linear(x, w, b)) + ad.tsum(q * q)

    grads = ad.backward(loss())
    for p in (w, b, q):
        assert p in grads
        assert grads[p].shape == p.data.shape


def test_no_grad_blocks_recording():
    p = tensor([1.0, 2.0])
    with ad.no_grad():
        loss = ad.tsum(p * p)
    assert ad.backward(loss) == {}


def test_shared_subexpression_accumulates():
    p = tensor([2.0])
    shared = p * 3.0
    loss = ad.tsum(shared + shared)  # d/dp = 6
    grads = ad.backward(loss)
    np.testing.assert_allclose(grads[p], [6.0])


def test_ops_deterministic():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(6, 6))
    a = tensor(x)

    def run():
        out = ad.layer_norm(ad.gelu(a), tensor(np.ones(6), trainable=False),
                            tensor(np.zeros(6), trainable=False))
        return out.data.tobytes()

    assert run() == run()
