"""Frozen encoder: determinism, freezing, prompt plumbing, lexicon I/O."""

import numpy as np
import pytest

from memprompt import autodiff as ad
from memprompt.autodiff import Tensor
from memprompt.encoder import (
    EncoderConfig,
    FrozenEncoder,
    LexiconParseError,
    load_embedding_lexicon,
)

CFG = EncoderConfig(vocab_size=50, embedding_dim=16, num_layers=2, num_heads=4,
                    feedforward_dim=32, max_sequence_length=24, seed=3)


@pytest.fixture(scope="module")
def encoder():
    return FrozenEncoder(CFG)


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(vocab_size=10, embedding_dim=15, num_heads=4)
    with pytest.raises(ValueError):
        EncoderConfig(vocab_size=0)
    with pytest.raises(ValueError):
        EncoderConfig(vocab_size=10, num_layers=0)


def test_same_seed_same_checksum():
    assert FrozenEncoder(CFG).checksum() == FrozenEncoder(CFG).checksum()


def test_different_seed_different_checksum():
    other = EncoderConfig(vocab_size=50, embedding_dim=16, num_layers=2,
                          num_heads=4, feedforward_dim=32,
                          max_sequence_length=24, seed=4)
    assert FrozenEncoder(CFG).checksum() != FrozenEncoder(other).checksum()


def test_all_weights_frozen(encoder):
    for p in encoder.parameters():
        assert not p.trainable
        assert not p.needs_grad


def test_encode_deterministic(encoder):
    ids = [1, 5, 9, 2]
    a, _ = encoder.encode(ids)
    b, _ = encoder.encode(ids)
    assert a.data.tobytes() == b.data.tobytes()


def test_encode_without_prompts(encoder):
    toks, prompts = encoder.encode([0, 1, 2])
    assert toks.shape == (3, 16)
    assert prompts.shape == (0, 16)


def test_encode_shapes_with_prompts(encoder):
    vecs = [Tensor(np.zeros(16), trainable=True) for _ in range(3)]
    toks, prompts = encoder.encode([4, 4, 7, 1, 0], vecs)
    assert toks.shape == (5, 16)
    assert prompts.shape == (3, 16)


def test_prompts_change_their_representations(encoder):
    ids = [2, 3, 4]
    base = Tensor(np.arange(16, dtype=float) * 0.05, trainable=True)
    moved = Tensor(np.arange(16, dtype=float)[::-1] * 0.05, trainable=True)
    _, rep_a = encoder.encode(ids, [base])
    _, rep_b = encoder.encode(ids, [moved])
    assert not np.allclose(rep_a.data, rep_b.data)


def test_capacity_and_dim_errors(encoder):
    with pytest.raises(ValueError):
        encoder.encode(list(range(25)))
    with pytest.raises(ValueError):
        encoder.encode([1] * 22, [Tensor(np.zeros(16)) for _ in range(3)])
    with pytest.raises(ValueError):
        encoder.encode([1, 2], [Tensor(np.zeros(8))])


def test_gradients_flow_to_prompts_not_weights(encoder):
    prompt = Tensor(np.random.default_rng(0).normal(0, 0.1, 16), trainable=True)
    _, prompt_reps = encoder.encode([1, 2, 3], [prompt])
    loss = ad.tsum(prompt_reps * prompt_reps)
    grads = ad.backward(loss)
    assert prompt in grads
    for w in encoder.parameters():
        assert w not in grads


def test_prompt_gradient_matches_finite_differences(encoder):
    prompt = Tensor(np.random.default_rng(1).normal(0, 0.2, 16), trainable=True)
    target = np.random.default_rng(2).normal(size=(3, 16))

    def loss():
        tok_reps, _ = encoder.encode([5, 6, 7], [prompt])
        diff = tok_reps + Tensor(-target)
        return ad.tsum(diff * diff)

    assert ad.grad_check(loss, [prompt], eps=1e-5) < 1e-4


def test_checksum_stable_after_encoding(encoder):
    before = encoder.checksum()
    for _ in range(5):
        encoder.encode([1, 2, 3], [Tensor(np.zeros(16), trainable=True)])
    assert encoder.checksum() == before


def test_token_embedding_override():
    table = {0: np.full(16, 0.25), 7: np.arange(16, dtype=float)}
    enc = FrozenEncoder(CFG, table)
    np.testing.assert_allclose(enc.tok_emb.data[7], np.arange(16))
    with pytest.raises(ValueError):
        FrozenEncoder(CFG, {0: np.zeros(5)})
    with pytest.raises(ValueError):
        FrozenEncoder(CFG, {99: np.zeros(16)})


# ---------------------------------------------------------------------------
# lexicon file


def test_lexicon_round_trip(tmp_path):
    path = tmp_path / "lex.txt"
    path.write_text("attack 0.5 -1.25 3.0\nfire 1.0 2.0 4.5\n\n")
    table = load_embedding_lexicon(path)
    assert set(table) == {"attack", "fire"}
    np.testing.assert_allclose(table["attack"], [0.5, -1.25, 3.0])


def test_lexicon_empty_file(tmp_path):
    path = tmp_path / "lex.txt"
    path.write_text("")
    assert load_embedding_lexicon(path) == {}


def test_lexicon_wrong_width(tmp_path):
    path = tmp_path / "lex.txt"
    path.write_text("a 1.0 2.0\nb 1.0\n")
    with pytest.raises(LexiconParseError, match="2"):
        load_embedding_lexicon(path)


def test_lexicon_bad_float_reports_line(tmp_path):
    path = tmp_path / "lex.txt"
    path.write_text("a 1.0 2.0\nb 1.0 oops\n")
    with pytest.raises(LexiconParseError, match=":2"):
        load_embedding_lexicon(path)


def test_lexicon_expected_dim_enforced(tmp_path):
    path = tmp_path / "lex.txt"
    path.write_text("a 1.0 2.0 3.0\n")
    with pytest.raises(LexiconParseError):
        load_embedding_lexicon(path, expected_dim=4)
