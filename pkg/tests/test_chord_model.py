import numpy as np
import pytest

from polyjam.chord_model import (ChordModel, ChordTrainConfig, SamplerConfig, generate_chords,
                                 next_chord_accuracy, sample_with_temperature, temperature_distribution,
                                 train_chord_model, training_windows)
from polyjam.harmony import ChordVocab


def test_embedding_lookup_is_column():
    m = ChordModel(6, embed_dim=3, hidden=4, seed=1)
    assert m.W_embed.shape == (3, 6)
    assert np.array_equal(m.embed(2), m.W_embed[:, 2])
    assert m.embeddings().shape == (6, 3)
    with pytest.raises(IndexError):
        m.embed(6)
    with pytest.raises(IndexError):
        m.forward([0, 7])


def test_vocab_size_consistency():
    vocab = ChordVocab([(0, 4, 7), (0, 5, 9)])
    assert ChordModel(vocab.n_ids, vocab=vocab).vocab is vocab
    with pytest.raises(ValueError):
        ChordModel(vocab.size, vocab=vocab)


def test_probabilities_normalized(rng):
    m = ChordModel(7, embed_dim=3, hidden=5, seed=2)
    p = m.predict_proba(rng.integers(0, 7, 10))
    assert p.shape == (10, 7)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_embedding_gradient_finite_differences():
    rng = np.random.default_rng(3)
    m = ChordModel(5, embed_dim=3, hidden=4, seed=3)
    for v in m.params.values():
        v[...] = rng.uniform(-1, 1, v.shape)
    ids, targets = [1, 3, 1, 0], [3, 1, 0, 4]
    _, grads, _ = m.loss_and_grads(ids, targets)
    W, eps = m.W_embed, 1e-5
    num = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        o = W[idx]
        W[idx] = o + eps
        up = m.loss(ids, targets)
        W[idx] = o - eps
        down = m.loss(ids, targets)
        W[idx] = o
        num[idx] = (up - down) / (2 * eps)
    assert np.allclose(grads["W_embed"], num, rtol=1e-5, atol=1e-8)
    assert np.all(grads["W_embed"][:, 2] == 0)  # unused id gets no gradient


def test_training_windows():
    assert list(training_windows([1, 2, 3, 4, 5], 2)) == [([1, 2], [2, 3]), ([3, 4], [4, 5])]
    assert list(training_windows([1, 2, 3, 4], 2)) == [([1, 2], [2, 3]), ([3], [4])]
    assert list(training_windows([1], 2)) == []


def test_temperature_example():
    q = temperature_distribution([0.6, 0.3, 0.1], 0.5)
    assert q == pytest.approx([0.36 / 0.46, 0.09 / 0.46, 0.01 / 0.46], abs=1e-12)
    assert q == pytest.approx([0.7826, 0.1957, 0.0217], abs=1e-4)
    assert temperature_distribution([0.7, 0.2, 0.1], 0.5) == pytest.approx([0.9074, 0.0741, 0.0185], abs=1e-4)
    assert temperature_distribution([0.6, 0.3, 0.1], 1.0) == pytest.approx([0.6, 0.3, 0.1])
    assert temperature_distribution([0.2, 0.5, 0.3], 0).tolist() == [0, 1, 0]
    with pytest.raises(ValueError):
        temperature_distribution([1.0], -1)


def test_temperature_sharpens_monotonically():
    p = np.array([0.5, 0.3, 0.15, 0.05])
    maxes = [temperature_distribution(p, T)[0] for T in (2.0, 1.0, 0.5, 0.25, 0.1)]
    assert all(a < b for a, b in zip(maxes, maxes[1:]))
    assert temperature_distribution(p, 100.0) == pytest.approx(np.full(4, 0.25), abs=0.01)


def test_zero_temperature_is_argmax(rng):
    for _ in range(20):
        p = rng.dirichlet(np.ones(6))
        assert sample_with_temperature(p, 0, rng) == int(np.argmax(p))


def test_sampler_frequencies_chi_square():
    rng = np.random.default_rng(0)
    p, T, n = np.array([0.5, 0.25, 0.15, 0.1]), 0.7, 100_000
    q = temperature_distribution(p, T)
    counts = np.bincount([sample_with_temperature(p, T, rng) for _ in range(n)], minlength=4)
    chi2 = float(((counts - n * q) ** 2 / (n * q)).sum())
    assert chi2 < 16.27  # 3 dof, p = 0.001


def test_generation_deterministic_and_in_range():
    m = ChordModel(9, embed_dim=3, hidden=6, seed=5)
    a = generate_chords(m, [1, 2], 20, SamplerConfig(1.0, rng_seed=4))
    b = generate_chords(m, [1, 2], 20, SamplerConfig(1.0, rng_seed=4))
    c = generate_chords(m, [1, 2], 20, SamplerConfig(1.0, rng_seed=5))
    assert a == b and a != c and len(a) == 20
    assert all(0 <= x < 9 for x in a)
    with pytest.raises(ValueError):
        generate_chords(m, [], 3)


def test_training_lowers_held_out_loss():
    rng = np.random.default_rng(0)
    def song():
        start = int(rng.integers(4))
        return [(start + k) % 4 for k in range(24)]
    train, held = [song() for _ in range(30)], [song() for _ in range(5)]
    m = ChordModel(5, embed_dim=4, hidden=16, seed=0)
    before = sum(m.loss(s[:-1], s[1:]) for s in held)
    train_chord_model(train, m, ChordTrainConfig(lr=1e-2, epochs=3, bptt=8))
    after = sum(m.loss(s[:-1], s[1:]) for s in held)
    assert after < 0.5 * before
    assert next_chord_accuracy(m, held) > 0.9


def test_training_callback_and_determinism():
    corpus = [[0, 1, 2, 3] * 4]
    seen = []
    m1 = ChordModel(5, embed_dim=2, hidden=4, seed=0)
    train_chord_model(corpus, m1, ChordTrainConfig(lr=1e-2, bptt=4),
                      callback=lambda s, l: seen.append(s) or s >= 5)
    assert seen == [1, 2, 3, 4, 5]
    m2 = ChordModel(5, embed_dim=2, hidden=4, seed=0)
    train_chord_model(corpus, m2, ChordTrainConfig(lr=1e-2, bptt=4, max_steps=5))
    assert all(np.array_equal(m1.params[k], m2.params[k]) for k in m1.params)
    with pytest.raises(ValueError):
        train_chord_model([[1]], m1)


def test_checkpoint_round_trip():
    m = ChordModel(6, embed_dim=3, hidden=5, seed=8)
    back = ChordModel.loads(m.dumps())
    assert back.hyperparameters() == m.hyperparameters()
    assert all(back.params[k].tobytes() == m.params[k].tobytes() for k in m.params)
    assert back.dumps() == m.dumps()
    assert np.array_equal(back.predict_proba([1, 2]), m.predict_proba([1, 2]))
