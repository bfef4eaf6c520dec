"""Polyphonic LSTM conditioned on the chord progression.

Input at step t (71 values)::

    roll row t (48) | embedding of chord at step t+1 (10)
    | embedding of the chord of the following bar (10) | 3-bit position of step t+1

Output: sigmoid probabilities of each of the 48 notes sounding at step t+1.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chord_model import ChordModel
from .neural_core import (Adam, Lstm, LstmState, cross_entropy_binary, dumps_checkpoint,
                          loads_checkpoint, restore_into, sigmoid)
from .pianoroll import N_PITCHES, STEPS_PER_BAR

log = logging.getLogger(__name__)

KIND = "POLY"
COUNTER_BITS = 3


def counter_bits(step_in_bar: int) -> np.ndarray:
    """Big-endian 3-bit encoding, e.g. 5 -> (1, 0, 1)."""
    if not 0 <= step_in_bar < STEPS_PER_BAR:
        raise ValueError("step_in_bar must be in [0, 7]")
    return np.array([(step_in_bar >> k) & 1 for k in range(COUNTER_BITS - 1, -1, -1)],
                    dtype=np.float64)


def assemble_input(roll_row, chord_embed, next_chord_embed, step_in_bar) -> np.ndarray:
    return np.concatenate([np.asarray(roll_row, dtype=np.float64),
                           np.asarray(chord_embed, dtype=np.float64),
                           np.asarray(next_chord_embed, dtype=np.float64),
                           counter_bits(step_in_bar)])


def conditioning_features(chord_ids: Sequence[int], embeddings: np.ndarray, steps) -> np.ndarray:
    """Chord / next-chord / counter block for each predicted step index in ``steps``.

    ``embeddings`` has one row per chord id. Past the last bar the final
    chord is repeated.
    """
    steps = np.asarray(steps, dtype=np.int64)
    ids = np.asarray(chord_ids, dtype=np.int64)
    last = len(ids) - 1
    bar = np.minimum(steps // STEPS_PER_BAR, last)
    nxt = np.minimum(bar + 1, last)
    pos = steps % STEPS_PER_BAR
    bits = np.stack([(pos >> k) & 1 for k in range(COUNTER_BITS - 1, -1, -1)], axis=1)
    return np.hstack([embeddings[ids[bar]], embeddings[ids[nxt]], bits.astype(np.float64)])


def training_inputs(roll, chord_ids, embeddings) -> tuple[np.ndarray, np.ndarray]:
    """(inputs, targets) for a whole song: predict row t+1 from row t."""
    roll = np.asarray(roll, dtype=np.float64)
    n_bars = -(-len(roll) // STEPS_PER_BAR)
    if len(chord_ids) != n_bars:
        raise ValueError(f"roll has {n_bars} bars but {len(chord_ids)} chords were given")
    T = len(roll)
    feats = conditioning_features(chord_ids, embeddings, np.arange(1, T))
    return np.hstack([roll[:-1], feats]), roll[1:]


@dataclass
class PolyTrainConfig:
    lr: float = 1e-6
    epochs: int = 4
    bptt: int = 128
    max_steps: int | None = None
    shuffle: bool = True
    seed: int = 0


@dataclass
class GenerationConfig:
    note_cap: float = 4.0
    temperature: float = 1.0
    rng_seed: int = 0
    length_bars: int = 8


class PolyModel:
    def __init__(self, n_notes: int = N_PITCHES, embed_dim: int = 10, hidden: int = 512, seed=0):
        self.n_notes, self.embed_dim, self.hidden = n_notes, embed_dim, hidden
        self.n_in = n_notes + 2 * embed_dim + COUNTER_BITS
        self.lstm = Lstm(self.n_in, hidden, n_notes, rng=np.random.default_rng(seed))

    @property
    def params(self) -> dict:
        return self.lstm.params

    def forward(self, X, state: LstmState | None = None):
        cache = self.lstm.forward(X, state)
        return cache, sigmoid(cache.Y)

    def loss_and_grads(self, X, targets, state: LstmState | None = None):
        cache, probs = self.forward(X, state)
        targets = np.asarray(targets, dtype=np.float64).reshape(probs.shape)
        loss = cross_entropy_binary(probs, targets) if len(probs) else 0.0
        grads, _ = self.lstm.backward(cache, probs - targets)
        return loss, grads, cache.final_state

    def hyperparameters(self) -> dict[str, int]:
        return {"n_notes": self.n_notes, "embed_dim": self.embed_dim, "hidden": self.hidden}

    def dumps(self) -> bytes:
        return dumps_checkpoint(KIND, self.hyperparameters(), self.params)

    @classmethod
    def loads(cls, data: bytes) -> "PolyModel":
        kind, hyper, tensors = loads_checkpoint(data)
        if kind != KIND:
            raise ValueError(f"expected a {KIND} checkpoint, got {kind}")
        model = cls(hyper["n_notes"], hyper["embed_dim"], hyper["hidden"])
        restore_into(model.lstm.params, tensors)
        return model


def _windows(n: int, size: int):
    for s in range(0, n, size):
        yield slice(s, min(s + size, n))


def train_poly_model(songs: Sequence[tuple[np.ndarray, Sequence[int]]], chord_model: ChordModel,
                     model: PolyModel, config: PolyTrainConfig = PolyTrainConfig(),
                     callback=None) -> PolyModel:
    """Fit ``model`` in place on (roll, per-bar chord ids) pairs.

    Chord embeddings come from ``chord_model`` and stay fixed.
    """
    emb = chord_model.embeddings()
    if emb.shape[1] != model.embed_dim:
        raise ValueError("chord embedding width does not match the poly model")
    data = [training_inputs(roll, ids, emb) for roll, ids in songs]
    data = [d for d in data if len(d[0])]
    if not data:
        raise ValueError("no training song has more than one step")
    rng = np.random.default_rng(config.seed)
    adam = Adam(lr=config.lr)
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(data)) if config.shuffle else range(len(data))
        total = 0.0
        for k in order:
            X, Y = data[k]
            state = None
            for w in _windows(len(X), config.bptt):
                loss, grads, state = model.loss_and_grads(X[w], Y[w], state)
                adam.update(model.params, grads)
                step += 1
                total += loss
                if callback is not None and callback(step, loss):
                    return model
                if config.max_steps is not None and step >= config.max_steps:
                    return model
        log.info("epoch %d: total loss %.4f", epoch + 1, total)
    return model


def cap_probabilities(y, note_cap: float) -> np.ndarray:
    """Scale ``y`` down so it sums to at most ``note_cap``."""
    if note_cap <= 0:
        raise ValueError("note cap must be positive")
    y = np.asarray(y, dtype=np.float64)
    s = y.sum()
    if s > note_cap:
        return y * (note_cap / s)
    return y.copy()


def sample_step(y, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli draw per note."""
    y = np.asarray(y, dtype=np.float64)
    return (rng.random(y.shape) < y).astype(np.uint8)


def teacher_forced_f1(model: PolyModel, roll, chord_ids, chord_model: ChordModel,
                      threshold: float = 0.5) -> float:
    """F1 of thresholded next-step predictions against the true roll."""
    X, Y = training_inputs(roll, chord_ids, chord_model.embeddings())
    _, probs = model.forward(X)
    pred = probs > threshold
    truth = Y > 0.5
    tp = np.sum(pred & truth)
    denom = pred.sum() + truth.sum()
    return 1.0 if denom == 0 else float(2 * tp / denom)


def generate_song(model: PolyModel, chord_ids: Sequence[int], chord_model: ChordModel,
                  seed_roll=None, seed_chords: Sequence[int] | None = None,
                  config: GenerationConfig = GenerationConfig()) -> np.ndarray:
    """Generate ``8 * len(chord_ids)`` steps following the progression ``chord_ids``.

    The seed roll (whole bars, with one chord id per bar in ``seed_chords``)
    is fed teacher-forced first. Without a seed, one silent bar labelled
    with the first progression chord is used. The returned roll excludes
    the seed.
    """
    chord_ids = list(chord_ids)
    if not chord_ids:
        raise ValueError("chord progression must not be empty")
    if seed_roll is None:
        seed_roll = np.zeros((STEPS_PER_BAR, model.n_notes), dtype=np.uint8)
        seed_chords = [chord_ids[0]]
    seed_roll = np.asarray(seed_roll)
    if seed_chords is None or len(seed_roll) != STEPS_PER_BAR * len(seed_chords):
        raise ValueError("seed roll must span whole bars with one chord id per bar")
    if len(seed_roll) == 0:
        raise ValueError("seed roll must not be empty")
    all_ids = list(seed_chords) + chord_ids
    emb = chord_model.embeddings()
    rng = np.random.default_rng(config.rng_seed)

    S = len(seed_roll)
    n_steps = STEPS_PER_BAR * len(chord_ids)
    feats = conditioning_features(all_ids, emb, np.arange(1, S + n_steps + 1))
    X_seed = np.hstack([seed_roll.astype(np.float64), feats[:S]])
    cache, probs = model.forward(X_seed)
    state, y = cache.final_state, probs[-1]

    out = np.zeros((n_steps, model.n_notes), dtype=np.uint8)
    for t in range(n_steps):
        out[t] = sample_step(cap_probabilities(y, config.note_cap), rng)
        if t + 1 == n_steps:
            break
        x = np.concatenate([out[t].astype(np.float64), feats[S + t]])
        cache, probs = model.forward(x[None, :], state)
        state, y = cache.final_state, probs[-1]
    return out
