"""Chord-level LSTM: embedding -> LSTM -> softmax over chord ids."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .harmony import ChordVocab
from .neural_core import (Adam, Lstm, LstmState, cross_entropy_categorical, dumps_checkpoint,
                          loads_checkpoint, restore_into, softmax)

log = logging.getLogger(__name__)

KIND = "CHRD"


@dataclass
class ChordTrainConfig:
    lr: float = 1e-5
    epochs: int = 4
    bptt: int = 64
    max_steps: int | None = None
    shuffle: bool = True
    seed: int = 0


@dataclass
class SamplerConfig:
    temperature: float = 1.0
    rng_seed: int = 0


class ChordModel:
    def __init__(self, n_ids: int, embed_dim: int = 10, hidden: int = 256, seed=0,
                 vocab: ChordVocab | None = None):
        if vocab is not None and vocab.n_ids != n_ids:
            raise ValueError("n_ids must equal vocab.size + 1")
        rng = np.random.default_rng(seed)
        self.vocab = vocab
        self.n_ids, self.embed_dim, self.hidden = n_ids, embed_dim, hidden
        self.W_embed = rng.uniform(-0.08, 0.08, size=(embed_dim, n_ids))
        self.lstm = Lstm(embed_dim, hidden, n_ids, rng=rng)

    @property
    def params(self) -> dict:
        return {"W_embed": self.W_embed, **self.lstm.params}

    def embed(self, chord_id: int) -> np.ndarray:
        if not 0 <= chord_id < self.n_ids:
            raise IndexError(f"chord id {chord_id} outside [0, {self.n_ids})")
        return self.W_embed[:, chord_id].copy()

    def embeddings(self) -> np.ndarray:
        """All embedding vectors, one row per id."""
        return self.W_embed.T.copy()

    def _check_ids(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_ids):
            raise IndexError("chord id out of range")
        return ids

    def forward(self, ids, state: LstmState | None = None):
        ids = self._check_ids(ids)
        cache = self.lstm.forward(self.W_embed[:, ids].T, state)
        return cache, softmax(cache.Y)

    def loss(self, inputs, targets, state=None) -> float:
        _, probs = self.forward(inputs, state)
        return cross_entropy_categorical(probs, np.asarray(targets))

    def loss_and_grads(self, inputs, targets, state: LstmState | None = None):
        """Summed next-id cross-entropy and its exact gradients (truncated at ``state``).

        Returns (loss, grads, final_state).
        """
        inputs = self._check_ids(inputs)
        targets = self._check_ids(targets)
        cache, probs = self.forward(inputs, state)
        loss = cross_entropy_categorical(probs, targets) if len(inputs) else 0.0
        dY = probs.copy()
        dY[np.arange(len(targets)), targets] -= 1.0
        grads, dX = self.lstm.backward(cache, dY)
        dE = np.zeros_like(self.W_embed)
        np.add.at(dE.T, inputs, dX)
        grads["W_embed"] = dE
        return loss, grads, cache.final_state

    def predict_proba(self, ids, state=None) -> np.ndarray:
        return self.forward(ids, state)[1]

    def set_params(self, params: dict) -> None:
        self.W_embed = params["W_embed"]
        for k in self.lstm.params:
            self.lstm.params[k] = params[k]

    # persistence

    def hyperparameters(self) -> dict[str, int]:
        return {"n_ids": self.n_ids, "embed_dim": self.embed_dim, "hidden": self.hidden}

    def dumps(self) -> bytes:
        return dumps_checkpoint(KIND, self.hyperparameters(), self.params)

    @classmethod
    def loads(cls, data: bytes, vocab: ChordVocab | None = None) -> "ChordModel":
        kind, hyper, tensors = loads_checkpoint(data)
        if kind != KIND:
            raise ValueError(f"expected a {KIND} checkpoint, got {kind}")
        model = cls(hyper["n_ids"], hyper["embed_dim"], hyper["hidden"], vocab=vocab)
        params = model.params
        restore_into(params, tensors)
        model.set_params(params)
        return model


def training_windows(seq: Sequence[int], bptt: int):
    """(inputs, targets) chunks of a next-token objective, at most ``bptt`` long."""
    seq = list(seq)
    for s in range(0, len(seq) - 1, bptt):
        chunk = seq[s:s + bptt + 1]
        yield chunk[:-1], chunk[1:]


def train_chord_model(corpus: Sequence[Sequence[int]], model: ChordModel,
                      config: ChordTrainConfig = ChordTrainConfig(), callback=None) -> ChordModel:
    """Fit ``model`` in place with Adam, batch size 1, one song at a time.

    The LSTM state is carried across the BPTT windows of a song and reset
    between songs. ``callback(step, loss)`` is called after every update and
    may return True to stop early.
    """
    corpus = [list(s) for s in corpus if len(s) >= 2]
    if not corpus:
        raise ValueError("chord corpus has no sequence of length >= 2")
    rng = np.random.default_rng(config.seed)
    adam = Adam(lr=config.lr)
    params = model.params
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(corpus)) if config.shuffle else range(len(corpus))
        total, count = 0.0, 0
        for k in order:
            state = None
            for inputs, targets in training_windows(corpus[k], config.bptt):
                loss, grads, state = model.loss_and_grads(inputs, targets, state)
                adam.update(params, grads)
                model.set_params(params)
                step += 1
                total += loss
                count += len(inputs)
                if callback is not None and callback(step, loss):
                    return model
                if config.max_steps is not None and step >= config.max_steps:
                    return model
        log.info("epoch %d: mean loss %.4f", epoch + 1, total / max(count, 1))
    return model


def temperature_distribution(p, temperature: float) -> np.ndarray:
    """``p ** (1/T)`` renormalized. T == 0 puts all mass on the first argmax."""
    p = np.asarray(p, dtype=np.float64)
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if temperature == 0:
        q = np.zeros_like(p)
        q[int(np.argmax(p))] = 1.0
        return q
    with np.errstate(divide="ignore"):
        logp = np.log(p) / temperature
    return softmax(logp)


def sample_with_temperature(p, temperature: float, rng: np.random.Generator) -> int:
    if temperature == 0:
        return int(np.argmax(p))
    q = temperature_distribution(p, temperature)
    return int(min(np.searchsorted(np.cumsum(q), rng.random() * q.sum(), side="right"),
                   len(q) - 1))


def generate_chords(model: ChordModel, seed_ids: Sequence[int], length: int,
                    config: SamplerConfig = SamplerConfig()) -> list[int]:
    """Feed ``seed_ids``, then sample ``length`` more ids autoregressively."""
    if not seed_ids:
        raise ValueError("seed must contain at least one chord id")
    rng = np.random.default_rng(config.rng_seed)
    cache, probs = model.forward(seed_ids)
    state, p = cache.final_state, probs[-1]
    out = []
    for _ in range(length):
        nxt = sample_with_temperature(p, config.temperature, rng)
        out.append(nxt)
        cache, probs = model.forward([nxt], state)
        state, p = cache.final_state, probs[-1]
    return out


def next_chord_accuracy(model: ChordModel, corpus: Sequence[Sequence[int]], bptt: int = 64) -> float:
    """Teacher-forced argmax accuracy, with state carried like in training."""
    hits = total = 0
    for seq in corpus:
        state = None
        for inputs, targets in training_windows(seq, bptt):
            cache, probs = model.forward(inputs, state)
            state = cache.final_state
            hits += int((probs.argmax(axis=1) == np.asarray(targets)).sum())
            total += len(targets)
    return hits / max(total, 1)
