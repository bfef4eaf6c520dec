"""LSTM layer, losses, Adam, finite-difference gradient checking and checkpoints.

All arithmetic is float64. An :class:`Lstm` keeps its weights stacked by
gate in the order (input, forget, output, candidate)::

    U: (4n, n_in)   V: (4n, n)   b: (4n,)   W_out: (n_out, n)   b_out: (n_out,)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels

GATES = ("i", "f", "o", "g")
PROB_CLAMP = 1e-12


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy_categorical(p, target) -> float:
    """``-log p[target]``; ``p`` may be (K,) with an int target or (T, K) with T targets."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1 - PROB_CLAMP)
    if p.ndim == 1:
        return float(-np.log(p[target]))
    target = np.asarray(target)
    return float(-np.log(p[np.arange(len(target)), target]).sum())


def cross_entropy_binary(p, targets) -> float:
    """Summed Bernoulli cross-entropy over every entry."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1 - PROB_CLAMP)
    t = np.asarray(targets, dtype=np.float64)
    return float(-(t * np.log(p) + (1 - t) * np.log1p(-p)).sum())


class LstmState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


@dataclass
class LstmCache:
    X: np.ndarray
    H: np.ndarray
    C: np.ndarray
    G: np.ndarray
    Y: np.ndarray
    state0: LstmState

    @property
    def final_state(self) -> LstmState:
        if len(self.X) == 0:
            return self.state0
        return LstmState(self.H[-1].copy(), self.C[-1].copy())


class Lstm:
    """Single LSTM layer with a linear readout ``W_out h + b_out``.

    The output activation is left to the caller. Weights are drawn uniformly
    from ``[-init_scale, init_scale]``; the forget-gate bias starts at
    ``forget_bias`` and all other biases at zero.
    """

    def __init__(self, n_in: int, n_hidden: int, n_out: int, rng=None,
                 init_scale: float = 0.08, forget_bias: float = 1.0):
        self.n_in, self.n_hidden, self.n_out = n_in, n_hidden, n_out
        rng = np.random.default_rng(rng)
        u = lambda *shape: rng.uniform(-init_scale, init_scale, size=shape)
        n = n_hidden
        b = np.zeros(4 * n)
        b[n:2 * n] = forget_bias
        self.params = {
            "U": u(4 * n, n_in),
            "V": u(4 * n, n),
            "b": b,
            "W_out": u(n_out, n),
            "b_out": np.zeros(n_out),
        }

    def gate(self, name: str, gate: str) -> np.ndarray:
        """View of one gate's block, e.g. ``gate("U", "f")`` is U_f."""
        k = GATES.index(gate)
        n = self.n_hidden
        return self.params[name][k * n:(k + 1) * n]

    def zero_state(self) -> LstmState:
        return LstmState(np.zeros(self.n_hidden), np.zeros(self.n_hidden))

    def forward(self, X, state: LstmState | None = None) -> LstmCache:
        X = np.ascontiguousarray(X, dtype=np.float64).reshape(-1, self.n_in)
        state = state or self.zero_state()
        p = self.params
        H, C, G, Y = _kernels.lstm_forward(p["U"], p["V"], p["b"], p["W_out"], p["b_out"],
                                           X, state.h, state.c)
        return LstmCache(X, H, C, G, Y, state)

    def backward(self, cache: LstmCache, dY) -> tuple[dict, np.ndarray]:
        """Gradients w.r.t. every parameter and w.r.t. the inputs, given dLoss/dY."""
        p = self.params
        dY = np.ascontiguousarray(dY, dtype=np.float64)
        dU, dV, db, dW, dbo, dX = _kernels.lstm_backward(
            p["U"], p["V"], p["W_out"], cache.X, cache.H, cache.C, cache.G,
            cache.state0.h, cache.state0.c, dY)
        return {"U": dU, "V": dV, "b": db, "W_out": dW, "b_out": dbo}, dX

    def step(self, state: LstmState, x) -> tuple[LstmState, np.ndarray]:
        cache = self.forward(np.asarray(x, dtype=np.float64)[None, :], state)
        return cache.final_state, cache.Y[0]


def lstm_step(lstm: Lstm, state: LstmState, x) -> tuple[LstmState, np.ndarray]:
    """One time step straight from the gate equations (readable reference path)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (lstm.n_in,) or state.h.shape != (lstm.n_hidden,):
        raise ValueError("input or state shape does not match the layer")
    p = lstm.params
    z = p["U"] @ x + p["V"] @ state.h + p["b"]
    i, f, o, g = np.split(z, 4)
    i, f, o, g = sigmoid(i), sigmoid(f), sigmoid(o), np.tanh(g)
    c = f * state.c + i * g
    h = o * np.tanh(c)
    return LstmState(h, c), p["W_out"] @ h + p["b_out"]


@dataclass
class Adam:
    """Adam with bias correction; moments are created lazily per parameter name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def update(self, params: dict, grads: dict) -> None:
        """Apply one step in place to every parameter that has a gradient."""
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.epsilon)


def adam_update(params: dict, grads: dict, state: Adam) -> tuple[dict, Adam]:
    state.update(params, grads)
    return params, state


def relative_error(a, n) -> np.ndarray:
    a, n = np.asarray(a), np.asarray(n)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def gradient_check(loss_fn: Callable[[], float], params: dict, grads: dict,
                   epsilon: float = 1e-5) -> float:
    """Largest relative error between ``grads`` and central differences of ``loss_fn``.

    ``loss_fn`` must read the arrays in ``params``, which are perturbed in
    place one entry at a time and restored afterwards.
    """
    worst = 0.0
    for name, g in grads.items():
        theta = params[name]
        flat = theta.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            up = loss_fn()
            flat[k] = orig - epsilon
            down = loss_fn()
            flat[k] = orig
            num = (up - down) / (2 * epsilon)
            worst = max(worst, float(relative_error(gflat[k], num)))
    return worst


# --- checkpoints -------------------------------------------------------------

MAGIC = b"JMBT"
FORMAT_VERSION = 1


def _pack_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def dumps_checkpoint(kind: str, hyper: dict[str, int], tensors: dict[str, np.ndarray]) -> bytes:
    """Serialize. Vectors are stored as single-column matrices."""
    tag = kind.encode("ascii")
    if len(tag) != 4:
        raise ValueError("model kind tag must be 4 ASCII characters")
    out = bytearray(MAGIC + struct.pack("<I", FORMAT_VERSION) + tag)
    out += struct.pack("<I", len(hyper))
    for name, value in hyper.items():
        out += _pack_name(name) + struct.pack("<q", int(value))
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        mat = arr.reshape(arr.shape[0], -1) if arr.ndim else arr.reshape(1, 1)
        out += _pack_name(name) + struct.pack("<II", *mat.shape)
        out += np.ascontiguousarray(mat).tobytes()
    return bytes(out)


def loads_checkpoint(data: bytes) -> tuple[str, dict[str, int], dict[str, np.ndarray]]:
    """Inverse of :func:`dumps_checkpoint`; tensors come back as 2-D arrays."""
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise ValueError("truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    def name():
        (n,) = struct.unpack("<I", take(4))
        return bytes(take(n)).decode("utf-8")

    if bytes(take(4)) != MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    kind = bytes(take(4)).decode("ascii")
    hyper = {}
    for _ in range(struct.unpack("<I", take(4))[0]):
        key = name()
        hyper[key] = struct.unpack("<q", take(8))[0]
    tensors = {}
    for _ in range(struct.unpack("<I", take(4))[0]):
        key = name()
        rows, cols = struct.unpack("<II", take(8))
        buf = take(8 * rows * cols)
        tensors[key] = np.frombuffer(buf, dtype="<f8").reshape(rows, cols).astype(np.float64)
    return kind, hyper, tensors


def save_checkpoint(path, kind, hyper, tensors) -> None:
    Path(path).write_bytes(dumps_checkpoint(kind, hyper, tensors))


def load_checkpoint(path):
    return loads_checkpoint(Path(path).read_bytes())


def restore_into(params: dict, tensors: dict) -> None:
    """Copy loaded 2-D tensors into ``params``, reshaping to the existing shapes."""
    missing = set(params) - set(tensors)
    if missing:
        raise ValueError(f"checkpoint is missing tensors: {sorted(missing)}")
    for name, arr in params.items():
        src = tensors[name]
        if src.size != arr.size:
            raise ValueError(f"tensor {name}: expected {arr.size} values, found {src.size}")
        params[name] = src.reshape(arr.shape).copy()
