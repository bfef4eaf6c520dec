"""Hot inner loops.

Every kernel is written once as plain Python over numpy arrays and, unless
``POLYJAM_DISABLE_NUMBA`` is set (or numba is missing), compiled with
``numba.njit``. The uncompiled originals stay importable as ``*_py`` so the
two paths can be compared and benchmarked.

Gate order in stacked LSTM weights is (input, forget, output, candidate).
"""
import os

import numpy as np

_DISABLED = os.environ.get("POLYJAM_DISABLE_NUMBA", "").lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False


def lstm_forward_py(U, V, b, W_out, b_out, X, h0, c0):
    """Run an LSTM over ``X`` (T x I) and return every cached activation.

    Returns (H, C, G, Y): hidden and cell states (T x n), post-activation
    gates (T x 4n) and pre-activation outputs (T x O).
    """
    T = X.shape[0]
    n = h0.shape[0]
    H = np.empty((T, n))
    C = np.empty((T, n))
    G = np.empty((T, 4 * n))
    Y = np.empty((T, W_out.shape[0]))
    if T == 0:
        return H, C, G, Y
    XU = X @ np.ascontiguousarray(U.T)
    h = h0.copy()
    c = c0.copy()
    for t in range(T):
        z = XU[t] + V @ h + b
        # sigmoid(x) == (1 + tanh(x/2)) / 2, overflow-free
        i = 0.5 * (1.0 + np.tanh(0.5 * z[:n]))
        f = 0.5 * (1.0 + np.tanh(0.5 * z[n:2 * n]))
        o = 0.5 * (1.0 + np.tanh(0.5 * z[2 * n:3 * n]))
        g = np.tanh(z[3 * n:])
        c = f * c + i * g
        h = o * np.tanh(c)
        G[t, :n] = i
        G[t, n:2 * n] = f
        G[t, 2 * n:3 * n] = o
        G[t, 3 * n:] = g
        H[t] = h
        C[t] = c
    Y[:, :] = H @ np.ascontiguousarray(W_out.T) + b_out
    return H, C, G, Y


def lstm_backward_py(U, V, W_out, X, H, C, G, h0, c0, dY):
    """Reverse-mode gradients of a loss whose gradient w.r.t. ``Y`` is ``dY``.

    Returns (dU, dV, db, dW_out, db_out, dX). The initial state is treated
    as a constant.
    """
    T = X.shape[0]
    n = h0.shape[0]
    dU = np.zeros(U.shape)
    dV = np.zeros(V.shape)
    db = np.zeros(4 * n)
    dX = np.zeros(X.shape)
    if T == 0:
        return dU, dV, db, np.zeros(W_out.shape), np.zeros(W_out.shape[0]), dX
    dYT = np.ascontiguousarray(dY.T)
    dW_out = dYT @ H
    db_out = dY.sum(axis=0)
    dH = dY @ W_out
    dZ = np.empty((T, 4 * n))
    VT = np.ascontiguousarray(V.T)
    dh_next = np.zeros(n)
    dc_next = np.zeros(n)
    for t in range(T - 1, -1, -1):
        i = G[t, :n]
        f = G[t, n:2 * n]
        o = G[t, 2 * n:3 * n]
        g = G[t, 3 * n:]
        c_prev = C[t - 1] if t > 0 else c0
        tc = np.tanh(C[t])
        dh = dH[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dZ[t, :n] = dc * g * i * (1.0 - i)
        dZ[t, n:2 * n] = dc * c_prev * f * (1.0 - f)
        dZ[t, 2 * n:3 * n] = dh * tc * o * (1.0 - o)
        dZ[t, 3 * n:] = dc * i * (1.0 - g * g)
        dh_next = VT @ dZ[t]
        dc_next = dc * f
    Hprev = np.empty((T, n))
    Hprev[0] = h0
    Hprev[1:] = H[:-1]
    dZT = np.ascontiguousarray(dZ.T)
    dU[:, :] = dZT @ X
    dV[:, :] = dZT @ Hprev
    db[:] = dZ.sum(axis=0)
    dX[:, :] = dZ @ U
    return dU, dV, db, dW_out, db_out, dX


def rasterize_py(pitches, starts, ends, bar_ticks, n_steps, low, width):
    """Binary roll: step t covers ticks [t*bar/8, (t+1)*bar/8); a note marks every step it overlaps."""
    roll = np.zeros((n_steps, width), dtype=np.uint8)
    for k in range(pitches.shape[0]):
        col = pitches[k] - low
        if col < 0 or col >= width:
            continue
        # first step whose window end exceeds start, last step whose window start precedes end
        t0 = (8 * starts[k]) // bar_ticks
        t1 = -((-8 * ends[k]) // bar_ticks)
        if t1 > n_steps:
            t1 = n_steps
        for t in range(t0, t1):
            roll[t, col] = 1
    return roll


def merge_runs_py(roll, steps_per_bar):
    """Runs of consecutive active steps per column, split at bar starts.

    Returns an (N x 3) int64 array of (column, start_step, end_step), end exclusive,
    ordered by column then start.
    """
    T, P = roll.shape
    out = np.empty((T * P, 3), dtype=np.int64)
    k = 0
    for p in range(P):
        t = 0
        while t < T:
            if roll[t, p]:
                s = t
                t += 1
                while t < T and roll[t, p] and t % steps_per_bar != 0:
                    t += 1
                out[k, 0] = p
                out[k, 1] = s
                out[k, 2] = t
                k += 1
            else:
                t += 1
    return out[:k].copy()


if NUMBA_ENABLED:
    lstm_forward = njit(cache=True)(lstm_forward_py)
    lstm_backward = njit(cache=True)(lstm_backward_py)
    rasterize = njit(cache=True)(rasterize_py)
    merge_runs = njit(cache=True)(merge_runs_py)
else:
    lstm_forward = lstm_forward_py
    lstm_backward = lstm_backward_py
    rasterize = rasterize_py
    merge_runs = merge_runs_py
