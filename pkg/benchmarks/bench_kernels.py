"""Time the numba-compiled kernels against their pure-Python originals.

    python benchmarks/bench_kernels.py [--repeat N]

Compilation happens in a warm-up call and is not timed. With
POLYJAM_DISABLE_NUMBA set both columns run the same code.
"""
import argparse
import timeit

import numpy as np

from polyjam import _kernels as K


def lstm_case(rng, T, n_in, n, n_out):
    U = rng.uniform(-0.08, 0.08, (4 * n, n_in))
    V = rng.uniform(-0.08, 0.08, (4 * n, n))
    b = np.zeros(4 * n)
    W = rng.uniform(-0.08, 0.08, (n_out, n))
    bo = np.zeros(n_out)
    X = rng.random((T, n_in))
    h0, c0 = np.zeros(n), np.zeros(n)
    H, C, G, Y = K.lstm_forward_py(U, V, b, W, bo, X, h0, c0)
    dY = rng.normal(size=Y.shape)
    fwd = (U, V, b, W, bo, X, h0, c0)
    bwd = (U, V, W, X, H, C, G, h0, c0, dY)
    return fwd, bwd


def raster_case(rng, n_notes):
    pitches = rng.integers(20, 100, n_notes).astype(np.int64)
    starts = rng.integers(0, 480 * 4 * 200, n_notes).astype(np.int64)
    ends = starts + rng.integers(1, 2000, n_notes)
    return (pitches, starts, ends, 1920, 1600, 36, 48)


def bench(fn_fast, fn_slow, args, repeat):
    fn_fast(*args)  # compile
    fast = min(timeit.repeat(lambda: fn_fast(*args), number=1, repeat=repeat))
    slow = min(timeit.repeat(lambda: fn_slow(*args), number=1, repeat=repeat))
    return fast, slow


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    rows = []
    for label, dims in (("chord 10->256->51, T=64", (64, 10, 256, 51)),
                        ("poly 71->512->48, T=128", (128, 71, 512, 48)),
                        ("tiny 4->8->12, T=64", (64, 4, 8, 12))):
        fwd, bwd = lstm_case(rng, *dims)
        rows.append((f"lstm_forward  {label}",) + bench(K.lstm_forward, K.lstm_forward_py, fwd, args.repeat))
        rows.append((f"lstm_backward {label}",) + bench(K.lstm_backward, K.lstm_backward_py, bwd, args.repeat))
    raster = raster_case(rng, 5000)
    rows.append(("rasterize 5000 notes",) + bench(K.rasterize, K.rasterize_py, raster, args.repeat))
    roll = K.rasterize_py(*raster)
    rows.append(("merge_runs 1600x48",) + bench(K.merge_runs, K.merge_runs_py, (roll, 8), args.repeat))

    print(f"numba enabled: {K.NUMBA_ENABLED}")
    print(f"{'kernel':<42} {'numba ms':>10} {'python ms':>10} {'speedup':>8}")
    for name, fast, slow in rows:
        print(f"{name:<42} {1e3 * fast:>10.3f} {1e3 * slow:>10.3f} {slow / fast:>7.1f}x")


if __name__ == "__main__":
    main()
