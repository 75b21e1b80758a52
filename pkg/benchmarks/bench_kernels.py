"""Compiled versus pure-Python kernel timings.

Run from the repository root after ``pip install -e .``::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one row per kernel: median seconds for each backend, the speed-up,
and the maximum absolute difference between their outputs.
"""
import argparse
import time

import numpy as np

from neuroergo.kernels import _fallback

try:
    from neuroergo.kernels import _ckernels
except ImportError:
    _ckernels = None


def _cases(rng):
    xpad = rng.standard_normal((128, 34, 34, 64)).astype(np.float32)
    cols = rng.standard_normal((128 * 16 * 16, 9 * 64)).astype(np.float32)
    n = 6000
    cand_idx = np.cumsum(rng.integers(20, 120, n)).astype(np.int64)
    cand_val = rng.gamma(2.0, 1.0, n)
    pts = rng.standard_normal((500, 20))
    sq = (pts ** 2).sum(1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * pts @ pts.T, 0)
    np.fill_diagonal(d2, 0)
    return {
        "im2col_nhwc 128x32x32x64": ("im2col_nhwc", (xpad, 3, 2, 16, 16)),
        "col2im_nhwc 128x32x32x64": ("col2im_nhwc", (cols, xpad.shape, 3, 2, 16, 16)),
        "pt_threshold_scan n=6000": ("pt_threshold_scan", (cand_idx, cand_val, 50, 5.0, 1.0)),
        "perplexity_search n=500": ("perplexity_search", (d2, 30.0, 1e-5, 200)),
    }


def _time(fn, args, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t)
    return float(np.median(times)), out


def _diff(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return max(float(np.max(np.abs(np.asarray(x, float) - np.asarray(y, float)))) if np.size(x) else 0.0
               for x, y in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the Python backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python s':>10s} {'cython s':>10s} {'speed-up':>9s} {'max |diff|':>11s}")
    for label, (name, fargs) in _cases(rng).items():
        tp, outp = _time(getattr(_fallback, name), fargs, args.repeat)
        if _ckernels is None:
            print(f"{label:32s} {tp:10.4f}")
            continue
        tc, outc = _time(getattr(_ckernels, name), fargs, args.repeat)
        print(f"{label:32s} {tp:10.4f} {tc:10.4f} {tp / tc:8.1f}x {_diff(outp, outc):11.2e}")


if __name__ == "__main__":
    main()
