"""Compare the compiled and numpy kernel backends on typical batch shapes.

    python benchmarks/bench_kernels.py [--repeat 200] [--batch 16 64 256]
"""
import argparse
import timeit

import numpy as np

from adaligner.kernels import _reference

try:
    from adaligner.kernels import _fast
except ImportError:
    _fast = None


def cases(n: int, rng):
    S = rng.uniform(-1, 1, (n, n))
    P = _reference.softmax_rows(rng.uniform(-1, 1, (n, n)), 0.379)
    Q = _reference.softmax_rows(rng.uniform(-1, 1, (n, n)), 0.379)
    w = rng.uniform(0, 1, n)
    u = rng.uniform(0, 1, n)
    pos, neg = rng.normal(size=4 * n), rng.normal(size=4 * n)
    return {
        "softmax_rows": lambda m: m.softmax_rows(S, 0.379),
        "clip_loss_grad": lambda m: m.clip_loss_grad(S, 0.379),
        "soft_loss_grad": lambda m: m.soft_loss_grad(S, P, Q, 0.379, 1e-12),
        "sample_without_replacement": lambda m: m.sample_without_replacement(w, int(0.9 * n), u),
        "pairwise_auc": lambda m: m.pairwise_auc(pos, neg),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--batch", type=int, nargs="+", default=[16, 64, 256])
    args = ap.parse_args(argv)
    if _fast is None:
        print("compiled extension not built; only the numpy backend is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'N':>5s} {'numpy us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for n in args.batch:
        for name, fn in cases(n, rng).items():
            ref = min(timeit.repeat(lambda: fn(_reference), number=args.repeat, repeat=3)) / args.repeat * 1e6
            if _fast is None:
                print(f"{name:28s} {n:5d} {ref:10.1f} {'-':>10s} {'-':>8s}")
                continue
            fast = min(timeit.repeat(lambda: fn(_fast), number=args.repeat, repeat=3)) / args.repeat * 1e6
            print(f"{name:28s} {n:5d} {ref:10.1f} {fast:10.1f} {ref / fast:7.2f}x")


if __name__ == "__main__":
    main()
