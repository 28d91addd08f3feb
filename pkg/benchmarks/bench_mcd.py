"""Compare the compiled and pure-python concentration kernels.

    python3 benchmarks/bench_mcd.py --sizes 52 260 1000 --starts 500 --repeat 5

Reports the best-of-N wall time per call for the raw kernel and for a full
univariate fast_mcd fit, and checks that both backends return identical
windows.
"""
import argparse
import timeit

import numpy as np

from crashrisk import _backend
from crashrisk.mcd import McdConfig, fast_mcd, half_sample_size


def _kernels():
    out = {"python": _backend.get_kernel("python")}
    try:
        out["compiled"] = _backend.get_kernel("compiled")
    except ImportError:
        pass
    return out


def bench(sizes, starts, repeat, seed):
    kernels = _kernels()
    rng = np.random.default_rng(seed)
    print(f"{'n':>6} {'what':>8} " + " ".join(f"{k:>12}" for k in kernels) + "   speedup")
    for n in sizes:
        x = np.sort(rng.standard_t(4, size=n))
        h = half_sample_size(n, 1)
        centers = rng.choice(x, size=starts)
        ref = None
        row = {}
        for name, fn in kernels.items():
            got = fn(x, centers, h, 100)
            if ref is None:
                ref = got
            else:
                assert all(np.array_equal(a, b) for a, b in zip(ref, got)), f"backends disagree at n={n}"
            row[name] = min(timeit.repeat(lambda: fn(x, centers, h, 100), number=1, repeat=repeat))
        _line(n, "kernel", row)

        cfg = McdConfig(n_starts=starts, exhaustive_threshold=0)
        row = {}
        for name in kernels:
            row[name] = min(timeit.repeat(
                lambda: fast_mcd(x, cfg, rng=np.random.default_rng(0), backend=name), number=1, repeat=repeat))
        _line(n, "fast_mcd", row)


def _line(n, what, row):
    cells = " ".join(f"{row[k] * 1e3:10.3f}ms" for k in row)
    speed = f"{row['python'] / row['compiled']:8.1f}x" if "compiled" in row else "     n/a"
    print(f"{n:>6} {what:>8} {cells} {speed}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[52, 260, 1000, 5000])
    ap.add_argument("--starts", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    bench(args.sizes, args.starts, args.repeat, args.seed)


if __name__ == "__main__":
    main()
