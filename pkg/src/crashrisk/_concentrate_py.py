"""Pure numpy univariate concentration search (fallback for the Cython kernel).

All starts advance together; each lane stops once its window is stable.
Prefix sums are sequential (``np.cumsum``), matching the compiled kernel
bit for bit.
"""
import numpy as np


def _nearest_windows(xs, centers, h):
    n = xs.shape[0]
    lo = np.zeros(centers.shape[0], dtype=np.int64)
    hi = np.full(centers.shape[0], n - h, dtype=np.int64)
    active = lo < hi
    while active.any():
        mid = (lo + hi) >> 1
        right = xs[np.minimum(mid + h, n - 1)]
        go_right = (centers - xs[mid]) > (right - centers)
        lo = np.where(active & go_right, mid + 1, lo)
        hi = np.where(active & ~go_right, mid, hi)
        active = lo < hi
    return lo


def concentrate_1d(xs, centers, h, max_steps):
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    m = centers.shape[0]
    cs = np.empty(xs.shape[0] + 1)
    cs[0] = 0.0
    np.cumsum(xs, out=cs[1:])
    inv_h = 1.0 / h

    starts = _nearest_windows(xs, centers, h)
    steps = np.zeros(m, dtype=np.int32)
    conv = np.zeros(m, dtype=np.uint8)
    live = np.arange(m)
    for _ in range(max_steps):
        if live.size == 0:
            break
        l = starts[live]
        c = (cs[l + h] - cs[l]) * inv_h
        l2 = _nearest_windows(xs, c, h)
        steps[live] += 1
        same = l2 == l
        conv[live[same]] = 1
        starts[live] = l2
        live = live[~same]
    return starts, steps, conv
