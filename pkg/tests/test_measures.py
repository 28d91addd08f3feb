import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crashrisk.errors import InsufficientDataError, UndefinedMeasureError
from crashrisk.market_model import FirmYearSlice
from crashrisk.measures import UP_DOWN, compute_all, crash_indicator, duvol, ncskew


def ncskew_oracle(w):
    n = len(w)
    m = sum(w) / n
    s2 = sum((x - m) ** 2 for x in w)
    s3 = sum((x - m) ** 3 for x in w)
    return -(n * (n - 1) ** 1.5 * s3) / ((n - 1) * (n - 2) * s2 ** 1.5)


def duvol_oracle(w):
    m = sum(w) / len(w)
    up = [x - m for x in w if x > m]
    down = [x - m for x in w if x < m]
    return math.log(((len(up) - 1) * sum(d * d for d in down)) / ((len(down) - 1) * sum(u * u for u in up)))


def _slice(w, firm="A", year=2020):
    w = np.asarray(w, dtype=float)
    return FirmYearSlice(firm, year, tuple(f"w{i}" for i in range(len(w))), w, float(w.mean()),
                         float(w.std(ddof=1)))


def test_ncskew_symmetric_zero():
    assert abs(ncskew([-2, -1, 0, 1, 2])) < 1e-12


def test_ncskew_hand_value():
    # deviations (-1, -1, 2): sum d^2 = 6, sum d^3 = 6, n = 3 -> -sqrt(3)
    assert ncskew([0.0, 0.0, 3.0]) == pytest.approx(-math.sqrt(3), rel=1e-14)


def test_ncskew_left_tail_positive():
    w = [-0.5, 0.1, 0.1, 0.1, 0.2]
    v = ncskew(w)
    assert v > 0
    assert v == pytest.approx(ncskew_oracle(w), rel=1e-12)


def test_ncskew_errors():
    with pytest.raises(InsufficientDataError):
        ncskew([1.0, 2.0])
    with pytest.raises(UndefinedMeasureError):
        ncskew([1.0, 1.0, 1.0])


def test_duvol_mirror_zero():
    assert abs(duvol([-3.0, -1.0, 1.0, 3.0])) < 1e-12


def test_duvol_hand_value():
    # up (1, 2, 3): sum 14, n_u 3; down (-4, -2): sum 20, n_d 2
    assert duvol([-4.0, -2.0, 1.0, 2.0, 3.0]) == pytest.approx(math.log(40 / 14), rel=1e-14)


def test_duvol_four_to_one():
    # five up weeks at +1 and five down weeks (-a, -b, -b, -b, -b) with
    # a + 4b = 5 and a^2 + 4b^2 = 20, so the deviations sum to zero and the
    # down-side sum of squares is exactly four times the up-side one
    b = 1.0 - math.sqrt(3.0) / 2.0
    a = 1.0 + 2.0 * math.sqrt(3.0)
    w = [1.0] * 5 + [-a] + [-b] * 4
    assert sum(w) == pytest.approx(0.0, abs=1e-12)
    assert duvol(w) == pytest.approx(math.log(4.0), abs=1e-12)
    assert duvol(w) == pytest.approx(duvol_oracle(w), rel=1e-12)


def test_duvol_errors():
    with pytest.raises(InsufficientDataError):
        duvol([0.0, 1.0, 2.0, 10.0])  # one up week


def test_crash_constant_and_boundary():
    assert crash_indicator(np.zeros(52)) == 0
    w = np.zeros(52)
    w[0] = -1.0
    m, sd = w.mean(), w.std(ddof=1)
    assert crash_indicator(w, k=(m - w[0]) / sd) == 0  # exactly at the threshold
    assert crash_indicator(w, k=(m - w[0]) / sd * (1 - 1e-9)) == 1


def test_crash_injected():
    rng = np.random.default_rng(0)
    for _ in range(50):
        w = rng.normal(0, 0.02, 52)
        w[int(rng.integers(52))] = -0.2
        assert w.min() < w.mean() - 3.2 * w.std(ddof=1)
        assert crash_indicator(w) == 1


def test_oracles_random():
    rng = np.random.default_rng(1)
    for _ in range(200):
        w = (rng.standard_t(4, size=int(rng.integers(8, 60))) * 0.03).tolist()
        assert ncskew(w) == pytest.approx(ncskew_oracle(w), rel=1e-10, abs=1e-12)
        m = sum(w) / len(w)
        if sum(x > m for x in w) >= 2 and sum(x < m for x in w) >= 2:
            assert duvol(w) == pytest.approx(duvol_oracle(w), rel=1e-10, abs=1e-12)


_w = arrays(np.float64, st.integers(6, 60), elements=st.floats(-0.5, 0.5))


@given(_w, st.floats(-1, 1), st.floats(0.01, 100))
def test_location_scale_invariance(w, shift, scale):
    if np.ptp(w) < 1e-6:
        return
    try:
        base = (ncskew(w), duvol(w))
    except (InsufficientDataError, UndefinedMeasureError):
        return
    moved = scale * w + shift
    if np.ptp(moved - moved.mean()) == 0:
        return
    # shifting can move a week across the mean only through rounding; skip those
    d0, d1 = w - w.mean(), moved - moved.mean()
    if not np.array_equal(np.sign(d0), np.sign(d1)):
        return
    assert ncskew(moved) == pytest.approx(base[0], rel=1e-7, abs=1e-8)
    assert duvol(moved) == pytest.approx(base[1], rel=1e-7, abs=1e-8)
    assert crash_indicator(moved) == crash_indicator(w) or abs(
        w.min() - (w.mean() - 3.2 * w.std(ddof=1))) < 1e-9


@given(_w)
def test_odd_symmetry(w):
    try:
        a = ncskew(w)
    except (InsufficientDataError, UndefinedMeasureError):
        return
    assert ncskew(-w) == pytest.approx(-a, abs=1e-10)
    try:
        b = duvol(w)
    except (InsufficientDataError, UndefinedMeasureError):
        return
    assert duvol(-w) == pytest.approx(-b, abs=1e-10)


def test_injection_raises_ncskew_and_crash():
    rng = np.random.default_rng(2)
    for _ in range(100):
        w = rng.normal(0, 0.02, 52)
        before_n, before_c = ncskew(w), crash_indicator(w)
        if before_c:
            continue
        w2 = w.copy()
        w2[int(rng.integers(52))] = w.mean() - 12 * w.std(ddof=1)
        assert ncskew(w2) >= before_n
        assert crash_indicator(w2) == 1


def test_compute_all_clean():
    w = np.random.default_rng(3).normal(0, 0.02, 52)
    m = compute_all(_slice(w), rng=np.random.default_rng(0))
    for v in (m.negoutlier, m.crash, m.ncskew, m.duvol):
        assert not math.isnan(v)
    assert m.missing == {}
    assert m.n_up + m.n_down <= m.n_weeks


def test_compute_all_short_slice():
    m = compute_all(_slice([0.01, -0.02, 0.03, -0.01]))
    assert math.isnan(m.negoutlier) and m.missing["negoutlier"] == "insufficient_weeks"
    assert not math.isnan(m.ncskew) and not math.isnan(m.crash)


def test_compute_all_duvol_reason():
    m = compute_all(_slice([0.0, 0.01, 0.02, 0.015, 0.5]))
    assert math.isnan(m.duvol)
    assert m.missing["duvol"] == UP_DOWN
