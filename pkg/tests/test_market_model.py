import math

import numpy as np
import pytest

from crashrisk.errors import DataError, InsufficientDataError, SingularDesignError
from crashrisk.market_model import (
    MarketIndex,
    build_firm_year_slices,
    firm_specific_return,
    fit_all,
    fit_expanded_market_model,
)
from crashrisk.panel import FirmWeekRecord
from crashrisk.simlab import year_weeks


def _firm(rng, weeks, market, coefs=(0.001, 0.1, 0.2, 1.1, -0.1, 0.05), noise=0.02, firm="A"):
    m = np.asarray(market)
    recs = []
    for i, w in enumerate(weeks):
        if 2 <= i < len(weeks) - 2:
            mu = coefs[0] + np.dot(coefs[1:], m[i - 2:i + 3])
        else:
            mu = coefs[0]
        recs.append(FirmWeekRecord(firm, w, float(mu + noise * rng.normal()), float(m[i])))
    return recs


def _normal_equations(recs, market):
    """Oracle: build the lead/lag design by hand and solve X'X b = X'y."""
    weeks = sorted(market)
    pos = {w: i for i, w in enumerate(weeks)}
    rows, y = [], []
    for r in sorted(recs, key=lambda r: r.week):
        i = pos[r.week]
        if i < 2 or i + 2 >= len(weeks):
            continue
        rows.append([1.0] + [market[weeks[i + k]] for k in (-2, -1, 0, 1, 2)])
        y.append(r.ret)
    X, y = np.array(rows), np.array(y)
    return np.linalg.solve(X.T @ X, X.T @ y), X, y


def test_recovers_exact_coefficients():
    rng = np.random.default_rng(1)
    weeks = year_weeks(2020, 52)
    market = rng.normal(0, 0.02, 52)
    coefs = (0.002, 0.3, -0.2, 1.4, 0.1, 0.05)
    recs = _firm(rng, weeks, market, coefs, noise=0.0)
    fit = fit_expanded_market_model(recs, dict(zip(weeks, market)))
    assert fit.alpha == pytest.approx(coefs[0], abs=1e-12)
    np.testing.assert_allclose(fit.betas, coefs[1:], atol=1e-10)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.n_obs == 48 and fit.n_excluded == 4


def test_matches_normal_equations_and_orthogonality():
    rng = np.random.default_rng(2)
    weeks = year_weeks(2019, 52) + year_weeks(2020, 52)
    market = rng.normal(0.001, 0.02, len(weeks))
    series = dict(zip(weeks, market))
    for k in range(20):
        recs = _firm(rng, weeks, market, rng.normal(0, 0.5, 6), noise=0.03, firm=f"F{k}")
        fit = fit_expanded_market_model(recs, series)
        beta, X, y = _normal_equations(recs, series)
        np.testing.assert_allclose(np.r_[fit.alpha, fit.betas], beta, rtol=1e-8, atol=1e-10)
        assert np.max(np.abs(X.T @ fit.residuals)) < 1e-8 * len(y)


def test_constant_market_is_singular():
    weeks = year_weeks(2020, 30)
    recs = [FirmWeekRecord("A", w, 0.01 * i, 0.0) for i, w in enumerate(weeks)]
    with pytest.raises(SingularDesignError):
        fit_expanded_market_model(recs, {w: 0.0 for w in weeks})


def test_too_few_weeks():
    weeks = year_weeks(2020, 8)
    recs = [FirmWeekRecord("A", w, 0.01, 0.01 * i) for i, w in enumerate(weeks)]
    with pytest.raises(InsufficientDataError):
        fit_expanded_market_model(recs, {r.week: r.market_ret for r in recs})


def test_window_by_position_skips_missing_weeks():
    weeks = year_weeks(2020, 10)
    series = {w: float(i) for i, w in enumerate(weeks) if i != 5}
    idx = MarketIndex(series)
    # weeks[6] sits at position 5 once weeks[5] is missing
    np.testing.assert_array_equal(idx.window(weeks[6]), [3.0, 4.0, 6.0, 7.0, 8.0])
    assert idx.window(weeks[1]) is None


def test_firm_specific_return():
    assert firm_specific_return(0.0) == 0.0
    assert firm_specific_return(math.e - 1) == pytest.approx(1.0)
    with pytest.raises(DataError):
        firm_specific_return(-1.0)


def test_slices_group_by_year():
    rng = np.random.default_rng(3)
    weeks = year_weeks(2019, 52) + year_weeks(2020, 6)
    market = rng.normal(0, 0.02, len(weeks))
    recs = _firm(rng, weeks, market)
    fits, failures = fit_all(recs, dict(zip(weeks, market)))
    assert not failures
    slices, diags = build_firm_year_slices(fits, min_weeks_per_year=5)
    # 2020 keeps only 4 weeks with a full market window
    assert [s.year for s in slices] == [2019]
    s = slices[0]
    assert s.n == 50
    np.testing.assert_allclose(s.w, np.log1p(fits[0].residuals[:50]))
    assert s.sigma == pytest.approx(np.std(s.w, ddof=1))
    assert any("2020" in d for d in diags)
