import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crashrisk.econometrics import (
    LINEAR,
    LOGIT,
    AbGmmSpec,
    InstrumentRankError,
    ModelConfig,
    RegressionSpec,
    arellano_bond,
    assemble_panel,
    build_design,
    format_table,
    from_arrays,
    gradient_check,
    logit_fit,
    long_rows,
    ols_fit,
    run_paper_models,
    size_quartiles,
    stars,
)
from crashrisk.econometrics.logit import score
from crashrisk.errors import InsufficientDataError, SeparationError, SingularDesignError
from crashrisk.simlab import gen_dynamic_panel, gen_logit


def _frame(n=200, seed=0):
    rng = np.random.default_rng(seed)
    df = pd.DataFrame({
        "y": rng.normal(size=n), "x1": rng.normal(size=n), "x2": rng.normal(size=n),
        "industry": rng.choice(["A", "B"], size=n), "year": rng.choice([2019, 2020], size=n),
    })
    return df


# ---- design

def test_two_by_two_fixed_effects():
    d = build_design(_frame(), RegressionSpec("y", ("x1",)))
    assert d.column_names == ["Intercept", "x1", "industry[B]", "year[2020]"]
    assert d.dropped_levels == {"industry": "A", "year": 2019}


def test_intercept_copy_named():
    df = _frame()
    df["one"] = 1.0
    with pytest.raises(SingularDesignError) as err:
        build_design(df, RegressionSpec("y", ("x1", "one")))
    assert "one" in err.value.columns


def test_listwise_deletion_counts():
    df = _frame()
    df.loc[5, "x2"] = np.nan
    d = build_design(df, RegressionSpec("y", ("x1", "x2")))
    assert d.n_dropped == 1 and d.X.shape[0] == len(df) - 1


def test_single_year_skips_fe_with_diagnostic():
    df = _frame()
    df["year"] = 2020
    d = build_design(df, RegressionSpec("y", ("x1",)))
    assert not any(c.startswith("year[") for c in d.column_names)
    assert any("year" in msg for msg in d.diagnostics)


def test_duplicate_column_always_rejected():
    rng = np.random.default_rng(1)
    X = np.column_stack([np.ones(50), rng.normal(size=(50, 2))])
    X = np.column_stack([X, X[:, 1] * 2.0])
    with pytest.raises(SingularDesignError):
        from_arrays(X, rng.normal(size=50))


# ---- OLS

def test_exact_line():
    x = np.arange(10.0)
    res = ols_fit(from_arrays(np.column_stack([np.ones(10), x]), 2 * x + 1))
    np.testing.assert_allclose(res.coefficients, [1.0, 2.0], atol=1e-10)
    assert res.fit_stat == pytest.approx(1.0, abs=1e-10)


def test_hand_dataset_normal_equations():
    X = np.array([[1, 1.0], [1, 2.0], [1, 4.0], [1, 5.0], [1, 7.0]])
    y = np.array([2.0, 2.5, 5.0, 4.5, 8.0])
    # normal equations by hand: X'X = [[5, 19], [19, 95]], X'y = [22, 105.5]
    xtx = np.array([[5.0, 19.0], [19.0, 95.0]])
    xty = np.array([22.0, 105.5])
    det = 5 * 95 - 19 * 19
    beta = np.array([95 * xty[0] - 19 * xty[1], -19 * xty[0] + 5 * xty[1]]) / det
    np.testing.assert_allclose(X.T @ X, xtx)
    np.testing.assert_allclose(X.T @ y, xty)
    res = ols_fit(from_arrays(X, y), robust_se="none")
    np.testing.assert_allclose(res.coefficients, beta, rtol=1e-12)


def test_robust_close_to_classical_when_homoskedastic():
    rng = np.random.default_rng(2)
    X = np.column_stack([np.ones(10_000), rng.normal(size=(10_000, 2))])
    y = X @ [1.0, 0.5, -0.3] + rng.normal(size=10_000)
    d = from_arrays(X, y)
    a, b = ols_fit(d, "none"), ols_fit(d, "hc1")
    np.testing.assert_allclose(b.standard_errors, a.standard_errors, rtol=0.1)
    c = ols_fit(d, "hc0")
    np.testing.assert_allclose(b.standard_errors ** 2, c.standard_errors ** 2 * 10_000 / 9_997, rtol=1e-12)


def test_ols_residual_orthogonality_and_stats():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(30, 300))
        X = np.column_stack([np.ones(n), rng.normal(size=(n, 3))])
        y = rng.standard_t(3, size=n)
        res = ols_fit(from_arrays(X, y))
        e = res.extra["residuals"]
        assert np.max(np.abs(X.T @ e)) < 1e-8 * n
        np.testing.assert_allclose(res.stats, res.coefficients / res.standard_errors, atol=1e-10)
        assert np.all((res.p_values >= 0) & (res.p_values <= 1))


def test_ols_needs_n_above_k():
    with pytest.raises(SingularDesignError):
        ols_fit(from_arrays(np.eye(3), np.ones(3)))


@given(st.floats(0.01, 100) | st.floats(-100, -0.01), st.integers(0, 1000))
def test_scale_equivariance_ols(c, seed):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(80), rng.normal(size=(80, 2))])
    y = X @ [0.2, 1.0, -1.0] + rng.normal(size=80)
    a = ols_fit(from_arrays(X, y))
    X2 = X.copy()
    X2[:, 2] *= c
    b = ols_fit(from_arrays(X2, y))
    assert b.coefficients[2] == pytest.approx(a.coefficients[2] / c, rel=1e-8)
    assert b.standard_errors[2] == pytest.approx(a.standard_errors[2] / abs(c), rel=1e-8)
    np.testing.assert_allclose(b.coefficients[:2], a.coefficients[:2], rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(b.p_values, a.p_values, atol=1e-8)
    np.testing.assert_allclose(X2 @ b.coefficients, X @ a.coefficients, atol=1e-8)


# ---- logit

def test_intercept_only_half():
    y = np.array([0.0, 1.0] * 50)
    res = logit_fit(from_arrays(np.ones((100, 1)), y, ["Intercept"]))
    assert abs(res.coefficients[0]) < 1e-8


def test_logit_recovers_dgp():
    X, y, beta = gen_logit(50_000, (-1.0, 2.0), seed=0)
    res = logit_fit(from_arrays(X, y))
    assert np.all(np.abs(res.coefficients - beta) < 3 * res.standard_errors)
    assert res.converged
    assert np.max(np.abs(score(X, y, res.coefficients))) < 1e-6 * len(y)
    assert 0 < res.fit_stat < 1


def test_perfect_separation():
    x = np.arange(-5.0, 5.0)
    X = np.column_stack([np.ones(10), x])
    with pytest.raises(SeparationError):
        logit_fit(from_arrays(X, (x > 0).astype(float)))


def test_single_class_rejected():
    with pytest.raises(SeparationError):
        logit_fit(from_arrays(np.column_stack([np.ones(10), np.arange(10.0)]), np.ones(10)))


def test_gradient_check_random_instances():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n, k = int(rng.integers(50, 300)), int(rng.integers(2, 6))
        X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
        y = (rng.random(n) < 0.4).astype(float)
        d = from_arrays(X, y)
        b = rng.normal(size=k) * 0.5
        assert gradient_check(d, b) < 1e-6
        perm = rng.permutation(n)
        d2 = from_arrays(X[perm], y[perm])
        assert gradient_check(d2, b) == pytest.approx(gradient_check(d, b), abs=1e-7)


def test_score_at_origin():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 3))
    y = (rng.random(40) < 0.5).astype(float)
    np.testing.assert_allclose(score(X, y, np.zeros(3)), X.T @ (y - 0.5), atol=1e-14)


@given(st.floats(0.05, 20) | st.floats(-20, -0.05), st.integers(0, 1000))
def test_scale_equivariance_logit(c, seed):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(400), rng.normal(size=(400, 2))])
    y = (rng.random(400) < 1 / (1 + np.exp(-(X @ [0.3, 0.8, -0.5])))).astype(float)
    a = logit_fit(from_arrays(X, y))
    X2 = X.copy()
    X2[:, 1] *= c
    b = logit_fit(from_arrays(X2, y))
    assert b.coefficients[1] == pytest.approx(a.coefficients[1] / c, rel=1e-8)
    assert b.standard_errors[1] == pytest.approx(a.standard_errors[1] / abs(c), rel=1e-8)
    np.testing.assert_allclose(b.coefficients[[0, 2]], a.coefficients[[0, 2]], rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(b.p_values, a.p_values, atol=1e-8)


# ---- Arellano-Bond

def _dyn(rho, seed, firm_effects=True, exog_beta=None, n=500, t=8):
    return pd.DataFrame(gen_dynamic_panel(n, t, rho, firm_effects=firm_effects, seed=seed, exog_beta=exog_beta))


@pytest.mark.parametrize("rho", [0.5, 0.0])
def test_ab_recovers_rho(rho):
    res = arellano_bond(_dyn(rho, 1), AbGmmSpec("y", (), dep_lags=1))
    assert abs(res["L1.y"] - rho) < 3 * res.se("L1.y")


def test_ab_insufficient_periods():
    with pytest.raises(InsufficientDataError):
        arellano_bond(_dyn(0.5, 2, t=2), AbGmmSpec("y", (), dep_lags=1))


def test_ab_agrees_with_differenced_ols_without_dynamics():
    df = _dyn(0.0, 3, firm_effects=False, exog_beta=1.0)
    res = arellano_bond(df, AbGmmSpec("y", ("x",), dep_lags=1))
    d = df.sort_values(["firm_id", "year"]).copy()
    g = d.groupby("firm_id")
    d["dy"], d["dx"] = g["y"].diff(), g["x"].diff()
    d = d.dropna()
    X = np.column_stack([np.ones(len(d)), d["dx"]])
    b = np.linalg.lstsq(X, d["dy"].to_numpy(), rcond=None)[0]
    assert abs(res["x"] - b[1]) < 3 * res.se("x")


def test_ab_instrument_cap_and_rank_error():
    df = _dyn(0.5, 4, n=100)
    capped = arellano_bond(df, AbGmmSpec("y", (), dep_lags=1, max_instruments_per_period=1))
    full = arellano_bond(df, AbGmmSpec("y", (), dep_lags=1))
    assert capped.extra["n_instruments"] < full.extra["n_instruments"]
    df["c"] = 0.0
    with pytest.raises(InstrumentRankError) as err:
        arellano_bond(df, AbGmmSpec("y", ("c",), dep_lags=1))
    assert err.value.counts


def test_ab_spec_validation():
    with pytest.raises(ValueError):
        AbGmmSpec("y", dep_lags=0)


# ---- model suites

def test_size_quartiles_ties_lower():
    df = pd.DataFrame({"year": [1] * 8, "SIZE": [1, 2, 3, 4, 5, 6, 7, 8.0]})
    q = size_quartiles(df).tolist()
    assert q == [1, 1, 2, 2, 3, 3, 4, 4]
    df2 = pd.DataFrame({"year": [1] * 5, "SIZE": [1.0, 1.0, 1.0, 1.0, 2.0]})
    assert size_quartiles(df2).tolist() == [1, 1, 1, 1, 4]


def _toy_frames(n_firms=60, years=(2010, 2011, 2012, 2013), seed=0):
    rng = np.random.default_rng(seed)
    rows_m, rows_s, rows_f = [], [], []
    for i in range(n_firms):
        for t in years:
            rows_m.append((f"F{i}", t, float(rng.random() < 0.4), float(rng.random() < 0.2),
                           rng.normal(), rng.normal(), rng.normal() * 0.01, abs(rng.normal()) * 0.03))
            rows_s.append((f"F{i}", t, rng.normal(), rng.normal()))
            rows_f.append((f"F{i}", t, rng.normal(6, 1), rng.lognormal(), rng.normal(0.05, 0.05),
                           rng.normal(0, 0.1), abs(rng.normal(0, 0.05)), f"I{i % 3}"))
    m = pd.DataFrame(rows_m, columns=["firm_id", "year", "NEGOUTLIER", "CRASH", "NCSKEW", "DUVOL", "RET", "SIGMA"])
    s = pd.DataFrame(rows_s, columns=["firm_id", "year", "SENT", "SENT_DETONED"])
    f = pd.DataFrame(rows_f, columns=["firm_id", "year", "SIZE", "MTB", "ROA", "DTURN", "ACCM", "industry"])
    return m, s, f


def test_assemble_panel_leads():
    m, s, f = _toy_frames(n_firms=3)
    panel = assemble_panel(m, s, f)
    row = panel[(panel.firm_id == "F1") & (panel.year == 2011)].iloc[0]
    nxt = m[(m.firm_id == "F1") & (m.year == 2012)].iloc[0]
    assert row["NEGOUTLIER_next"] == nxt["NEGOUTLIER"]
    assert np.isnan(panel[panel.year == 2013]["NCSKEW_next"]).all()


def test_run_paper_models_keys_and_tables():
    m, s, f = _toy_frames(n_firms=120, years=tuple(range(2010, 2016)))
    results, panel = run_paper_models(m, s, f, ModelConfig(threads=2))
    expected = {f"T3_{x}" for x in ("NEGOUTLIER", "CRASH", "NCSKEW", "DUVOL")}
    expected |= {f"T5_Q{q}" for q in range(1, 5)} | {"T6_ALL"} | {f"T6_Q{q}" for q in range(1, 5)}
    assert set(results) == expected
    t3 = results["T3_NEGOUTLIER"]
    assert t3.estimator.startswith("logit")
    assert "NCSKEW" in t3.names and "SENT" in t3.names
    assert "DUVOL" in results["T3_NCSKEW"].names
    assert results["T3_DUVOL"].estimator.startswith("ols")
    assert "SENT_DETONED" in results["T6_ALL"].names
    t5 = results["T5_Q1"]
    assert t5.names[:2] == ["L1.NEGOUTLIER", "L2.NEGOUTLIER"]
    rows = list(long_rows(results))
    assert all(len(r) == 7 for r in rows)
    text = format_table(results, sorted(results), "t")
    assert "Industry FE" in text and "industry[" not in text
    single, _ = run_paper_models(m[m.year == 2012], s, f, ModelConfig(suites=("table3",)))
    # single year: no t+1 rows, so every model reports an error instead of raising
    assert all(isinstance(v, Exception) for v in single.values())


def test_single_year_fe_diagnostic_in_models():
    m, s, f = _toy_frames(n_firms=200, years=(2010, 2011))
    results, _ = run_paper_models(m, s, f, ModelConfig(suites=("table3",)))
    res = results["T3_NCSKEW"]
    assert not any(n.startswith("year[") for n in res.names)
    assert any("year" in note for note in res.notes)


def test_stars():
    assert [stars(p) for p in (0.001, 0.03, 0.07, 0.2)] == ["***", "**", "*", ""]


def test_null_dgp_rarely_significant():
    from crashrisk.config import build_config
    from crashrisk.pipeline import analyze_in_memory
    from crashrisk.simlab import SimConfig, simulate
    cfg = build_config()
    hits = 0
    for r in range(100):
        sim = simulate(SimConfig(n_firms=150, n_years=4, crash_prob=0.2, crash_magnitude=8.0,
                                 sentiment_effect=0.0, seed=5000 + r))
        res, _ = run_paper_models(*analyze_in_memory(sim.returns, sim.fundamentals, cfg),
                                  ModelConfig(suites=("table3",)))
        hits += res["T3_NEGOUTLIER"].pvalue("SENT") < 0.05
    assert hits <= 10
