"""Pipeline stages. Each stage reads its inputs from disk and writes its
artifacts atomically, so running the stages one by one gives the same
bytes as running the whole chain.

Artifacts under the output directory:

    ingest      clean_returns.csv, fundamentals_clean.csv,
                cleaning_report.csv, ingest_diagnostics.csv
    residuals   residuals.csv, market_model.csv, residual_diagnostics.csv
    measures    measures.csv, mcd_slices.csv, mcd_audit.csv,
                plot_distance_hist.csv, plot_flag_rate.csv
    sentiment   sentiment.csv, sentiment_pca.csv
    regress     regression_results.csv, regression_status.csv,
                regression_tables.txt, plot_coef_forest.csv
    (all)       manifest.json
"""
from __future__ import annotations

import json
import logging
import math
import platform
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from . import __version__, _backend
from ._io import atomic_write_text, read_csv, write_csv
from .config import check_inputs, config_hash, mcd_config
from .econometrics.models import ModelConfig, run_paper_models
from .econometrics.results import RegressionResult, format_table, long_rows
from .errors import DataError
from .market_model import FirmYearSlice, fit_all
from .mcd import chi2_cutoff, slice_seed
from .measures import compute_all
from .panel import (
    FirmWeekRecord,
    apply_cleaning_filters,
    load_fundamentals,
    load_returns,
    market_series,
    week_year,
    write_fundamentals,
    write_returns,
)
from .sentiment import LABELS, build_sentiment_table

log = logging.getLogger(__name__)

STAGES = ("ingest", "residuals", "measures", "sentiment", "regress")
MEASURE_COLUMNS = ("firm_id", "year", "NEGOUTLIER", "CRASH", "NCSKEW", "DUVOL", "RET", "SIGMA",
                   "n_weeks", "n_up", "n_down", "missing", "notes",
                   "NEGOUTLIER_next", "CRASH_next", "NCSKEW_next", "DUVOL_next")
FLAG_RATE_GRID = (0.9, 0.925, 0.95, 0.975, 0.99, 0.995, 0.999)


def _out(cfg):
    return Path(cfg["output_dir"])


def _need(path):
    if not Path(path).is_file():
        raise DataError(f"missing upstream artifact: {str(path)!r}")
    return path


# ------------------------------------------------------------------ manifest

def _update_manifest(cfg, stage, seconds, counts):
    path = _out(cfg) / "manifest.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError):
        manifest = {}
    manifest.update({
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "versions": {
            "crashrisk": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "pandas": pd.__version__,
        },
        "backend": _backend.BACKEND,
    })
    manifest.setdefault("stages", {})[stage] = {"seconds": round(seconds, 6), "rows": counts}
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _timed(stage):
    def wrap(fn):
        def run(cfg):
            t0 = time.perf_counter()
            counts = fn(cfg)
            _update_manifest(cfg, stage, time.perf_counter() - t0, counts)
            log.info("%s done: %s", stage, counts)
            return counts
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


# -------------------------------------------------------------------- stages

@_timed("ingest")
def ingest(cfg):
    """Load and clean both input files."""
    check_inputs(cfg)
    out = _out(cfg)
    ret = load_returns(cfg["inputs"]["returns"], cfg["columns"]["returns"] or None)
    fund = load_fundamentals(cfg["inputs"]["fundamentals"], cfg["columns"]["fundamentals"] or None)
    f = cfg["filters"]
    kept, report = apply_cleaning_filters(
        ret.records, float(f["min_nonzero_frac"]), int(f["min_weeks_per_year"]),
        invalid_rows=len(ret.diagnostics))
    write_returns(kept, out / "clean_returns.csv")
    rows = sorted(fund.records, key=lambda r: r.key)
    write_fundamentals(rows, out / "fundamentals_clean.csv")
    write_csv(out / "cleaning_report.csv", ("item", "count"), report.as_rows())
    diags = [("returns", d.row, d.column, d.message) for d in ret.diagnostics]
    diags += [("fundamentals", d.row, d.column, d.message) for d in fund.diagnostics]
    write_csv(out / "ingest_diagnostics.csv", ("file", "row", "column", "message"), diags)
    return {"returns_in": len(ret.records) + len(ret.diagnostics), "returns_out": len(kept),
            "fundamentals": len(rows), "diagnostics": len(diags), "firms_out": report.firms_out}


def _read_returns(path):
    header, body = read_csv(_need(path))
    i = {h: k for k, h in enumerate(header)}
    return [FirmWeekRecord(r[i["firm_id"]], r[i["week"]], float(r[i["ret"]]), float(r[i["market_ret"]]))
            for r in body]


@_timed("residuals")
def residuals(cfg):
    """Expanded market model per firm, then W = ln(1 + residual)."""
    out = _out(cfg)
    records = _read_returns(out / "clean_returns.csv")
    market = market_series(records)
    fits, failures = fit_all(records, market, min_weeks=int(cfg["market_model"]["min_weeks"]))
    rows, diags, model_rows = [], [], []
    for fit in fits:
        model_rows.append((fit.firm_id, fit.alpha, *fit.betas, fit.r_squared, fit.n_obs, fit.n_excluded))
        for week, eps in zip(fit.weeks, fit.residuals):
            eps = float(eps)
            if 1.0 + eps <= 0.0:
                diags.append((fit.firm_id, week, f"residual {eps!r} <= -1, week dropped"))
                continue
            rows.append((fit.firm_id, week, week_year(week), eps, math.log1p(eps)))
    for firm, msg in sorted(failures.items()):
        diags.append((firm, "", msg))
    write_csv(out / "residuals.csv", ("firm_id", "week", "year", "residual", "w"), rows, precise=True)
    write_csv(out / "market_model.csv",
              ("firm_id", "alpha", "beta_m2", "beta_m1", "beta_0", "beta_p1", "beta_p2",
               "r_squared", "n_obs", "n_excluded"), model_rows, precise=True)
    write_csv(out / "residual_diagnostics.csv", ("firm_id", "week", "message"), diags)
    return {"firms_fitted": len(fits), "firms_failed": len(failures), "weeks": len(rows)}


def read_slices(path, min_weeks_per_year):
    header, body = read_csv(_need(path))
    i = {h: k for k, h in enumerate(header)}
    groups = defaultdict(lambda: ([], []))
    for r in body:
        wk, vals = groups[(r[i["firm_id"]], int(r[i["year"]]))]
        wk.append(r[i["week"]])
        vals.append(float(r[i["w"]]))
    slices, dropped = [], 0
    for key in sorted(groups):
        wk, vals = groups[key]
        if len(vals) < min_weeks_per_year:
            dropped += 1
            continue
        w = np.asarray(vals)
        slices.append(FirmYearSlice(key[0], key[1], tuple(wk), w, float(np.mean(w)),
                                    float(np.std(w, ddof=1)) if len(w) > 1 else math.nan))
    return slices, dropped


def _measure_one(args):
    s, mcfg, crash_sigma, seed = args
    rng = np.random.default_rng(slice_seed(seed, s.firm_id, s.year))
    return compute_all(s, mcfg, crash_sigma=crash_sigma, rng=rng)


@_timed("measures")
def measures(cfg):
    """NEGOUTLIER, CRASH, NCSKEW and DUVOL for every firm-year."""
    out = _out(cfg)
    slices, dropped = read_slices(out / "residuals.csv", int(cfg["filters"]["min_weeks_per_year"]))
    mcfg = mcd_config(cfg)
    jobs = [(s, mcfg, float(cfg["crash_sigma"]), int(cfg["seed"])) for s in slices]
    threads = int(cfg["threads"])
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(_measure_one, jobs))
    else:
        results = [_measure_one(j) for j in jobs]

    by_key = {m.key: m for m in results}
    rows, audit, per_slice, all_d2 = [], [], [], []
    for s, m in zip(slices, results):
        nxt = by_key.get((m.firm_id, m.year + 1))
        lead = (nxt.negoutlier, nxt.crash, nxt.ncskew, nxt.duvol) if nxt else (math.nan,) * 4
        rows.append((m.firm_id, m.year, m.negoutlier, m.crash, m.ncskew, m.duvol, s.ret_mean, s.sigma,
                     m.n_weeks, m.n_up, m.n_down,
                     ";".join(f"{k}:{v}" for k, v in sorted(m.missing.items())),
                     ";".join(f"{k}:{v}" for k, v in sorted(m.notes.items())), *lead))
        fit = m.mcd_fit
        if fit is None:
            continue
        per_slice.append((s.firm_id, s.year, fit.n, fit.h, fit.raw_determinant, float(fit.location[0]),
                          float(fit.scatter[0, 0]), fit.correction, fit.cutoff, int(fit.flags.sum()),
                          m.negoutlier, fit.method, int(fit.converged)))
        support = set(int(j) for j in fit.support)
        for j, week in enumerate(s.weeks):
            audit.append((s.firm_id, s.year, week, float(s.w[j]), float(fit.distances[j]),
                          int(fit.flags[j]), int(j in support)))
        all_d2.append(fit.distances)
    write_csv(out / "measures.csv", MEASURE_COLUMNS, rows, precise=True)
    write_csv(out / "mcd_slices.csv",
              ("firm_id", "year", "n", "h", "raw_determinant", "location", "scatter", "correction",
               "cutoff", "n_flags", "negoutlier", "method", "converged"), per_slice, precise=True)
    write_csv(out / "mcd_audit.csv",
              ("firm_id", "year", "week", "w", "robust_distance_sq", "flag", "in_support"),
              audit, precise=True)
    _plot_distances(out, all_d2)
    return {"firm_years": len(rows), "slices_dropped": dropped, "audit_rows": len(audit)}


def _plot_distances(out, all_d2):
    d2 = np.concatenate(all_d2) if all_d2 else np.empty(0)
    edges = np.linspace(0.0, 20.0, 41)
    counts, _ = np.histogram(np.minimum(d2, edges[-1]), bins=edges)
    write_csv(out / "plot_distance_hist.csv", ("bin_lo", "bin_hi", "count"),
              ((float(a), float(b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts)))
    rows = []
    for q in FLAG_RATE_GRID:
        cut = chi2_cutoff(q, 1)
        rate = float(np.mean(d2 > cut)) if d2.size else math.nan
        rows.append((q, cut, rate, 1.0 - q))
    write_csv(out / "plot_flag_rate.csv", ("quantile", "cutoff", "flag_rate", "nominal_rate"), rows)


@_timed("sentiment")
def sentiment(cfg):
    """SENT and detoned SENT per firm-year from the seven inputs."""
    out = _out(cfg)
    fund = load_fundamentals(_need(out / "fundamentals_clean.csv")).records
    s = cfg["sentiment"]
    table = build_sentiment_table(fund, mode=s["mode"], winsorize=s["winsorize"])
    rows = []
    for key, a, b in zip(table.keys, table.sent, table.sent_detoned):
        rows.append((key[0], key[1], float(a), float(b) if s["detone"] else math.nan,
                     table.mode, table.reasons.get(key, "")))
    write_csv(out / "sentiment.csv", ("firm_id", "year", "SENT", "SENT_DETONED", "mode", "reason"),
              rows, precise=True)
    res = table.pca
    pca_rows = []
    for c in range(len(res.eigenvalues)):
        pca_rows.append((c + 1, float(res.eigenvalues[c]), float(res.shares[c]),
                         *[float(v) for v in res.eigenvectors[:, c]]))
    pca_rows.append(("weights", math.nan, math.nan, *[float(v) for v in table.loadings.weights]))
    write_csv(out / "sentiment_pca.csv", ("component", "eigenvalue", "share", *LABELS), pca_rows)
    return {"firm_years": len(rows), "missing": len(table.reasons)}


def _frames(out):
    m = pd.read_csv(_need(out / "measures.csv"), dtype={"firm_id": str}, float_precision="round_trip",
                    keep_default_na=False, na_values=[""])
    s = pd.read_csv(_need(out / "sentiment.csv"), dtype={"firm_id": str}, float_precision="round_trip",
                    keep_default_na=False, na_values=[""])
    f = pd.read_csv(_need(out / "fundamentals_clean.csv"), dtype={"firm_id": str, "industry": str},
                    float_precision="round_trip", keep_default_na=False, na_values=["", "nan"])
    measures_df = m[["firm_id", "year", "NEGOUTLIER", "CRASH", "NCSKEW", "DUVOL", "RET", "SIGMA"]]
    sent_df = s[["firm_id", "year", "SENT", "SENT_DETONED"]]
    fund_df = f.rename(columns={"fiscal_year": "year", "size": "SIZE", "mtb": "MTB", "roa": "ROA",
                                "dturn": "DTURN", "accm": "ACCM"})
    fund_df = fund_df[["firm_id", "year", "SIZE", "MTB", "ROA", "DTURN", "ACCM", "industry"]]
    return measures_df, sent_df, fund_df


@_timed("regress")
def regress(cfg):
    """Pooled crash regressions, size-quartile dynamic panels, detoned rerun."""
    out = _out(cfg)
    measures_df, sent_df, fund_df = _frames(out)
    r = cfg["regression"]
    suites = tuple(r["suites"])
    if not cfg["sentiment"]["detone"]:
        suites = tuple(x for x in suites if x != "table6")
    mc = ModelConfig(suites=suites, robust_se=r["robust_se"], ab_dep_lags=int(r["ab_dep_lags"]),
                     ab_max_instruments=r["ab_max_instruments"], threads=int(cfg["threads"]))
    results, panel = run_paper_models(measures_df, sent_df, fund_df, mc)
    write_results(out, results)
    ok = sum(isinstance(v, RegressionResult) for v in results.values())
    return {"panel_rows": len(panel), "models_ok": ok, "models_failed": len(results) - ok}


def write_results(out, results):
    write_csv(out / "regression_results.csv", ("model", "term", "coefficient", "se", "stat", "p", "stars"),
              long_rows(results))
    status = []
    for name in sorted(results):
        res = results[name]
        if isinstance(res, RegressionResult):
            status.append((name, "ok", res.estimator, res.n_obs, res.fit_stat, int(res.converged),
                           " | ".join(res.notes)))
        else:
            status.append((name, "error", type(res).__name__, 0, math.nan, 0, str(res)))
    write_csv(out / "regression_status.csv",
              ("model", "status", "estimator", "n_obs", "fit_stat", "converged", "message"), status)
    groups = (("Crash measures on lagged sentiment (pooled, industry and year effects)", "T3_"),
              ("Dynamic panel by size quartile (NEGOUTLIER)", "T5_"),
              ("Detoned sentiment (NEGOUTLIER logit)", "T6_"))
    text = []
    for title, prefix in groups:
        models = sorted(m for m in results if m.startswith(prefix))
        if models:
            text.append(format_table(results, models, title))
    atomic_write_text(out / "regression_tables.txt", "\n".join(text))
    forest = []
    for model, term, b, se, _, p, _ in long_rows(results):
        if term.startswith(("industry[", "year[")):
            continue
        forest.append((model, term, b, b - 1.959963984540054 * se, b + 1.959963984540054 * se, p))
    write_csv(out / "plot_coef_forest.csv", ("model", "term", "coefficient", "ci_lo", "ci_hi", "p"), forest)


STAGE_FUNCS = {"ingest": ingest, "residuals": residuals, "measures": measures,
               "sentiment": sentiment, "regress": regress}


def run_pipeline(cfg):
    check_inputs(cfg)
    return {name: STAGE_FUNCS[name](cfg) for name in STAGES}


def analyze_in_memory(records, fundamentals, cfg):
    """The ingest..sentiment stages without touching disk.

    Returns the (measures, sentiment, fundamentals) frames that the
    regress stage would read. Intermediates on disk are written at full
    precision, so both routes give the same values.
    """
    f = cfg["filters"]
    kept, _ = apply_cleaning_filters(records, float(f["min_nonzero_frac"]), int(f["min_weeks_per_year"]))
    fits, _ = fit_all(kept, market_series(kept), min_weeks=int(cfg["market_model"]["min_weeks"]))
    from .market_model import build_firm_year_slices
    slices, _ = build_firm_year_slices(fits, int(f["min_weeks_per_year"]))
    slices.sort(key=lambda s: s.key)
    mcfg = mcd_config(cfg)
    rows = []
    for s in slices:
        m = _measure_one((s, mcfg, float(cfg["crash_sigma"]), int(cfg["seed"])))
        rows.append((m.firm_id, m.year, m.negoutlier, m.crash, m.ncskew, m.duvol, s.ret_mean, s.sigma))
    measures_df = pd.DataFrame(rows, columns=["firm_id", "year", "NEGOUTLIER", "CRASH", "NCSKEW",
                                              "DUVOL", "RET", "SIGMA"])
    fund = sorted(fundamentals, key=lambda r: r.key)
    s = cfg["sentiment"]
    table = build_sentiment_table(fund, mode=s["mode"], winsorize=s["winsorize"])
    sent_df = pd.DataFrame({"firm_id": [k[0] for k in table.keys], "year": [k[1] for k in table.keys],
                            "SENT": table.sent, "SENT_DETONED": table.sent_detoned})
    fund_df = pd.DataFrame({"firm_id": [r.firm_id for r in fund], "year": [r.fiscal_year for r in fund],
                            "SIZE": [r.size for r in fund], "MTB": [r.mtb for r in fund],
                            "ROA": [r.roa for r in fund], "DTURN": [r.dturn for r in fund],
                            "ACCM": [r.accm for r in fund], "industry": [r.industry for r in fund]})
    return measures_df, sent_df, fund_df
