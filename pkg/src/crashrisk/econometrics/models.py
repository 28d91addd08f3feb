"""The model suites: pooled crash regressions, size-quartile dynamic panels,
and the detoned-sentiment rerun.

Every suite regresses a crash measure dated t+1 on regressors dated t.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..errors import CrashRiskError
from .design import LINEAR, LOGIT, RegressionSpec, build_design
from .gmm import AbGmmSpec, arellano_bond
from .linear import ols_fit
from .logit import logit_fit

log = logging.getLogger(__name__)

MEASURES = ("NEGOUTLIER", "CRASH", "NCSKEW", "DUVOL")
CONTROLS = ("RET", "SIZE", "MTB", "ROA", "SIGMA", "SENT", "DTURN", "ACCM")
AB_CONTROLS = ("RET", "SIZE", "MTB", "ROA", "SIGMA", "SENT", "DTURN", "NCSKEW")
SUITES = ("table3", "table5", "table6")


@dataclass(frozen=True)
class ModelConfig:
    suites: tuple = SUITES
    robust_se: str = "hc1"
    ab_dep_lags: int = 2
    ab_max_instruments: int | None = None
    threads: int = 1

    def __post_init__(self):
        bad = set(self.suites) - set(SUITES)
        if bad:
            raise ValueError(f"unknown suite(s): {', '.join(sorted(bad))}")


def lead_name(measure):
    return f"{measure}_next"


def size_quartiles(frame, size="SIZE", by="year"):
    """Quartile 1..4 of ``size`` within each ``by`` group.

    Cuts are the 25/50/75 empirical percentiles (linear interpolation);
    a value equal to a cut falls in the lower quartile.
    """
    out = pd.Series(np.nan, index=frame.index)
    for _, g in frame.groupby(by, sort=True):
        x = g[size]
        ok = x.notna()
        if not ok.any():
            continue
        cuts = np.percentile(x[ok].to_numpy(dtype=float), [25, 50, 75])
        q = 1 + np.searchsorted(cuts, x[ok].to_numpy(dtype=float), side="left")
        out.loc[x[ok].index] = q
    return out


def assemble_panel(measures, sentiment, fundamentals):
    """One row per (firm_id, year) with t-dated regressors and t+1 leads.

    ``measures``: firm_id, year, NEGOUTLIER, CRASH, NCSKEW, DUVOL, RET, SIGMA.
    ``sentiment``: firm_id, year, SENT, SENT_DETONED.
    ``fundamentals``: firm_id, year, SIZE, MTB, ROA, DTURN, ACCM, industry.
    Only keys present in all three frames are kept. A lead is NaN when the
    firm has no measure row for t+1.
    """
    keys = ["firm_id", "year"]
    panel = measures.merge(sentiment, on=keys, how="inner").merge(fundamentals, on=keys, how="inner")
    panel = panel.sort_values(keys, kind="mergesort").reset_index(drop=True)
    nxt = measures[keys + list(MEASURES)].copy()
    nxt["year"] = nxt["year"] - 1
    nxt = nxt.rename(columns={m: lead_name(m) for m in MEASURES})
    panel = panel.merge(nxt, on=keys, how="left")
    panel["size_quartile"] = size_quartiles(panel)
    return panel


def _lagged_control(measure):
    return "DUVOL" if measure == "NCSKEW" else "NCSKEW"


def _table3_specs(robust_se, sent="SENT"):
    specs = {}
    for m in MEASURES:
        regs = tuple(c if c != "SENT" else sent for c in CONTROLS) + (_lagged_control(m),)
        family = LOGIT if m in ("NEGOUTLIER", "CRASH") else LINEAR
        specs[m] = RegressionSpec(lead_name(m), regs, ("industry", "year"), family, robust_se)
    return specs


def fit_spec(frame, spec):
    design = build_design(frame, spec)
    if spec.family == LOGIT:
        res = logit_fit(design, robust_se=spec.robust_se)
    else:
        res = ols_fit(design, robust_se=spec.robust_se)
    res.notes.extend(design.diagnostics)
    res.extra["n_dropped"] = design.n_dropped
    return res


def ab_frame(panel, dependent="NEGOUTLIER", regressors=AB_CONTROLS):
    """Frame for the dynamic panel: the measure at year s with regressors
    taken from year s-1, so the estimating equation keeps the t+1 on t
    timing."""
    keys = ["firm_id", "year"]
    y = panel[keys + [dependent]]
    x = panel[keys + list(regressors)].copy()
    x["year"] = x["year"] + 1
    return y.merge(x, on=keys, how="left")


def firm_quartiles(panel):
    """Firm-level size group: the median of its firm-year quartiles, rounded down."""
    med = panel.groupby("firm_id")["size_quartile"].median()
    return np.floor(med).astype("Int64")


def _jobs(panel, config):
    jobs = {}
    if "table3" in config.suites:
        for m, spec in _table3_specs(config.robust_se).items():
            jobs[f"T3_{m}"] = (fit_spec, panel, spec)
    if "table5" in config.suites:
        fq = firm_quartiles(panel)
        frame = ab_frame(panel)
        spec = AbGmmSpec("NEGOUTLIER", AB_CONTROLS, dep_lags=config.ab_dep_lags,
                         max_instruments_per_period=config.ab_max_instruments)
        for q in (1, 2, 3, 4):
            firms = fq.index[fq == q]
            jobs[f"T5_Q{q}"] = (arellano_bond, frame[frame["firm_id"].isin(firms)], spec)
    if "table6" in config.suites:
        spec = _table3_specs(config.robust_se, sent="SENT_DETONED")["NEGOUTLIER"]
        jobs["T6_ALL"] = (fit_spec, panel, spec)
        for q in (1, 2, 3, 4):
            jobs[f"T6_Q{q}"] = (fit_spec, panel[panel["size_quartile"] == q], spec)
    return jobs


def _run(job):
    fn, frame, spec = job
    try:
        return fn(frame, spec)
    except (CrashRiskError, np.linalg.LinAlgError, ValueError, KeyError) as exc:
        log.warning("model failed: %s", exc)
        return exc


def run_paper_models(measures, sentiment, fundamentals, config=ModelConfig()):
    """Estimate the selected suites.

    Returns ``(results, panel)``; ``results`` maps model names (T3_NEGOUTLIER,
    T5_Q1, T6_ALL, ...) to a RegressionResult or the exception that stopped
    that model. One failing model never stops the others.
    """
    panel = assemble_panel(measures, sentiment, fundamentals)
    jobs = _jobs(panel, config)
    names = list(jobs)
    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            outs = list(pool.map(_run, (jobs[n] for n in names)))
    else:
        outs = [_run(jobs[n]) for n in names]
    return dict(zip(names, outs)), panel
