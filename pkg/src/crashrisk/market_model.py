"""Expanded market model and firm-specific weekly returns.

Each firm's weekly return is regressed on the market return two weeks
before through two weeks after. Leads and lags are taken by position in
the sorted market week index, so a week the market file skips does not
break the window. The log of one plus each residual is the firm-specific
return that all crash measures use.
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InsufficientDataError, SingularDesignError
from .panel import week_year

log = logging.getLogger(__name__)

N_PARAMS = 6
LAGS = (-2, -1, 0, 1, 2)


@dataclass
class MarketModelFit:
    firm_id: str
    alpha: float
    betas: np.ndarray
    residuals: np.ndarray
    weeks: tuple
    r_squared: float
    n_obs: int
    n_excluded: int = 0
    y: np.ndarray = field(default=None, repr=False)

    @property
    def fitted(self):
        return self.y - self.residuals


@dataclass
class FirmYearSlice:
    firm_id: str
    year: int
    weeks: tuple
    w: np.ndarray
    ret_mean: float
    sigma: float

    @property
    def key(self):
        return (self.firm_id, self.year)

    @property
    def n(self):
        return len(self.w)


class MarketIndex:
    """Sorted market weeks with position lookup for lead/lag alignment."""

    def __init__(self, series):
        self.weeks = sorted(series)
        self.values = np.array([series[w] for w in self.weeks], dtype=float)
        self.position = {w: i for i, w in enumerate(self.weeks)}

    def window(self, week):
        """Market returns at t-2..t+2, or None when the window is incomplete."""
        i = self.position.get(week)
        if i is None or i < 2 or i + 2 >= len(self.weeks):
            return None
        return self.values[i - 2:i + 3]


def _design(firm_weeks, index):
    rows, y, weeks = [], [], []
    for rec in firm_weeks:
        win = index.window(rec.week)
        if win is None:
            continue
        rows.append(win)
        y.append(rec.ret)
        weeks.append(rec.week)
    if not rows:
        return np.empty((0, N_PARAMS)), np.empty(0), ()
    X = np.column_stack([np.ones(len(rows)), np.asarray(rows)])
    return X, np.asarray(y, dtype=float), tuple(weeks)


def fit_expanded_market_model(firm_weeks, market, min_weeks=N_PARAMS + 2):
    """OLS of one firm's weekly returns on market returns at t-2..t+2.

    ``market`` is either a week->return mapping or a :class:`MarketIndex`.
    Weeks without a full five-week market window are excluded and counted.
    """
    index = market if isinstance(market, MarketIndex) else MarketIndex(market)
    firm_weeks = sorted(firm_weeks, key=lambda r: r.week)
    if not firm_weeks:
        raise InsufficientDataError("no weeks supplied")
    firm_id = firm_weeks[0].firm_id
    X, y, weeks = _design(firm_weeks, index)
    n = len(y)
    if n < min_weeks:
        raise InsufficientDataError(f"firm {firm_id}: {n} usable weeks, need {min_weeks}")
    if np.linalg.matrix_rank(X) < N_PARAMS:
        raise SingularDesignError(f"firm {firm_id}: market design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ssr = float(resid @ resid)
    dev = y - y.mean()
    sst = float(dev @ dev)
    if sst > 0:
        r2 = min(1.0, max(0.0, 1.0 - ssr / sst))
    else:
        r2 = 1.0
    return MarketModelFit(
        firm_id=firm_id, alpha=float(coef[0]), betas=coef[1:].copy(), residuals=resid,
        weeks=weeks, r_squared=r2, n_obs=n, n_excluded=len(firm_weeks) - n, y=y,
    )


def firm_specific_return(residual):
    """ln(1 + residual); residuals at or below -1 are outside the domain."""
    if 1.0 + residual <= 0.0:
        raise DataError(f"residual {residual} implies a loss beyond -100%")
    return math.log1p(residual)


def fit_all(records, market, min_weeks=N_PARAMS + 2):
    """Fit every firm in ``records``. Returns (fits, failures) where failures
    maps firm_id to the error message."""
    index = market if isinstance(market, MarketIndex) else MarketIndex(market)
    by_firm = defaultdict(list)
    for r in records:
        by_firm[r.firm_id].append(r)
    fits, failures = [], {}
    for firm in sorted(by_firm):
        try:
            fits.append(fit_expanded_market_model(by_firm[firm], index, min_weeks=min_weeks))
        except (InsufficientDataError, SingularDesignError) as exc:
            failures[firm] = str(exc)
            log.info("market model skipped: %s", exc)
    return fits, failures


def build_firm_year_slices(fits, min_weeks_per_year=5):
    """Group firm-specific returns by (firm, year) and summarize them.

    Returns (slices, diagnostics). Weeks whose residual is <= -1 are
    dropped with a diagnostic; slices left with fewer than
    ``min_weeks_per_year`` weeks are dropped.
    """
    slices, diags = [], []
    for fit in fits:
        groups = defaultdict(lambda: ([], []))
        for week, eps in zip(fit.weeks, fit.residuals):
            if 1.0 + eps <= 0.0:
                diags.append(f"{fit.firm_id} {week}: residual {eps:.6g} <= -1, week dropped")
                continue
            wk, vals = groups[week_year(week)]
            wk.append(week)
            vals.append(math.log1p(eps))
        for year in sorted(groups):
            wk, vals = groups[year]
            if len(vals) < min_weeks_per_year:
                diags.append(f"{fit.firm_id} {year}: {len(vals)} weeks, slice dropped")
                continue
            w = np.asarray(vals)
            slices.append(FirmYearSlice(
                firm_id=fit.firm_id, year=year, weeks=tuple(wk), w=w,
                ret_mean=float(np.mean(w)),
                sigma=float(np.std(w, ddof=1)) if len(w) > 1 else math.nan,
            ))
    for d in diags:
        log.debug(d)
    return slices, diags
