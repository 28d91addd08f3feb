"""Synthetic panels with known ground truth, and reference oracles.

The oracles here (brute-force MCD, chi-square distribution functions) are
written in plain Python on purpose: they share no numerical code with
the estimators they are used to check.
"""
from __future__ import annotations

import datetime as dt
import itertools
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ._io import write_csv
from .errors import ConfigError
from .panel import FirmWeekRecord, FundamentalsRow, format_week, write_fundamentals, write_returns

GROUND_TRUTH_COLUMNS = ("firm_id", "year", "injected_week", "magnitude")
# sentiment input weights used by the sentiment-linked DGP, in input order
# (pe, turn, eqs, cefd, tobin, lev, bsi)
SENT_WEIGHTS = (-0.136, 0.208, 0.052, -0.216, 0.006, 0.17, 0.048)


@dataclass(frozen=True)
class SimConfig:
    n_firms: int = 200
    n_years: int = 5
    weeks_per_year: int = 52
    base_sigma: float = 0.04
    crash_prob: float = 0.1
    crash_magnitude: float = 6.0
    sentiment_effect: float = 0.0
    seed: int = 0
    start_year: int = 2010
    n_industries: int = 5
    market_sigma: float = 0.02

    def __post_init__(self):
        if not 0.0 <= self.crash_prob <= 1.0:
            raise ConfigError(f"crash_prob must lie in [0, 1], got {self.crash_prob}")
        if not 5 <= self.weeks_per_year <= 52:
            raise ConfigError(f"weeks_per_year must lie in [5, 52], got {self.weeks_per_year}")
        if self.n_firms < 1 or self.n_years < 1:
            raise ConfigError("n_firms and n_years must be >= 1")
        if self.base_sigma <= 0 or self.market_sigma < 0:
            raise ConfigError("volatilities must be positive")
        if self.crash_magnitude < 0:
            raise ConfigError("crash_magnitude must be >= 0")
        if self.n_industries < 1:
            raise ConfigError("n_industries must be >= 1")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown simulation key(s): {', '.join(sorted(extra))}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return asdict(self)


@dataclass
class SimPanel:
    returns: list
    fundamentals: list
    ground_truth: list  # (firm_id, year, injected_week, magnitude)
    sent: dict  # (firm_id, year) -> SENT used by the DGP
    crash_prob: dict  # (firm_id, year) -> probability used for that firm-year


def year_weeks(year, count):
    """First ``count`` ISO weeks whose Monday falls in ``year``."""
    day = dt.date(year, 1, 1)
    day += dt.timedelta(days=(7 - day.weekday()) % 7)
    return [format_week(day + dt.timedelta(weeks=k)) for k in range(count)]


def _rng(seed, *path):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *path]))


def _logistic(x):
    return 1.0 / (1.0 + math.exp(-x))


def _dgp_sent(fund):
    """SENT as the DGP sees it: inputs standardized over the whole panel
    (n - 1 divisor) and combined with SENT_WEIGHTS."""
    cols = ("pe", "turn", "eqs", "cefd", "tobin", "lev", "bsi")
    n = len(fund)
    out = [0.0] * n
    for c, wt in zip(cols, SENT_WEIGHTS):
        xs = [getattr(r, c) for r in fund]
        m = sum(xs) / n
        sd = math.sqrt(sum((x - m) ** 2 for x in xs) / (n - 1)) if n > 1 else 1.0
        for i, x in enumerate(xs):
            out[i] += wt * (x - m) / sd
    return {r.key: s for r, s in zip(fund, out)}


def _fundamentals(cfg):
    years = [cfg.start_year + k for k in range(cfg.n_years)]
    frng = _rng(cfg.seed, 1)
    # a year-level factor shared by the sentiment inputs (the market-wide mood)
    mood = frng.normal(size=cfg.n_years)
    load = np.array([0.6, 0.8, 0.5, -0.7, 0.4, 0.3, 0.5])
    rows = []
    for i in range(cfg.n_firms):
        r = _rng(cfg.seed, 2, i)
        firm = f"F{i:05d}"
        industry = f"I{r.integers(cfg.n_industries):02d}"
        size0 = r.normal(6.0, 1.5)
        for k, year in enumerate(years):
            s = r.normal(size=7) + load * mood[k]
            rows.append(FundamentalsRow(
                firm_id=firm, fiscal_year=year,
                size=float(size0 + r.normal(0.0, 0.1)),
                mtb=float(math.exp(r.normal(0.5, 0.5))),
                roa=float(r.normal(0.05, 0.05)),
                dturn=float(r.normal(0.0, 0.1)),
                accm=float(abs(r.normal(0.0, 0.05))),
                pe=float(15.0 + 5.0 * s[0]), turn=float(1.0 + 0.3 * s[1]),
                eqs=float(0.2 + 0.05 * s[2]), cefd=float(0.1 + 0.05 * s[3]),
                tobin=float(1.5 + 0.4 * s[4]), lev=float(0.4 + 0.1 * s[5]),
                bsi=float(0.5 * s[6]),
                industry=industry,
            ))
    return rows


def simulate(cfg):
    """Build a synthetic panel in memory.

    Firm-specific log returns are Gaussian with sd ``base_sigma``. A crash
    firm-year gets one uniformly chosen week replaced by
    ``-crash_magnitude * base_sigma``. Crash weeks are drawn only where the
    market has two weeks on either side, so the crash week is never lost
    to the lead/lag window of the market model. With a non-zero
    ``sentiment_effect`` the crash probability of year t+1 is
    logistic(logit(crash_prob) + sentiment_effect * SENT_t).
    """
    years = [cfg.start_year + k for k in range(cfg.n_years)]
    weeks = [w for y in years for w in year_weeks(y, cfg.weeks_per_year)]
    mrng = _rng(cfg.seed, 0)
    market = mrng.normal(0.002, cfg.market_sigma, size=len(weeks))

    fund = _fundamentals(cfg)
    sent = _dgp_sent(fund)
    base = cfg.crash_prob
    linked = cfg.sentiment_effect != 0.0 and 0.0 < base < 1.0
    probs = {}
    for r in fund:
        p = base
        prev = sent.get((r.firm_id, r.fiscal_year - 1))
        if linked and prev is not None:
            p = _logistic(math.log(base / (1.0 - base)) + cfg.sentiment_effect * prev)
        probs[r.key] = p

    returns, truth = [], []
    for i in range(cfg.n_firms):
        r = _rng(cfg.seed, 3, i)
        firm = f"F{i:05d}"
        alpha = r.normal(0.0, 0.001)
        beta = r.normal(1.0, 0.3)
        e = r.normal(0.0, cfg.base_sigma, size=len(weeks))
        for k, year in enumerate(years):
            lo = k * cfg.weeks_per_year
            hi = lo + cfg.weeks_per_year
            lo_ok, hi_ok = max(lo, 2), min(hi, len(weeks) - 2)
            u = r.random()
            pick = r.random()
            if u < probs[(firm, year)] and hi_ok > lo_ok:
                j = lo_ok + min(int(pick * (hi_ok - lo_ok)), hi_ok - lo_ok - 1)
                e[j] = -cfg.crash_magnitude * cfg.base_sigma
                truth.append((firm, year, weeks[j], cfg.crash_magnitude))
        ret = alpha + beta * market + np.expm1(e)
        returns.extend(FirmWeekRecord(firm, w, float(x), float(m)) for w, x, m in zip(weeks, ret, market))
    return SimPanel(returns, fund, truth, sent, probs)


def gen_panel(cfg, out_dir):
    """Write returns.csv, fundamentals.csv and ground_truth.csv under ``out_dir``.

    Output bytes depend only on ``cfg``.
    """
    out = Path(out_dir)
    sim = simulate(cfg)
    paths = {
        "returns": out / "returns.csv",
        "fundamentals": out / "fundamentals.csv",
        "ground_truth": out / "ground_truth.csv",
    }
    write_returns(sim.returns, paths["returns"])
    write_fundamentals(sim.fundamentals, paths["fundamentals"])
    write_csv(paths["ground_truth"], GROUND_TRUTH_COLUMNS, sim.ground_truth)
    return paths


# ---------------------------------------------------------------- other DGPs

def gen_dynamic_panel(n_firms=500, n_periods=8, rho=0.5, firm_effects=True, seed=0,
                      burn_in=50, exog_beta=None):
    """y_it = rho*y_i,t-1 + [beta*x_it] + eta_i + e_it, all shocks standard normal.

    Returns a dict of column arrays (firm_id, year, y[, x]) in firm-major order.
    """
    r = _rng(seed, 10)
    eta = r.normal(size=n_firms) if firm_effects else np.zeros(n_firms)
    total = n_periods + burn_in
    x = r.normal(size=(n_firms, total))
    y = np.zeros((n_firms, total))
    b = 0.0 if exog_beta is None else exog_beta
    for t in range(1, total):
        y[:, t] = rho * y[:, t - 1] + b * x[:, t] + eta + r.normal(size=n_firms)
    y, x = y[:, burn_in:], x[:, burn_in:]
    cols = {
        "firm_id": np.repeat([f"F{i:05d}" for i in range(n_firms)], n_periods),
        "year": np.tile(np.arange(n_periods) + 2000, n_firms),
        "y": y.ravel(),
    }
    if exog_beta is not None:
        cols["x"] = x.ravel()
    return cols


def gen_logit(n=50_000, beta=(-1.0, 2.0), seed=0):
    """Intercept plus standard-normal regressors; returns (X, y, beta)."""
    r = _rng(seed, 11)
    beta = np.asarray(beta, dtype=float)
    X = np.column_stack([np.ones(n), r.normal(size=(n, len(beta) - 1))])
    p = 1.0 / (1.0 + np.exp(-(X @ beta)))
    y = (r.random(n) < p).astype(float)
    return X, y, beta


# ------------------------------------------------------------------ oracles

class BudgetExceeded(RuntimeError):
    pass


class DomainError(ValueError):
    pass


def _det(m):
    """Determinant by Gaussian elimination with partial pivoting."""
    a = [row[:] for row in m]
    n = len(a)
    det = 1.0
    for c in range(n):
        piv = max(range(c, n), key=lambda r: abs(a[r][c]))
        if a[piv][c] == 0.0:
            return 0.0
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            for k in range(c, n):
                a[r][k] -= f * a[c][k]
    return det


def _cov(rows):
    h = len(rows)
    p = len(rows[0])
    mu = [sum(r[j] for r in rows) / h for j in range(p)]
    return [[sum((r[i] - mu[i]) * (r[j] - mu[j]) for r in rows) / h for j in range(p)] for i in range(p)]


def mcd_bruteforce(data, budget=1_000_000):
    """Exhaustive MCD: (support, determinant) over every h-subset.

    The determinant is of the subset covariance with divisor h.

    ``h = (n + p + 1) // 2``. Subsets are visited in lexicographic order and
    a later subset replaces the incumbent only if its determinant is
    smaller by more than a relative 1e-12. Subsets with determinant at or
    below 1e-12 times the product of full-sample variances are skipped.
    """
    rows = [[float(v) for v in (r if hasattr(r, "__len__") else [r])] for r in data]
    n, p = len(rows), len(rows[0])
    h = (n + p + 1) // 2
    total = math.comb(n, h)
    if total > budget:
        raise BudgetExceeded(f"C({n},{h}) = {total} subsets exceeds budget {budget}")
    full = _cov(rows)
    floor = 1e-12
    for j in range(p):
        floor *= full[j][j]
    best, best_det = None, math.inf
    for sub in itertools.combinations(range(n), h):
        d = _det(_cov([rows[i] for i in sub]))
        if d <= floor:
            continue
        if best is None or d < best_det * (1.0 - 1e-12):
            best, best_det = sub, d
    if best is None:
        raise DomainError("every h-subset is singular")
    return list(best), best_det


def _lower_gamma_series(a, x):
    term = total = 1.0 / a
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cf(a, x):
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    f = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return f * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_cdf(x, dof):
    if dof < 1 or dof != int(dof):
        raise DomainError(f"dof must be a positive integer, got {dof}")
    if x != x:
        raise DomainError("x is NaN")
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    a, z = dof / 2.0, x / 2.0
    if z < a + 1.0:
        return min(1.0, _lower_gamma_series(a, z))
    return max(0.0, 1.0 - _upper_gamma_cf(a, z))


def _chi2_pdf(x, dof):
    a = dof / 2.0
    return math.exp((a - 1.0) * math.log(x) - x / 2.0 - a * math.log(2.0) - math.lgamma(a))


def chi2_quantile(dof, q):
    if dof < 1 or dof != int(dof):
        raise DomainError(f"dof must be a positive integer, got {dof}")
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    lo, hi = 0.0, max(1.0, float(dof))
    while chi2_cdf(hi, dof) < q:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, dof) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    x = 0.5 * (lo + hi)
    for _ in range(3):
        pdf = _chi2_pdf(x, dof)
        if pdf <= 0.0:
            break
        nxt = x - (chi2_cdf(x, dof) - q) / pdf
        if not lo <= nxt <= hi:
            break
        x = nxt
    return x
