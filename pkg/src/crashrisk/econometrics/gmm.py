"""Arellano-Bond one-step difference GMM for dynamic panels.

The equation is first-differenced to remove firm effects. Each differenced
lag of the dependent variable is instrumented by levels of the dependent
dated t-2 and earlier, one instrument column per (period, lag) pair.
Differenced exogenous regressors instrument themselves. The weighting
matrix is the usual first-difference one (2 on the diagonal, -1 between
adjacent periods) and standard errors are clustered by firm.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import InsufficientDataError, SingularDesignError
from .results import RegressionResult


@dataclass(frozen=True)
class AbGmmSpec:
    dependent: str
    regressors: tuple = ()
    dep_lags: int = 2
    max_instruments_per_period: int | None = None
    one_step: bool = True
    entity: str = "firm_id"
    time: str = "year"
    constant: bool = True

    def __post_init__(self):
        if self.dep_lags < 1:
            raise ValueError("dep_lags must be >= 1")
        if not self.one_step:
            raise ValueError("only the one-step estimator is implemented")


class InstrumentRankError(SingularDesignError):
    def __init__(self, message, counts):
        self.counts = counts
        super().__init__(f"{message}; instruments per period: {counts}")


def _firm_blocks(frame, spec):
    y_col, xs = spec.dependent, list(spec.regressors)
    L = spec.dep_lags
    blocks = []
    for firm, g in frame.groupby(spec.entity, sort=True):
        g = g.sort_values(spec.time)
        t_vals = g[spec.time].to_numpy(dtype=int)
        y = dict(zip(t_vals, g[y_col].to_numpy(dtype=float)))
        x = dict(zip(t_vals, g[xs].to_numpy(dtype=float))) if xs else {t: np.empty(0) for t in t_vals}
        rows = []
        for t in t_vals:
            need_y = [t - j for j in range(L + 2)]
            if not all(s in y and np.isfinite(y[s]) for s in need_y):
                continue
            if xs and not (t - 1 in x and np.all(np.isfinite(x[t])) and np.all(np.isfinite(x[t - 1]))):
                continue
            dy = y[t] - y[t - 1]
            dlags = [y[t - j] - y[t - j - 1] for j in range(1, L + 1)]
            dx = (x[t] - x[t - 1]) if xs else np.empty(0)
            levels = {s: v for s, v in y.items() if s <= t - 2 and np.isfinite(v)}
            rows.append((t, dy, dlags, dx, levels))
        if rows:
            blocks.append((firm, rows))
    return blocks


def arellano_bond(frame, spec):
    """One-step difference GMM with firm-clustered robust errors.

    ``frame`` holds one row per (entity, time) with integer time periods.
    """
    L = spec.dep_lags
    periods = frame.groupby(spec.entity)[spec.time].nunique()
    if periods.empty or periods.max() < L + 2:
        raise InsufficientDataError(
            f"need at least {L + 2} periods per firm for {L} dependent lag(s); "
            f"max available is {0 if periods.empty else int(periods.max())}")
    blocks = _firm_blocks(frame, spec)
    if not blocks:
        raise InsufficientDataError("no firm supplies a complete differenced equation")

    # instrument layout: one column per (period, lag distance)
    cap = spec.max_instruments_per_period
    inst_cols = {}
    for _, rows in blocks:
        for t, _, _, _, levels in rows:
            lags = sorted((t - s for s in levels), reverse=False)
            if cap is not None:
                lags = lags[:cap]
            for j in lags:
                inst_cols.setdefault((t, j), None)
    gmm_keys = sorted(inst_cols)
    col_of = {key: i for i, key in enumerate(gmm_keys)}
    counts = {}
    for t, j in gmm_keys:
        counts[t] = counts.get(t, 0) + 1

    kx = len(spec.regressors)
    names = [f"L{j}.{spec.dependent}" for j in range(1, L + 1)] + list(spec.regressors)
    if spec.constant:
        names.append("Intercept")
    n_iv = kx + (1 if spec.constant else 0)
    n_inst = len(gmm_keys) + n_iv
    k = len(names)

    per_firm = []
    for firm, rows in blocks:
        m = len(rows)
        Xi = np.zeros((m, k))
        yi = np.zeros(m)
        Zi = np.zeros((m, n_inst))
        ts = []
        for r, (t, dy, dlags, dx, levels) in enumerate(rows):
            yi[r] = dy
            Xi[r, :L] = dlags
            Xi[r, L:L + kx] = dx
            if spec.constant:
                Xi[r, -1] = 1.0
            for s, v in levels.items():
                key = (t, t - s)
                if key in col_of:
                    Zi[r, col_of[key]] = v
            Zi[r, len(gmm_keys):len(gmm_keys) + kx] = dx
            if spec.constant:
                Zi[r, -1] = 1.0
            ts.append(t)
        Hi = 2.0 * np.eye(m)
        for a in range(m - 1):
            if ts[a + 1] - ts[a] == 1:
                Hi[a, a + 1] = Hi[a + 1, a] = -1.0
        per_firm.append((Xi, yi, Zi, Hi))

    ZHZ = sum(Z.T @ H @ Z for _, _, Z, H in per_firm)
    ZX = sum(Z.T @ X for X, _, Z, _ in per_firm)
    Zy = sum(Z.T @ y for _, y, Z, _ in per_firm)
    n_eq = sum(len(y) for _, y, _, _ in per_firm)

    if n_inst < k or np.linalg.matrix_rank(ZX) < k:
        raise InstrumentRankError("instrument matrix does not identify the parameters", counts)
    A = np.linalg.pinv(ZHZ)
    M = ZX.T @ A @ ZX
    try:
        M_inv = np.linalg.inv(M)
    except np.linalg.LinAlgError:
        raise InstrumentRankError("GMM normal matrix is singular", counts) from None
    beta = M_inv @ (ZX.T @ A @ Zy)

    meat = np.zeros((n_inst, n_inst))
    for X, y, Z, _ in per_firm:
        zu = Z.T @ (y - X @ beta)
        meat += np.outer(zu, zu)
    G = len(per_firm)
    cov = M_inv @ (ZX.T @ A @ meat @ A @ ZX) @ M_inv
    se = np.sqrt(np.diag(cov))
    z = beta / se
    pv = 2.0 * stats.norm.sf(np.abs(z))
    return RegressionResult(
        names=names, coefficients=beta, standard_errors=se, stats=z, p_values=pv,
        n_obs=n_eq, estimator="ab-gmm/one-step/robust", cov=cov,
        extra={"n_firms": G, "n_instruments": n_inst, "instruments_per_period": counts},
    )
