"""Design matrices with fixed-effect dummies and listwise deletion."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import SingularDesignError

LOGIT = "logit"
LINEAR = "linear"


@dataclass(frozen=True)
class RegressionSpec:
    dependent: str
    regressors: tuple
    fixed_effects: tuple = ("industry", "year")
    family: str = LINEAR
    robust_se: str = "hc1"  # "none", "hc0", "hc1"; logit treats any non-"none" as sandwich

    def __post_init__(self):
        if self.family not in (LOGIT, LINEAR):
            raise ValueError(f"unknown family {self.family!r}")


@dataclass
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    column_names: list
    dropped_levels: dict
    n_dropped: int = 0
    index: pd.Index | None = None
    diagnostics: list = field(default_factory=list)

    @property
    def shape(self):
        return self.X.shape


def _rank_offenders(X, names):
    offenders, basis = [], []
    rank = 0
    for j, name in enumerate(names):
        trial = basis + [j]
        r = np.linalg.matrix_rank(X[:, trial])
        if r > rank:
            basis, rank = trial, r
        else:
            offenders.append(name)
    return offenders


def check_rank(X, names):
    if np.linalg.matrix_rank(X) < X.shape[1]:
        bad = _rank_offenders(X, names)
        raise SingularDesignError(f"design is rank deficient; collinear column(s): {', '.join(bad)}", bad)


def build_design(frame, spec):
    """Intercept, regressors, then one dummy per non-reference FE level.

    Rows missing the dependent, any regressor, or any FE column are
    dropped and counted. The reference level is the lowest sorted value.
    """
    cols = [spec.dependent, *spec.regressors, *spec.fixed_effects]
    missing_cols = [c for c in cols if c not in frame.columns]
    if missing_cols:
        raise KeyError(f"missing column(s): {', '.join(missing_cols)}")
    sub = frame[cols]
    keep = sub[[spec.dependent, *spec.regressors]].notna().all(axis=1)
    for fe in spec.fixed_effects:
        keep &= sub[fe].notna()
    data = frame.loc[keep]
    n_dropped = int((~keep).sum())

    blocks = [np.ones((len(data), 1))]
    names = ["Intercept"]
    if spec.regressors:
        blocks.append(data[list(spec.regressors)].to_numpy(dtype=float))
        names.extend(spec.regressors)
    dropped, diags = {}, []
    for fe in spec.fixed_effects:
        levels = sorted(data[fe].unique())
        if len(levels) < 2:
            diags.append(f"{fe} fixed effect skipped: {len(levels)} level(s), no variation")
            continue
        dropped[fe] = levels[0]
        values = data[fe].to_numpy()
        blocks.append(np.column_stack([(values == lv).astype(float) for lv in levels[1:]]))
        names.extend(f"{fe}[{lv}]" for lv in levels[1:])
    X = np.hstack(blocks)
    y = data[spec.dependent].to_numpy(dtype=float)
    check_rank(X, names)
    return DesignMatrix(X, y, names, dropped, n_dropped, data.index, diags)


def from_arrays(X, y, names=None):
    """Wrap raw arrays (intercept already included if wanted)."""
    X = np.asarray(X, dtype=float)
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    check_rank(X, names)
    return DesignMatrix(X, np.asarray(y, dtype=float), names, {})
