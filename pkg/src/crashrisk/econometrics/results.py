"""Estimation results and their tabular renderings."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RegressionResult:
    names: list
    coefficients: np.ndarray
    standard_errors: np.ndarray
    stats: np.ndarray
    p_values: np.ndarray
    n_obs: int
    fit_stat: float = math.nan
    fit_label: str = ""
    converged: bool = True
    iterations: int = 0
    cov: np.ndarray | None = None
    estimator: str = ""
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.coefficients[self.names.index(name)]

    def se(self, name):
        return self.standard_errors[self.names.index(name)]

    def pvalue(self, name):
        return self.p_values[self.names.index(name)]

    def rows(self):
        for i, name in enumerate(self.names):
            yield name, self.coefficients[i], self.standard_errors[i], self.stats[i], self.p_values[i]


def stars(p):
    if not np.isfinite(p):
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def long_rows(results):
    """(model, term, coef, se, stat, p, stars) rows for every successful model."""
    for model in sorted(results):
        res = results[model]
        if not isinstance(res, RegressionResult):
            continue
        for name, b, s, t, p in res.rows():
            yield model, name, float(b), float(s), float(t), float(p), stars(p)


def _cell(x):
    if not np.isfinite(x):
        return ""
    ax = abs(x)
    if ax != 0 and (ax < 1e-3 or ax >= 1e4):
        return f"{x:.3g}"
    return f"{x:.4g}"


def format_table(results, models, title="", hide_prefixes=("industry[", "year[")):
    """Text table: one column per model, coefficient with stars over (SE)."""
    models = [m for m in models if isinstance(results.get(m), RegressionResult)]
    if not models:
        return title + "\n(no models estimated)\n"
    terms = []
    for m in models:
        for name in results[m].names:
            if name not in terms and not name.startswith(hide_prefixes):
                terms.append(name)
    if "Intercept" in terms:
        terms.remove("Intercept")
        terms.append("Intercept")
    width = max(18, *(len(m) + 2 for m in models))
    label_w = max(12, *(len(t) + 2 for t in terms))
    lines = [title] if title else []
    lines.append("".ljust(label_w) + "".join(m.rjust(width) for m in models))
    for t in terms:
        top, bottom = [], []
        for m in models:
            r = results[m]
            if t in r.names:
                i = r.names.index(t)
                top.append((_cell(r.coefficients[i]) + stars(r.p_values[i])).rjust(width))
                bottom.append(f"({_cell(r.standard_errors[i])})".rjust(width))
            else:
                top.append("".rjust(width))
                bottom.append("".rjust(width))
        lines.append(t.ljust(label_w) + "".join(top))
        lines.append("".ljust(label_w) + "".join(bottom))
    lines.append("Observations".ljust(label_w) + "".join(str(results[m].n_obs).rjust(width) for m in models))
    lines.append("Fit".ljust(label_w) + "".join(
        (f"{results[m].fit_label} {results[m].fit_stat:.3f}" if np.isfinite(results[m].fit_stat) else "").rjust(width)
        for m in models))
    for fe, prefix in (("Industry FE", "industry["), ("Year FE", "year[")):
        lines.append(fe.ljust(label_w) + "".join(
            ("Yes" if any(n.startswith(prefix) for n in results[m].names) else "No").rjust(width)
            for m in models))
    lines.append("Standard errors in parentheses. * p < 0.1, ** p < 0.05, *** p < 0.01")
    return "\n".join(lines) + "\n"
