"""Firm-year crash measures: NCSKEW, DUVOL, CRASH and NEGOUTLIER."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, UndefinedMeasureError
from .mcd import McdConfig, negoutlier_fit

log = logging.getLogger(__name__)

DEFAULT_CRASH_SIGMA = 3.2

# missing-value reason codes
INSUFFICIENT = "insufficient_weeks"
UP_DOWN = "insufficient up/down weeks"
NO_DISPERSION = "zero_dispersion"


def ncskew(w):
    """Negative skewness with the usual finite-sample factors, on demeaned w."""
    w = np.asarray(w, dtype=float)
    n = len(w)
    if n < 3:
        raise InsufficientDataError(f"NCSKEW needs n >= 3, got {n}")
    d = w - w.mean()
    s2 = float(np.sum(d * d))
    if s2 == 0.0:
        raise UndefinedMeasureError("NCSKEW undefined: zero dispersion")
    s3 = float(np.sum(d * d * d))
    return -(n * (n - 1) ** 1.5 * s3) / ((n - 1) * (n - 2) * s2 ** 1.5)


def _up_down(w):
    w = np.asarray(w, dtype=float)
    d = w - w.mean()
    return d[d > 0], d[d < 0]


def duvol(w):
    """Log ratio of down-week to up-week squared deviations, df-adjusted.

    Weeks exactly at the annual mean count as neither.
    """
    up, down = _up_down(w)
    n_u, n_d = len(up), len(down)
    if n_u < 2 or n_d < 2:
        raise InsufficientDataError(f"DUVOL needs >= 2 up and down weeks, got {n_u} up, {n_d} down")
    su = float(np.sum(up * up))
    if su == 0.0:
        raise UndefinedMeasureError("DUVOL undefined: zero up-week dispersion")
    sd = float(np.sum(down * down))
    return math.log(((n_u - 1) * sd) / ((n_d - 1) * su))


def crash_indicator(w, k=DEFAULT_CRASH_SIGMA, ddof=1):
    """1 if some week lies strictly more than k sample stdevs below the mean."""
    w = np.asarray(w, dtype=float)
    if len(w) < 2:
        raise InsufficientDataError("CRASH needs n >= 2")
    sd = float(np.std(w, ddof=ddof))
    if sd == 0.0:
        log.debug("crash_indicator: zero dispersion, returning 0")
        return 0
    return int(np.any(w < w.mean() - k * sd))


@dataclass
class CrashMeasures:
    firm_id: str
    year: int
    negoutlier: float
    crash: float
    ncskew: float
    duvol: float
    n_weeks: int
    n_up: int
    n_down: int
    missing: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    mcd_fit: object = field(default=None, repr=False, compare=False)

    @property
    def key(self):
        return (self.firm_id, self.year)


def compute_all(slice_, mcd_config=McdConfig(), crash_sigma=DEFAULT_CRASH_SIGMA, rng=None, crash_ddof=1):
    """All four measures for one firm-year slice.

    A measure whose precondition fails is NaN, with the reason recorded in
    ``missing`` under the measure's name.
    """
    w = np.asarray(slice_.w, dtype=float)
    up, down = _up_down(w)
    missing, notes, held = {}, {}, {}

    def attempt(name, fn, short=INSUFFICIENT):
        try:
            return float(fn())
        except InsufficientDataError:
            missing[name] = short
        except UndefinedMeasureError:
            missing[name] = NO_DISPERSION
        return math.nan

    def neg():
        value, held["fit"], note = negoutlier_fit(w, mcd_config, rng=rng)
        if note:
            notes["negoutlier"] = note
        return value

    return CrashMeasures(
        firm_id=slice_.firm_id, year=slice_.year,
        negoutlier=attempt("negoutlier", neg),
        crash=attempt("crash", lambda: crash_indicator(w, crash_sigma, crash_ddof)),
        ncskew=attempt("ncskew", lambda: ncskew(w)),
        duvol=attempt("duvol", lambda: duvol(w), short=UP_DOWN),
        n_weeks=len(w), n_up=len(up), n_down=len(down), missing=missing, notes=notes,
        mcd_fit=held.get("fit"),
    )
