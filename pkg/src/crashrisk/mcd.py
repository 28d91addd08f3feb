"""Minimum Covariance Determinant estimation and the NEGOUTLIER indicator.

Small problems are solved exactly by enumerating every half-sample.
Larger ones use random elemental starts refined by concentration steps
(C-steps), which never increase the subset determinant. Univariate
searches run through a compiled kernel when it is available.
"""
from __future__ import annotations

import hashlib
import itertools
import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _backend
from .errors import (
    DegenerateDataError,
    DimensionError,
    InsufficientDataError,
    SingularCovarianceError,
)

log = logging.getLogger(__name__)

# Subsets whose determinant falls below this fraction of the product of the
# full-sample variances are treated as singular.
SINGULAR_RTOL = 1e-12
# Relative gap under which two determinants count as tied.
TIE_RTOL = 1e-12
_CHUNK = 20_000


@dataclass(frozen=True)
class McdConfig:
    n_starts: int = 500
    max_csteps: int = 100
    exhaustive_threshold: int = 200_000
    quantile: float = 0.975
    seed: int = 0
    consistency_correction: bool = True

    def __post_init__(self):
        if not 0.5 < self.quantile < 1.0:
            raise ValueError("quantile must lie in (0.5, 1)")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.max_csteps < 1:
            raise ValueError("max_csteps must be >= 1")


@dataclass
class McdFit:
    n: int
    p: int
    h: int
    location: np.ndarray
    scatter: np.ndarray
    raw_determinant: float
    support: np.ndarray
    distances: np.ndarray
    cutoff: float
    flags: np.ndarray
    method: str = "fast"
    converged: bool = True
    correction: float = 1.0
    diagnostics: list = field(default_factory=list)

    @property
    def raw_scatter(self):
        return self.scatter / self.correction


def half_sample_size(n, p):
    if n <= p:
        raise DimensionError(f"need n > p, got n={n}, p={p}")
    return (n + p + 1) // 2


def _as_matrix(data):
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionError("data must be 1-d or 2-d")
    return X


def mahalanobis_sq(x, location, scatter):
    """Squared Mahalanobis distance of ``x`` (one point or rows of points)."""
    x = np.asarray(x, dtype=float)
    location = np.atleast_1d(np.asarray(location, dtype=float))
    scatter = np.atleast_2d(np.asarray(scatter, dtype=float))
    try:
        chol = np.linalg.cholesky(scatter)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("scatter matrix is not positive definite") from None
    p = location.shape[0]
    single = x.ndim <= 1 and x.size == p
    diff = x.reshape(-1, p) - location
    z = np.linalg.solve(chol, diff.T)
    d2 = np.einsum("ij,ij->j", z, z)
    return float(d2[0]) if single else d2


def _subset_stats(X, subset):
    sub = X[subset]
    mu = sub.mean(axis=0)
    dev = sub - mu
    cov = dev.T @ dev / len(subset)
    return mu, cov


def _singular_floor(X):
    var = X.var(axis=0)
    return SINGULAR_RTOL * float(np.prod(var))


def c_step(data, subset):
    """One concentration step: refit on ``subset`` and keep the h closest points.

    Ties in distance go to the lower observation index.
    """
    X = _as_matrix(data)
    subset = np.asarray(subset)
    h = len(subset)
    mu, cov = _subset_stats(X, subset)
    if np.linalg.det(cov) <= _singular_floor(X):
        raise SingularCovarianceError("subset covariance is singular")
    d2 = mahalanobis_sq(X, mu, cov)
    return np.sort(np.argsort(d2, kind="stable")[:h])


@functools.lru_cache(maxsize=4096)
def consistency_factor(h, n, p):
    """Scale that makes the raw MCD scatter consistent at the normal model."""
    if not (p >= 1 and p < h <= n):
        raise ValueError("need p >= 1 and p < h <= n")
    alpha = h / n
    if alpha >= 1.0:
        return 1.0
    q = stats.chi2.ppf(alpha, p)
    return float(alpha / stats.chi2.cdf(q, p + 2))


@functools.lru_cache(maxsize=256)
def chi2_cutoff(quantile, p):
    return float(stats.chi2.ppf(quantile, p))


def _finish(X, support, config, method, converged=True, diagnostics=None):
    n, p = X.shape
    h = len(support)
    mu, cov = _subset_stats(X, support)
    raw_det = float(np.linalg.det(cov))
    factor = consistency_factor(h, n, p) if config.consistency_correction else 1.0
    scatter = cov * factor
    d2 = np.atleast_1d(mahalanobis_sq(X, mu, scatter))
    cutoff = chi2_cutoff(config.quantile, p)
    return McdFit(
        n=n, p=p, h=h, location=mu, scatter=scatter, raw_determinant=raw_det,
        support=np.sort(np.asarray(support)), distances=d2, cutoff=cutoff,
        flags=d2 > cutoff, method=method, converged=converged,
        diagnostics=list(diagnostics or []), correction=factor,
    )


def _check(X):
    n, p = X.shape
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains non-finite values")
    if n <= p + 1:
        raise DimensionError(f"need n > p + 1, got n={n}, p={p}")
    if np.all(X == X[0]):
        raise DegenerateDataError("all observations are identical")


def _batch_dets(X, combos):
    sub = X[combos]  # (m, h, p)
    dev = sub - sub.mean(axis=1, keepdims=True)
    h = combos.shape[1]
    if X.shape[1] == 1:
        return np.einsum("mh,mh->m", dev[..., 0], dev[..., 0]) / h
    cov = np.einsum("mhi,mhj->mij", dev, dev) / h
    if X.shape[1] == 2:
        return cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] * cov[:, 1, 0]
    return np.linalg.det(cov)


def mcd_exact(data, config=McdConfig()):
    """Global MCD by enumerating all h-subsets in lexicographic order.

    Among tied determinants the lexicographically smallest support wins.
    """
    X = _as_matrix(data)
    _check(X)
    n, p = X.shape
    h = half_sample_size(n, p)
    total = math.comb(n, h)
    if total > config.exhaustive_threshold:
        raise ValueError(f"C({n},{h}) = {total} exceeds exhaustive_threshold")
    floor = _singular_floor(X)
    best_det, best = math.inf, None
    skipped = 0
    it = itertools.combinations(range(n), h)
    while True:
        chunk = list(itertools.islice(it, _CHUNK))
        if not chunk:
            break
        combos = np.array(chunk, dtype=np.intp)
        dets = _batch_dets(X, combos)
        ok = dets > floor
        skipped += int((~ok).sum())
        if not ok.any():
            continue
        dets = np.where(ok, dets, np.inf)
        lowest = dets.min()
        if best is None or lowest < best_det * (1.0 - TIE_RTOL):
            first = int(np.flatnonzero(dets <= lowest * (1.0 + TIE_RTOL))[0])
            best_det, best = float(dets[first]), combos[first]
    if best is None:
        raise DegenerateDataError("every h-subset has a singular covariance")
    diags = [f"{skipped} singular subsets skipped"] if skipped else []
    return _finish(X, best, config, "exact", diagnostics=diags)


def _fast_univariate(X, h, config, rng, kernel):
    x = X[:, 0]
    n = len(x)
    order = np.argsort(x, kind="stable")
    med = np.median(x)
    xs = x[order] - med
    # elemental starts: random distinct pairs; in 1-d only their center matters
    i = rng.integers(0, n, size=config.n_starts)
    j = rng.integers(0, n - 1, size=config.n_starts)
    j = j + (j >= i)
    centers = 0.5 * ((x[i] - med) + (x[j] - med))
    starts, steps, conv = kernel(xs, np.ascontiguousarray(centers), h, config.max_csteps)
    cand = np.unique(starts)
    variances = np.var(xs[cand[:, None] + np.arange(h)], axis=1)
    best_l, best_var = None, math.inf
    for l, v in zip(cand.tolist(), variances.tolist()):
        if v < best_var * (1.0 - TIE_RTOL):
            best_l, best_var = l, v
    if best_var <= _singular_floor(X):
        raise DegenerateDataError("more than half of the observations are identical")
    won = starts == best_l
    converged = bool(conv[won].any())
    diags = [] if converged else [f"no start converged within {config.max_csteps} C-steps"]
    return _finish(X, order[best_l:best_l + h], config, "fast", converged, diags)


def _fast_multivariate(X, h, config, rng):
    n, p = X.shape
    floor = _singular_floor(X)
    best_det, best, best_conv = math.inf, None, True
    seen = set()
    for _ in range(config.n_starts):
        perm = rng.permutation(n)
        k = p + 1
        mu, cov = _subset_stats(X, perm[:k])
        while np.linalg.det(cov) <= floor and k < n:
            k += 1
            mu, cov = _subset_stats(X, perm[:k])
        if np.linalg.det(cov) <= floor:
            continue
        subset = np.sort(np.argsort(mahalanobis_sq(X, mu, cov), kind="stable")[:h])
        converged = False
        try:
            for _ in range(config.max_csteps):
                key = subset.tobytes()
                if key in seen:
                    converged = True
                    break
                nxt = c_step(X, subset)
                if np.array_equal(nxt, subset):
                    converged = True
                    seen.add(key)
                    break
                subset = nxt
        except SingularCovarianceError:
            continue
        det = float(np.linalg.det(_subset_stats(X, subset)[1]))
        if det <= floor:
            continue
        if det < best_det * (1.0 - TIE_RTOL):
            best_det, best, best_conv = det, subset, converged
    if best is None:
        raise DegenerateDataError("no start produced a nonsingular subset")
    diags = [] if best_conv else [f"best start did not converge within {config.max_csteps} C-steps"]
    return _finish(X, best, config, "fast", best_conv, diags)


def fast_mcd(data, config=McdConfig(), rng=None, backend=None):
    """MCD fit: exact when C(n, h) is within the threshold, FastMCD otherwise.

    ``rng`` defaults to a generator seeded from ``config.seed``. Same seed,
    same output.
    """
    X = _as_matrix(data)
    _check(X)
    n, p = X.shape
    h = half_sample_size(n, p)
    if math.comb(n, h) <= config.exhaustive_threshold:
        return mcd_exact(X, config)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if p == 1:
        return _fast_univariate(X, h, config, rng, _backend.get_kernel(backend))
    return _fast_multivariate(X, h, config, rng)


def slice_seed(global_seed, firm_id, year):
    """Per-slice seed from (global seed, firm, year); independent of run order."""
    digest = hashlib.blake2b(f"{firm_id}\x1f{year}".encode(), digest_size=8).digest()
    return np.random.SeedSequence([int(global_seed) & 0xFFFFFFFFFFFFFFFF,
                                   int.from_bytes(digest, "little"), int(year) & 0xFFFFFFFF])


def negoutlier_fit(w, config=McdConfig(), rng=None):
    """Return (indicator, fit or None, note). ``fit`` is None for a degenerate slice."""
    w = np.asarray(w, dtype=float).ravel()
    need = 5
    if len(w) < need:
        raise InsufficientDataError(f"need at least {need} weeks, got {len(w)}")
    try:
        fit = fast_mcd(w, config, rng=rng)
    except DegenerateDataError as exc:
        return 0, None, f"degenerate: {exc}"
    below = w < fit.location[0]
    return int(np.any(fit.flags & below)), fit, ""


def negoutlier(w, config=McdConfig(), rng=None):
    """1 if the univariate MCD flags at least one week below the robust center."""
    value, _, note = negoutlier_fit(w, config, rng)
    if note:
        log.debug("negoutlier: %s", note)
    return value
