"""Firm-level investor sentiment index from seven inputs, with detoning.

Inputs are standardized, then combined with either the published fixed
weights or weights fitted by PCA on the current panel. Detoning removes
the first principal component (the market-wide factor) from the
standardized inputs before the weights are applied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateColumnError, InsufficientDataError, NumericError

INPUTS = ("pe", "turn", "eqs", "cefd", "tobin", "lev", "bsi")
LABELS = ("P/E", "TURN", "EQS", "CEFD", "TOBIN", "LEV", "BSI")
FIXED_WEIGHTS = np.array([-0.136, 0.208, 0.052, -0.216, 0.006, 0.17, 0.048])

FIXED_PAPER = "fixed_paper"
FITTED = "fitted"


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.std


def standardize(X, labels=LABELS):
    """Column-wise z-scores (sample stdev) of an N x k matrix."""
    X = np.asarray(X, dtype=float)
    for j, label in enumerate(labels[:X.shape[1]]):
        col = X[:, j]
        if len(col) < 2 or np.all(col == col[0]):
            raise DegenerateColumnError(label)
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    st = Standardizer(mean, std)
    return st.transform(X), st


@dataclass
class PcaResult:
    eigenvalues: np.ndarray   # descending
    eigenvectors: np.ndarray  # columns
    scores: np.ndarray
    center: np.ndarray

    @property
    def shares(self):
        return self.eigenvalues / self.eigenvalues.sum()

    def reconstruct(self, components=None):
        """Rebuild the data from the chosen component indices (all by default)."""
        idx = slice(None) if components is None else list(components)
        return self.scores[:, idx] @ self.eigenvectors[:, idx].T + self.center


def pca(Z):
    """Eigen-decomposition of the sample covariance of ``Z``.

    Each eigenvector is signed so its largest-magnitude entry is positive.
    """
    Z = np.asarray(Z, dtype=float)
    n, k = Z.shape
    if n < k + 1:
        raise InsufficientDataError(f"PCA needs at least {k + 1} rows, got {n}")
    cov = np.cov(Z, rowvar=False, ddof=1)
    if not np.all(np.isfinite(cov)):
        raise NumericError("covariance matrix is not finite")
    try:
        vals, vecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigen-decomposition failed: {exc}") from exc
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    vals = np.where(np.abs(vals) < 1e-12 * max(1.0, abs(vals[0])), 0.0, vals)
    pivots = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivots, np.arange(k)])
    vecs = vecs * np.where(signs == 0, 1.0, signs)
    center = Z.mean(axis=0)
    return PcaResult(vals, vecs, (Z - center) @ vecs, center)


@dataclass(frozen=True)
class SentimentLoadings:
    weights: np.ndarray
    mode: str
    explained_variance: np.ndarray | None = None


def fixed_loadings():
    return SentimentLoadings(FIXED_WEIGHTS.copy(), FIXED_PAPER)


def fitted_loadings(result):
    """Eigenvalue-share weighted average of the eigenvectors."""
    return SentimentLoadings(result.eigenvectors @ result.shares, FITTED, result.shares.copy())


def build_sent(inputs, loadings):
    """Weighted sum of standardized inputs; a row with any NaN input gives NaN."""
    return np.asarray(inputs, dtype=float) @ loadings.weights


def remove_first_component(Z, first_vector):
    """Project standardized inputs off the first eigenvector."""
    v = np.asarray(first_vector, dtype=float)
    Z = np.asarray(Z, dtype=float)
    return Z - np.outer(Z @ v, v) / (v @ v)


def detone(scores, eigenvectors, loadings):
    """SENT rebuilt from components 2..k only."""
    scores = np.asarray(scores, dtype=float)
    eigenvectors = np.asarray(eigenvectors, dtype=float)
    rebuilt = scores[:, 1:] @ eigenvectors[:, 1:].T
    return build_sent(rebuilt, loadings)


@dataclass
class SentimentTable:
    keys: list
    sent: np.ndarray
    sent_detoned: np.ndarray
    mode: str
    loadings: SentimentLoadings
    pca: PcaResult
    standardizer: Standardizer
    reasons: dict  # key -> reason code for rows with missing SENT


def _winsorize(x, limits):
    lo, hi = limits
    ok = np.isfinite(x)
    if not ok.any():
        return x
    a, b = np.quantile(x[ok], [lo, 1.0 - hi])
    return np.where(ok, np.clip(x, a, b), x)


def build_sentiment_table(rows, mode=FIXED_PAPER, winsorize=None):
    """SENT and detoned SENT for each firm-year row.

    ``rows`` are fundamentals rows (anything exposing the seven input
    attributes plus ``firm_id`` and ``fiscal_year``). Standardization and
    PCA use the complete rows only; incomplete rows get NaN with a reason.
    ``winsorize`` is an optional (lower, upper) tail fraction pair.
    """
    if mode not in (FIXED_PAPER, FITTED):
        raise ValueError(f"unknown sentiment mode {mode!r}")
    keys = [(r.firm_id, r.fiscal_year) for r in rows]
    X = np.array([[getattr(r, c) for c in INPUTS] for r in rows], dtype=float).reshape(-1, len(INPUTS))
    complete = np.all(np.isfinite(X), axis=1)
    Z, st = standardize(X[complete])
    res = pca(Z)
    loadings = fixed_loadings() if mode == FIXED_PAPER else fitted_loadings(res)
    sent = np.full(len(rows), math.nan)
    toned = np.full(len(rows), math.nan)
    sent[complete] = build_sent(Z, loadings)
    toned[complete] = detone(res.scores, res.eigenvectors, loadings)
    if winsorize:
        sent = _winsorize(sent, winsorize)
        toned = _winsorize(toned, winsorize)
    reasons = {k: "missing_input" for k, ok in zip(keys, complete) if not ok}
    return SentimentTable(keys, sent, toned, mode, loadings, res, st, reasons)
