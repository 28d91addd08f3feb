"""Ordinary least squares with classical or heteroskedasticity-robust errors."""
import numpy as np
from scipy import linalg, stats

from ..errors import SingularDesignError
from .results import RegressionResult


def ols_fit(design, robust_se="hc1"):
    X, y = design.X, design.y
    n, k = X.shape
    if n <= k:
        raise SingularDesignError(f"need N > K, got N={n}, K={k}")
    q, r = np.linalg.qr(X)
    if np.min(np.abs(np.diag(r))) <= 1e-12 * np.max(np.abs(np.diag(r))):
        raise SingularDesignError("design is rank deficient", design.column_names)
    beta = linalg.solve_triangular(r, q.T @ y)
    resid = y - X @ beta
    r_inv = linalg.solve_triangular(r, np.eye(k))
    bread = r_inv @ r_inv.T  # (X'X)^-1

    if robust_se in ("none", None, False):
        cov = bread * (resid @ resid) / (n - k)
    elif robust_se in ("hc0", "hc1"):
        xe = X * resid[:, None]
        cov = bread @ (xe.T @ xe) @ bread
        if robust_se == "hc1":
            cov *= n / (n - k)
    else:
        raise ValueError(f"unknown robust_se {robust_se!r}")

    se = np.sqrt(np.diag(cov))
    t = beta / se
    p = 2.0 * stats.t.sf(np.abs(t), n - k)
    dev = y - y.mean()
    sst = dev @ dev
    r2 = 1.0 - (resid @ resid) / sst if sst > 0 else 1.0
    return RegressionResult(
        names=list(design.column_names), coefficients=beta, standard_errors=se, stats=t,
        p_values=p, n_obs=n, fit_stat=float(r2), fit_label="R2", cov=cov,
        estimator=f"ols/{robust_se}", extra={"residuals": resid},
    )
