"""Binary logit by Newton-Raphson (equivalently IRLS)."""
import numpy as np
from scipy import linalg, stats
from scipy.special import expit, log_expit

from ..errors import NumericError, SeparationError, SingularDesignError
from .results import RegressionResult

# |x'b| beyond this means fitted probabilities within ~1e-13 of 0 or 1
ETA_LIMIT = 30.0


def log_likelihood(X, y, beta):
    eta = X @ beta
    return float(np.sum(y * log_expit(eta) + (1.0 - y) * log_expit(-eta)))


def score(X, y, beta):
    return X.T @ (y - expit(X @ beta))


def gradient_check(design, beta, h=1e-6):
    """Largest relative gap between the analytic score and central differences."""
    X, y = design.X, design.y
    beta = np.asarray(beta, dtype=float)
    g = score(X, y, beta)
    worst = 0.0
    for j in range(len(beta)):
        e = np.zeros_like(beta)
        e[j] = h
        fd = (log_likelihood(X, y, beta + e) - log_likelihood(X, y, beta - e)) / (2.0 * h)
        worst = max(worst, abs(fd - g[j]) / max(1.0, abs(g[j])))
    return worst


def logit_fit(design, robust_se=True, max_iter=100, tol=1e-8):
    """Maximum likelihood logit.

    Converges when the largest absolute score element is below ``tol`` or
    the log-likelihood changes by less than 1e-10 relative. Any linear
    predictor beyond +/-30 is treated as (quasi-)separation.
    """
    X, y = design.X, design.y
    n, k = X.shape
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logit needs a 0/1 dependent")
    if y.min() == y.max():
        raise SeparationError("dependent has a single class")
    if n <= k:
        raise SingularDesignError(f"need N > K, got N={n}, K={k}")

    beta = np.zeros(k)
    ll = log_likelihood(X, y, beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(X @ beta)
        g = X.T @ (y - p)
        if np.max(np.abs(g)) < tol:
            converged = True
            it -= 1
            break
        w = p * (1.0 - p)
        info = X.T @ (X * w[:, None])
        try:
            step = linalg.solve(info, g, assume_a="pos")
        except (linalg.LinAlgError, ValueError) as exc:
            raise SingularDesignError(f"information matrix is singular: {exc}") from None
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = log_likelihood(X, y, cand)
            if ll_new >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        beta, ll_prev, ll = cand, ll, ll_new
        if np.max(np.abs(X @ beta)) > ETA_LIMIT:
            raise SeparationError(
                f"linear predictor diverged beyond {ETA_LIMIT} at iteration {it}; "
                "data are (quasi-)separated")
        if abs(ll - ll_prev) <= 1e-10 * abs(ll_prev):
            converged = True
            break
    if not np.all(np.isfinite(beta)):
        raise NumericError("logit produced non-finite coefficients")

    p = expit(X @ beta)
    if np.all(np.abs(y - p) < 1e-6):
        raise SeparationError("fitted probabilities reproduce y exactly: perfect separation")
    w = p * (1.0 - p)
    info = X.T @ (X * w[:, None])
    bread = linalg.inv(info)
    if robust_se and robust_se != "none":
        s = X * (y - p)[:, None]
        cov = bread @ (s.T @ s) @ bread
        label = "logit/sandwich"
    else:
        cov = bread
        label = "logit/mle"
    se = np.sqrt(np.diag(cov))
    z = beta / se
    pv = 2.0 * stats.norm.sf(np.abs(z))
    ybar = y.mean()
    ll0 = n * (ybar * np.log(ybar) + (1 - ybar) * np.log(1 - ybar))
    return RegressionResult(
        names=list(design.column_names), coefficients=beta, standard_errors=se, stats=z,
        p_values=pv, n_obs=n, fit_stat=float(1.0 - ll / ll0), fit_label="pseudo-R2",
        converged=converged, iterations=it, cov=cov, estimator=label,
        extra={"loglik": ll, "loglik_null": ll0, "score": X.T @ (y - p)},
    )
