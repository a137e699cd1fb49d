"""Small dense linear-algebra helpers shared by the sampling and exact paths."""

import numpy as np

DEGENERACY_RTOL = 1e-12
PINV_RTOL = 1e-12


def psd_cholesky(cov, rtol=DEGENERACY_RTOL):
    """Lower-triangular factor of a PSD matrix in the given (unpivoted) order.

    A pivot whose conditional variance falls below ``rtol`` times the
    marginal variance of that coordinate is treated as exactly zero: its
    column is dropped and the coordinate is flagged degenerate.

    Returns
    -------
    L : ndarray (n, n)
        ``L @ L.T`` reproduces ``cov`` up to rounding.
    degenerate : ndarray of bool (n,)
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    L = np.zeros((n, n))
    degenerate = np.zeros(n, dtype=bool)
    for k in range(n):
        pivot = cov[k, k] - L[k, :k] @ L[k, :k]
        if pivot <= rtol * cov[k, k]:
            degenerate[k] = True
            continue
        L[k, k] = np.sqrt(pivot)
        below = cov[k + 1:, k] - L[k + 1:, :k] @ L[k, :k]
        L[k + 1:, k] = below / L[k, k]
    return L, degenerate


def pinv_psd(mat, rtol=PINV_RTOL):
    """Pseudo-inverse of a symmetric PSD matrix with a relative eigenvalue cutoff."""
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        return mat.copy()
    w, v = np.linalg.eigh(mat)
    cutoff = rtol * max(w.max(), 0.0)
    inv = np.where(w > cutoff, 1.0 / np.where(w > cutoff, w, 1.0), 0.0)
    return (v * inv) @ v.T


def gaussian_conditional(cov, given, rest):
    """Regression matrix and residual covariance of ``X[rest] | X[given]``.

    ``E[X_rest | X_given = x] = mu_rest + coef @ (x - mu_given)`` and the
    conditional covariance is ``resid`` (Schur complement, pseudo-inverse
    when ``cov[given, given]`` is singular).
    """
    cov = np.asarray(cov, dtype=float)
    given = list(given)
    rest = list(rest)
    s_gg = cov[np.ix_(given, given)]
    s_rg = cov[np.ix_(rest, given)]
    coef = s_rg @ pinv_psd(s_gg)
    resid = cov[np.ix_(rest, rest)] - coef @ s_rg.T
    resid = 0.5 * (resid + resid.T)
    return coef, resid
