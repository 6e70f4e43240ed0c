"""Coordinate-descent kernels for the penalized regression paths.

All kernels work on standardized designs (columns with mean 0, variance 1
computed with 1/n) and a penalty applied to the mean-loss objective:

    gaussian:  (1/2n) * sum((y - b0 - X b)^2) + lam * ||b||_1
    binomial:  -(1/n) * loglik(b0, b)         + lam * ||b||_1

The binomial solver runs iteratively reweighted least squares around the
weighted coordinate-descent inner loop, warm-starting along the lambda path.
"""

import numpy as np
from numba import njit

PROB_CLIP = 1e-5
MAX_SWEEPS = 10_000


@njit(cache=True)
def _soft_threshold(z, lam):
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


@njit(cache=True)
def _gaussian_cd(gram, q, lam, beta, tol, max_sweeps):
    """Cyclic coordinate descent on the Gram form; updates ``beta`` in place."""
    p = beta.shape[0]
    for sweep in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            r = q[j] + gjj * beta[j]
            for k in range(p):
                r -= gram[j, k] * beta[k]
            new = _soft_threshold(r, lam) / gjj
            change = new - beta[j]
            if change != 0.0:
                beta[j] = new
                if abs(change) > delta:
                    delta = abs(change)
        if delta < tol:
            return sweep + 1
    return max_sweeps


@njit(cache=True)
def gaussian_path(gram, q, lambdas, tol):
    """Solve the lasso at each lambda (descending), warm-starting.

    Parameters
    ----------
    gram : (p, p) array, (1/n) Xs' Xs on the standardized design
    q : (p,) array, (1/n) Xs' (y - ybar)
    lambdas : (m,) descending penalty grid
    tol : convergence threshold on the max coefficient change per sweep

    Returns
    -------
    betas : (m, p) standardized-scale coefficients per lambda
    """
    m = lambdas.shape[0]
    p = q.shape[0]
    betas = np.zeros((m, p))
    beta = np.zeros(p)
    for i in range(m):
        _gaussian_cd(gram, q, lambdas[i], beta, tol, MAX_SWEEPS)
        betas[i] = beta
    return betas


@njit(cache=True)
def _weighted_cd(gram_w, q_w, x_w, q0, s_w, lam, beta, b0, tol, max_sweeps):
    """Coordinate descent for the weighted least-squares subproblem.

    Solves min (1/2n) sum w_i (z_i - b0 - x_i b)^2 + lam ||b||_1 given the
    weighted moments; returns the updated intercept.
    """
    p = beta.shape[0]
    for _ in range(max_sweeps):
        delta = 0.0
        b0_new = q0
        for k in range(p):
            b0_new -= x_w[k] * beta[k]
        b0_new /= s_w
        if abs(b0_new - b0) > delta:
            delta = abs(b0_new - b0)
        b0 = b0_new
        for j in range(p):
            gjj = gram_w[j, j]
            if gjj <= 0.0:
                continue
            r = q_w[j] - b0 * x_w[j] + gjj * beta[j]
            for k in range(p):
                r -= gram_w[j, k] * beta[k]
            new = _soft_threshold(r, lam) / gjj
            change = new - beta[j]
            if change != 0.0:
                beta[j] = new
                if abs(change) > delta:
                    delta = abs(change)
        if delta < tol:
            break
    return b0


@njit(cache=True)
def binomial_path(xs, xs_t, y, lambdas, tol, max_outer):
    """IRLS + coordinate descent along a descending lambda path.

    Parameters
    ----------
    xs : (n, p) standardized design, C-contiguous
    xs_t : (p, n) its transpose, C-contiguous (for BLAS-backed products)
    y : (n,) 0/1 response
    lambdas : (m,) descending penalty grid
    tol : convergence threshold on coefficient changes (inner and outer)
    max_outer : cap on IRLS iterations per lambda

    Returns
    -------
    b0s : (m,) intercepts; betas : (m, p) standardized-scale coefficients
    """
    n, p = xs.shape
    m = lambdas.shape[0]
    betas = np.zeros((m, p))
    b0s = np.zeros(m)
    beta = np.zeros(p)
    ybar = y.mean()
    b0 = np.log(ybar / (1.0 - ybar))
    w = np.empty(n)
    wz = np.empty(n)
    for i in range(m):
        lam = lambdas[i]
        for _ in range(max_outer):
            eta = np.dot(xs, beta)
            s_w = 0.0
            q0 = 0.0
            for t in range(n):
                e = eta[t] + b0
                if e > 30.0:
                    e = 30.0
                elif e < -30.0:
                    e = -30.0
                pr = 1.0 / (1.0 + np.exp(-e))
                if pr < PROB_CLIP:
                    pr = PROB_CLIP
                elif pr > 1.0 - PROB_CLIP:
                    pr = 1.0 - PROB_CLIP
                wt = pr * (1.0 - pr)
                z = e + (y[t] - pr) / wt
                w[t] = wt
                wz[t] = wt * z
                s_w += wt
                q0 += wt * z
            s_w /= n
            q0 /= n
            wx = xs * w.reshape(n, 1)
            gram_w = np.dot(xs_t, wx) / n
            q_w = np.dot(xs_t, wz) / n
            x_w = np.dot(xs_t, w) / n
            b0_prev = b0
            beta_prev = beta.copy()
            b0 = _weighted_cd(
                gram_w, q_w, x_w, q0, s_w, lam, beta, b0, tol, MAX_SWEEPS
            )
            outer_delta = abs(b0 - b0_prev)
            for j in range(p):
                if abs(beta[j] - beta_prev[j]) > outer_delta:
                    outer_delta = abs(beta[j] - beta_prev[j])
            if outer_delta < tol:
                break
        b0s[i] = b0
        betas[i] = beta
    return b0s, betas
