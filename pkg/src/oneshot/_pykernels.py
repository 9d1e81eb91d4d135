"""Vectorised numpy implementation of the per-cell kernels.

This module is the reference backend.  The compiled module ``_ckernels``
exposes the same three functions with identical semantics; ``kernels``
picks one of them at import time.

All functions take the raw arrays of a fitted problem:

eta : (I,) baseline parameters
alpha : (J,) stress coefficients
X : (S, J) stress levels
Kc : (I, S) group sizes (cells with ``Kc == 0`` are ignored)
n : (I, S) failure counts
beta : tuning parameter, ``beta >= 0``
"""

import numpy as np

PROB_FLOOR = 1e-12
_LN2 = 0.6931471805599453


def _log1mexp(x):
    # log(1 - exp(x)) for x <= 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.where(x < -_LN2, np.log1p(-np.exp(x)), np.log(-np.expm1(x)))


def _cells(eta, alpha, X, with_derivatives):
    I = eta.shape[0]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        t = np.exp(eta)
        log_gamma = _log1mexp(-t)
        log_g = np.cumsum(log_gamma[::-1])[::-1]
        log1m_g = _log1mexp(log_g)
        lam = np.exp(X @ alpha)
        log_r = np.outer(log1m_g, lam)
        r = np.exp(log_r)
        f = -np.expm1(log_r)
        if not with_derivatives:
            return f, r, None
        h = np.where(t < 1e-300, 1.0, t / np.expm1(t))
        g = np.exp(log_g)
        base = -lam[None, :] * g[:, None] * np.exp((lam[None, :] - 1.0) * log1m_g[:, None])
        upper = np.triu(np.ones((I, I))) * h[None, :]
        d_eta = base[:, :, None] * upper[:, None, :]
        d_alpha = (r * log_r)[:, :, None] * X[None, :, :]
        D = np.concatenate([d_eta, d_alpha], axis=2)
    # R underflowed to 0: the cell sits inside the clamp, where the objective is flat
    D[r == 0.0] = 0.0
    return f, r, D


def _weights(Kc, n):
    Kc = np.asarray(Kc, dtype=float)
    active = Kc > 0
    w = Kc / Kc.sum()
    p1 = np.divide(n, Kc, out=np.zeros_like(Kc), where=active)
    return active, w, p1


def _cell_objective(a, b, p1, beta):
    p2 = 1.0 - p1
    if beta == 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(p1 > 0, p1 * np.log(p1 / a), 0.0)
            t2 = np.where(p2 > 0, p2 * np.log(p2 / b), 0.0)
        return t1 + t2
    return a ** (beta + 1) + b ** (beta + 1) - (beta + 1) / beta * (p1 * a**beta + p2 * b**beta)


def objective(eta, alpha, X, Kc, n, beta):
    f, r, _ = _cells(eta, alpha, X, False)
    active, w, p1 = _weights(Kc, n)
    a = np.clip(f, PROB_FLOOR, 1 - PROB_FLOOR)
    b = np.clip(r, PROB_FLOOR, 1 - PROB_FLOOR)
    vals = _cell_objective(a, b, p1, beta)
    return float(np.sum(w[active] * vals[active]))


def objective_gradient(eta, alpha, X, Kc, n, beta):
    f, r, D = _cells(eta, alpha, X, True)
    active, w, p1 = _weights(Kc, n)
    a = np.clip(f, PROB_FLOOR, 1 - PROB_FLOOR)
    b = np.clip(r, PROB_FLOOR, 1 - PROB_FLOOR)
    vals = _cell_objective(a, b, p1, beta)
    value = float(np.sum(w[active] * vals[active]))
    coef = np.where(active, w * (beta + 1) * (a - p1) * (a ** (beta - 1) + b ** (beta - 1)), 0.0)
    # d pi_1 / d theta = -delta
    grad = -np.einsum("is,isp->p", coef, D)
    return value, grad


def information_matrices(eta, alpha, X, Kc, beta):
    f, r, D = _cells(eta, alpha, X, True)
    Kc = np.asarray(Kc, dtype=float)
    active = Kc > 0
    w = np.where(active, Kc / Kc.sum(), 0.0)
    a = np.clip(f, PROB_FLOOR, 1 - PROB_FLOOR)
    b = np.clip(r, PROB_FLOOR, 1 - PROB_FLOOR)
    psi = a ** (beta - 1) + b ** (beta - 1)
    wj = w * psi
    wk = w * a * b * psi * psi
    J = np.einsum("is,isp,isq->pq", wj, D, D)
    K = np.einsum("is,isp,isq->pq", wk, D, D)
    return J, K
