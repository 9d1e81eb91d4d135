# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-cell kernels; same contract as ``oneshot._pykernels``."""

import numpy as np

from libc.math cimport exp, log, log1p, expm1, pow, INFINITY, NAN

cdef double PROB_FLOOR = 1e-12
cdef double LN2 = 0.6931471805599453


cdef inline double _log1mexp(double x) nogil:
    if x < -LN2:
        return log1p(-exp(x))
    return log(-expm1(x))


cdef inline double _clamp(double p) nogil:
    if p < PROB_FLOOR:
        return PROB_FLOOR
    if p > 1.0 - PROB_FLOOR:
        return 1.0 - PROB_FLOOR
    return p


cdef inline double _xlogxy(double x, double y) nogil:
    if x <= 0.0:
        return 0.0
    return x * log(x / y)


cdef class _Workspace:
    cdef double[::1] log_g
    cdef double[::1] log1m_g
    cdef double[::1] h
    cdef double[::1] lam
    cdef double[::1] d

    def __cinit__(self, Py_ssize_t I, Py_ssize_t S, Py_ssize_t P):
        self.log_g = np.empty(I)
        self.log1m_g = np.empty(I)
        self.h = np.empty(I)
        self.lam = np.empty(S)
        self.d = np.empty(P)


cdef void _baseline(const double[::1] eta, const double[::1] alpha, const double[:, ::1] X,
                    _Workspace ws) noexcept nogil:
    cdef Py_ssize_t I = eta.shape[0], S = X.shape[0], J = X.shape[1]
    cdef Py_ssize_t u, s, j
    cdef double t, acc = 0.0, z
    for u in range(I - 1, -1, -1):
        t = exp(eta[u])
        acc += _log1mexp(-t)
        ws.log_g[u] = acc
        if t < 1e-300:
            ws.h[u] = 1.0
        else:
            ws.h[u] = t / expm1(t)
    for u in range(I):
        ws.log1m_g[u] = _log1mexp(ws.log_g[u])
    for s in range(S):
        z = 0.0
        for j in range(J):
            z += alpha[j] * X[s, j]
        ws.lam[s] = exp(z)


cdef void _delta(Py_ssize_t i, Py_ssize_t s, double r, double log_r, const double[:, ::1] X,
                 _Workspace ws) noexcept nogil:
    # d = dR/dtheta for cell (i, s)
    cdef Py_ssize_t I = ws.log_g.shape[0], J = X.shape[1], u, j
    cdef double lam = ws.lam[s]
    cdef double base
    if r == 0.0:
        # R underflowed: the cell sits inside the clamp, where the objective is flat
        for u in range(I + J):
            ws.d[u] = 0.0
        return
    base = -lam * exp(ws.log_g[i]) * exp((lam - 1.0) * ws.log1m_g[i])
    for u in range(I):
        if u < i:
            ws.d[u] = 0.0
        else:
            ws.d[u] = base * ws.h[u]
    for j in range(J):
        ws.d[I + j] = r * log_r * X[s, j]


def _check(eta, alpha, X, Kc):
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    alpha = np.ascontiguousarray(alpha, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    Kc = np.ascontiguousarray(Kc, dtype=np.float64)
    return eta, alpha, X, Kc


def objective(eta, alpha, X, Kc, n, double beta):
    eta, alpha, X, Kc = _check(eta, alpha, X, Kc)
    cdef const double[::1] e = eta
    cdef const double[::1] al = alpha
    cdef const double[:, ::1] x = X
    cdef const double[:, ::1] kc = Kc
    cdef const double[:, ::1] nn = np.ascontiguousarray(n, dtype=np.float64)
    cdef Py_ssize_t I = e.shape[0], S = x.shape[0], i, s
    cdef _Workspace ws = _Workspace(I, S, I + x.shape[1])
    cdef double total = 0.0, value = 0.0, log_r, a, b, p1, p2, w
    with nogil:
        _baseline(e, al, x, ws)
        for i in range(I):
            for s in range(S):
                total += kc[i, s]
        for i in range(I):
            for s in range(S):
                if kc[i, s] <= 0.0:
                    continue
                w = kc[i, s] / total
                p1 = nn[i, s] / kc[i, s]
                p2 = 1.0 - p1
                log_r = ws.lam[s] * ws.log1m_g[i]
                a = _clamp(-expm1(log_r))
                b = _clamp(exp(log_r))
                if beta == 0.0:
                    value += w * (_xlogxy(p1, a) + _xlogxy(p2, b))
                else:
                    value += w * (pow(a, beta + 1.0) + pow(b, beta + 1.0)
                                  - (beta + 1.0) / beta * (p1 * pow(a, beta) + p2 * pow(b, beta)))
    return value


def objective_gradient(eta, alpha, X, Kc, n, double beta):
    eta, alpha, X, Kc = _check(eta, alpha, X, Kc)
    cdef const double[::1] e = eta
    cdef const double[::1] al = alpha
    cdef const double[:, ::1] x = X
    cdef const double[:, ::1] kc = Kc
    cdef const double[:, ::1] nn = np.ascontiguousarray(n, dtype=np.float64)
    cdef Py_ssize_t I = e.shape[0], S = x.shape[0], P = I + x.shape[1], i, s, p
    cdef _Workspace ws = _Workspace(I, S, P)
    grad_arr = np.zeros(P)
    cdef double[::1] grad = grad_arr
    cdef double total = 0.0, value = 0.0, log_r, r, a, b, p1, p2, w, coef
    with nogil:
        _baseline(e, al, x, ws)
        for i in range(I):
            for s in range(S):
                total += kc[i, s]
        for i in range(I):
            for s in range(S):
                if kc[i, s] <= 0.0:
                    continue
                w = kc[i, s] / total
                p1 = nn[i, s] / kc[i, s]
                p2 = 1.0 - p1
                log_r = ws.lam[s] * ws.log1m_g[i]
                r = exp(log_r)
                a = _clamp(-expm1(log_r))
                b = _clamp(r)
                if beta == 0.0:
                    value += w * (_xlogxy(p1, a) + _xlogxy(p2, b))
                else:
                    value += w * (pow(a, beta + 1.0) + pow(b, beta + 1.0)
                                  - (beta + 1.0) / beta * (p1 * pow(a, beta) + p2 * pow(b, beta)))
                coef = w * (beta + 1.0) * (a - p1) * (pow(a, beta - 1.0) + pow(b, beta - 1.0))
                _delta(i, s, r, log_r, x, ws)
                for p in range(P):
                    grad[p] -= coef * ws.d[p]
    return value, grad_arr


def information_matrices(eta, alpha, X, Kc, double beta):
    eta, alpha, X, Kc = _check(eta, alpha, X, Kc)
    cdef const double[::1] e = eta
    cdef const double[::1] al = alpha
    cdef const double[:, ::1] x = X
    cdef const double[:, ::1] kc = Kc
    cdef Py_ssize_t I = e.shape[0], S = x.shape[0], P = I + x.shape[1], i, s, p, q
    cdef _Workspace ws = _Workspace(I, S, P)
    J_arr = np.zeros((P, P))
    K_arr = np.zeros((P, P))
    cdef double[:, ::1] Jm = J_arr
    cdef double[:, ::1] Km = K_arr
    cdef double total = 0.0, log_r, r, a, b, w, psi, wj, wk
    with nogil:
        _baseline(e, al, x, ws)
        for i in range(I):
            for s in range(S):
                total += kc[i, s]
        for i in range(I):
            for s in range(S):
                if kc[i, s] <= 0.0:
                    continue
                w = kc[i, s] / total
                log_r = ws.lam[s] * ws.log1m_g[i]
                r = exp(log_r)
                a = _clamp(-expm1(log_r))
                b = _clamp(r)
                psi = pow(a, beta - 1.0) + pow(b, beta - 1.0)
                wj = w * psi
                wk = w * a * b * psi * psi
                _delta(i, s, r, log_r, x, ws)
                for p in range(P):
                    for q in range(p + 1):
                        Jm[p, q] += wj * ws.d[p] * ws.d[q]
                        Km[p, q] += wk * ws.d[p] * ws.d[q]
        for p in range(P):
            for q in range(p):
                Jm[q, p] = Jm[p, q]
                Km[q, p] = Km[p, q]
    return J_arr, K_arr
