# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the Bradley-Terry maximum-likelihood fit.

Mirrors ``stratrlhf._fallback`` exactly; the two are selected by
``stratrlhf.kernels`` at import time.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, log1p, sqrt

cnp.import_array()

cdef double ARMIJO_C = 1e-4
cdef double STEP_MAX = 1e8
cdef double STEP_MIN = 1e-14
# Armijo slack relative to |f|: below it the objective change is rounding noise
cdef double F_SLACK = 1e-12


cdef inline double _log_sigmoid(double u) noexcept nogil:
    if u >= 0.0:
        return -log1p(exp(-u))
    return u - log1p(exp(u))


cdef inline double _sigmoid(double u) noexcept nogil:
    cdef double e
    if u >= 0.0:
        return 1.0 / (1.0 + exp(-u))
    e = exp(u)
    return e / (1.0 + e)


cdef double _objective(const double[:, ::1] y, const double[::1] theta,
                       double reg, double[::1] u) noexcept nogil:
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], j, c
    cdef double acc = 0.0, s, sq = 0.0
    for j in range(n):
        s = 0.0
        for c in range(d):
            s += y[j, c] * theta[c]
        u[j] = s
        acc += _log_sigmoid(s)
    for c in range(d):
        sq += theta[c] * theta[c]
    return acc - 0.5 * reg * sq


cdef void _gradient(const double[:, ::1] y, const double[::1] theta, double reg,
                    const double[::1] u, double[::1] g) noexcept nogil:
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], j, c
    cdef double w
    for c in range(d):
        g[c] = -reg * theta[c]
    for j in range(n):
        w = _sigmoid(-u[j])
        for c in range(d):
            g[c] += w * y[j, c]


cdef void _project_ball(double[::1] v, double bound) noexcept nogil:
    cdef Py_ssize_t d = v.shape[0], c
    cdef double nrm = 0.0, scale
    for c in range(d):
        nrm += v[c] * v[c]
    nrm = sqrt(nrm)
    if nrm > bound:
        scale = bound / nrm
        for c in range(d):
            v[c] *= scale


cdef double _pg_norm(const double[::1] theta, const double[::1] g, double inv_n,
                     double bound, double[::1] work) noexcept nogil:
    cdef Py_ssize_t d = theta.shape[0], c
    cdef double acc = 0.0, diff
    for c in range(d):
        work[c] = theta[c] + inv_n * g[c]
    _project_ball(work, bound)
    for c in range(d):
        diff = theta[c] - work[c]
        acc += diff * diff
    return sqrt(acc)


def fit_bt(const double[:, ::1] y, theta0, double bound, double reg,
           double tol=1e-8, int max_iter=5000):
    """Projected gradient ascent on sum(log sigmoid(y @ theta)) - reg/2 |theta|^2.

    ``y`` holds the label-signed difference vectors. Returns
    ``(theta, n_iter, pg_norm, objective)``; ``pg_norm`` is the norm of the
    gradient mapping of the per-sample objective.
    """
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], c
    cdef double[::1] theta = np.array(theta0, dtype=np.float64, copy=True)
    cdef double[::1] trial = np.empty(d)
    cdef double[::1] g = np.empty(d)
    cdef double[::1] g_new = np.empty(d)
    cdef double[::1] work = np.empty(d)
    cdef double[::1] u = np.empty(n)
    cdef double[::1] u_trial = np.empty(n)
    cdef double inv_n = 1.0 / n
    cdef double f, f_trial, step = 1.0, pg, lin, ss, sy, ds
    cdef int it = 0
    cdef bint accepted

    with nogil:
        _project_ball(theta, bound)
        f = _objective(y, theta, reg, u)
        _gradient(y, theta, reg, u, g)
        pg = _pg_norm(theta, g, inv_n, bound, work)
        while pg > tol and it < max_iter:
            it += 1
            accepted = False
            while step >= STEP_MIN:
                for c in range(d):
                    trial[c] = theta[c] + step * inv_n * g[c]
                _project_ball(trial, bound)
                lin = 0.0
                for c in range(d):
                    lin += g[c] * (trial[c] - theta[c])
                f_trial = _objective(y, trial, reg, u_trial)
                if f_trial >= f + ARMIJO_C * lin - F_SLACK * (1.0 + fabs(f)):
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
            _gradient(y, trial, reg, u_trial, g_new)
            ss = 0.0
            sy = 0.0
            for c in range(d):
                ds = trial[c] - theta[c]
                ss += ds * ds
                sy += ds * inv_n * (g[c] - g_new[c])
                theta[c] = trial[c]
                g[c] = g_new[c]
            for c in range(n):
                u[c] = u_trial[c]
            f = f_trial
            pg = _pg_norm(theta, g, inv_n, bound, work)
            # Barzilai-Borwein trial step; concavity makes sy >= 0
            if sy > 0.0:
                step = ss / sy
            else:
                step = step * 2.0
            if step > STEP_MAX:
                step = STEP_MAX
            if step < STEP_MIN:
                step = STEP_MIN
    return np.asarray(theta), it, pg, f


def bt_objective(const double[:, ::1] y, theta, double reg):
    cdef double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef double[::1] u = np.empty(y.shape[0])
    return _objective(y, th, reg, u)
