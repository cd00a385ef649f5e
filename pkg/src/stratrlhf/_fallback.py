"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

ARMIJO_C = 1e-4
STEP_MAX = 1e8
STEP_MIN = 1e-14
# Armijo slack relative to |f|: below it the objective change is rounding noise
F_SLACK = 1e-12


def _log_sigmoid(u):
    return -np.logaddexp(0.0, -u)


def _sigmoid(u):
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _project_ball(v, bound):
    nrm = np.sqrt(v @ v)
    if nrm > bound:
        return v * (bound / nrm)
    return v


def bt_objective(y, theta, reg):
    u = y @ theta
    return float(_log_sigmoid(u).sum() - 0.5 * reg * (theta @ theta))


def fit_bt(y, theta0, bound, reg, tol=1e-8, max_iter=5000):
    """Projected gradient ascent on sum(log sigmoid(y @ theta)) - reg/2 |theta|^2.

    Same contract as the compiled ``fit_bt``.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    inv_n = 1.0 / n
    theta = _project_ball(np.array(theta0, dtype=np.float64), bound)

    def objective(th):
        u = y @ th
        return float(_log_sigmoid(u).sum() - 0.5 * reg * (th @ th)), u

    def gradient(th, u):
        return _sigmoid(-u) @ y - reg * th

    def pg_norm(th, g):
        return float(np.linalg.norm(th - _project_ball(th + inv_n * g, bound)))

    f, u = objective(theta)
    g = gradient(theta, u)
    pg = pg_norm(theta, g)
    step = 1.0
    it = 0
    while pg > tol and it < max_iter:
        it += 1
        accepted = False
        while step >= STEP_MIN:
            trial = _project_ball(theta + step * inv_n * g, bound)
            f_trial, u_trial = objective(trial)
            if f_trial >= f + ARMIJO_C * float(g @ (trial - theta)) - F_SLACK * (1.0 + abs(f)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        g_new = gradient(trial, u_trial)
        s_vec = trial - theta
        y_vec = inv_n * (g - g_new)
        sy = float(s_vec @ y_vec)
        theta, u, f, g = trial, u_trial, f_trial, g_new
        pg = pg_norm(theta, g)
        # Barzilai-Borwein trial step; concavity makes sy >= 0
        step = float(s_vec @ s_vec) / sy if sy > 0 else step * 2.0
        step = min(max(step, STEP_MIN), STEP_MAX)
    return theta, it, pg, f
