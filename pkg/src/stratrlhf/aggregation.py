"""Coordinate-wise medians over per-labeler confidence sets.

The main path replaces every confidence ellipsoid by its bounding box; the
set of achievable coordinate-wise medians is then itself a box and the
pessimistic value of an occupancy vector is separable per coordinate.
:func:`penalized_median_min` keeps the exact ellipsoids and solves the
L1-penalized reformulation instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError, NumericError
from .estimation import BoxBounds, ConfidenceSet


def median_index(k: int) -> int:
    """0-based position of the lower median, the ``ceil(k/2)``-th order statistic."""
    return (k + 1) // 2 - 1


def coordinate_median(vectors) -> np.ndarray:
    """Per-coordinate lower median of ``k`` vectors (exact median for odd ``k``)."""
    arr = np.asarray(vectors, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] == 0:
        raise InputError("coordinate_median needs at least one vector")
    idx = median_index(arr.shape[0])
    return np.partition(arr, idx, axis=0)[idx]


@dataclass(frozen=True)
class MedianBox:
    m_lo: np.ndarray
    m_hi: np.ndarray
    k: int

    def __post_init__(self):
        lo = np.asarray(self.m_lo, dtype=float)
        hi = np.asarray(self.m_hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InputError("median box bounds must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise InputError("median box lower bound exceeds upper bound")
        object.__setattr__(self, "m_lo", lo)
        object.__setattr__(self, "m_hi", hi)

    @property
    def d(self) -> int:
        return self.m_lo.shape[0]


def median_interval(boxes: Sequence[BoxBounds]) -> MedianBox:
    """Exact per-coordinate range of medians when each labeler's set is a box.

    The order statistic is monotone in every argument, so its range over a
    product of intervals is spanned by the all-lower and all-upper corners.
    """
    if len(boxes) == 0:
        raise InputError("median_interval needs at least one box")
    lo = np.stack([b.lo for b in boxes])
    hi = np.stack([b.hi for b in boxes])
    return MedianBox(coordinate_median(lo), coordinate_median(hi), len(boxes))


def median_interval_arrays(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Array form of :func:`median_interval` for ``(k, d)`` bound matrices."""
    return coordinate_median(lo), coordinate_median(hi)


def check_occupancy(z, d: int | None = None, atol: float = 1e-12) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or (d is not None and z.shape[0] != d):
        raise InputError(f"occupancy vector must be 1-D of length {d}")
    if np.any(np.abs(z) > 1.0 + atol):
        raise InputError("occupancy vector lies outside [-1, 1]^d")
    return z


def separable_min(z: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """``min <theta, z>`` over the box ``[lo, hi]``."""
    return float(np.where(z >= 0, z * lo, z * hi).sum())


def pessimistic_value(z, mbox: MedianBox) -> float:
    z = check_occupancy(z, mbox.d)
    return separable_min(z, mbox.m_lo, mbox.m_hi)


@dataclass(frozen=True)
class PenalizedConfig:
    eps: float = 1e-3
    big_m: float | None = None
    B: float = 1.0
    L: float = 1.0
    max_outer: int = 100
    inner_iter: int = 2000
    tol: float = 1e-12
    # finish with an exact solve of the convex epigraph form
    polish: bool = True

    def __post_init__(self):
        if not self.eps > 0:
            raise InputError(f"eps must be positive, got {self.eps}")

    @property
    def penalty(self) -> float:
        return 2.0 * self.B * self.L / self.eps if self.big_m is None else float(self.big_m)


@dataclass(frozen=True)
class PenalizedResult:
    theta: np.ndarray
    selections: np.ndarray
    # <theta, z> + M * sum |theta_j - theta_ij|
    objective: float
    # <theta, z>, the pessimistic value part
    value: float
    converged: bool
    trace: tuple = ()


class _Ellipsoid:
    """``{x : (x - c)^T M (x - c) <= r^2}`` with a Euclidean projection."""

    def __init__(self, cset: ConfidenceSet):
        self.center = np.asarray(cset.center, dtype=float)
        self.radius = float(cset.radius)
        metric = cset.fit.metric
        lam, q = np.linalg.eigh(metric)
        if lam[0] <= 0:
            raise NumericError("confidence metric is not positive definite")
        self.lam, self.q = lam, q

    def contains(self, x, slack: float = 1e-12) -> bool:
        w = self.q.T @ (x - self.center)
        return float(self.lam @ (w * w)) <= self.radius ** 2 * (1 + slack) + slack

    def project(self, y: np.ndarray) -> np.ndarray:
        if self.radius == 0:
            return self.center.copy()
        w = self.q.T @ (y - self.center)
        r2 = self.radius ** 2
        if float(self.lam @ (w * w)) <= r2:
            return y.copy()
        # Newton on the convex decreasing secular function approaches its root from below
        lam2 = self.lam * self.lam
        mu = 0.0
        for _ in range(100):
            a = 1.0 + mu * self.lam
            v2 = (w / a) ** 2
            excess = float(self.lam @ v2) - r2
            if excess <= 1e-15 * r2:
                break
            slope = -2.0 * float(lam2 @ (v2 / a))
            mu -= excess / slope
        return self.center + self.q @ (w / (1.0 + mu * self.lam))


def _theta_step(z: np.ndarray, sel: np.ndarray, big_m: float) -> np.ndarray:
    """Per coordinate, minimize ``z_j t + M sum_i |t - sel_ij|`` over t (exactly)."""
    k, d = sel.shape
    out = np.empty(d)
    for j in range(d):
        if abs(z[j]) >= k * big_m:
            raise InputError("penalty weight too small: the penalized problem is unbounded")
        cand = np.sort(sel[:, j])
        costs = z[j] * cand + big_m * np.abs(cand[:, None] - sel[None, :, j]).sum(axis=1)
        out[j] = cand[int(np.argmin(costs))]
    return out


def _selection_step(theta: np.ndarray, ell: _Ellipsoid, start: np.ndarray, iters: int) -> np.ndarray:
    """Projected subgradient on ``sum_j |theta_j - x_j|`` over the ellipsoid, steps ``c/sqrt(t)``."""
    if ell.radius == 0:
        return ell.center.copy()
    x = ell.project(start)
    best, best_val = x, float(np.abs(theta - x).sum())
    scale = ell.radius / math.sqrt(ell.lam[0])
    for t in range(1, iters + 1):
        g = np.sign(x - theta)
        if not g.any():
            break
        x = ell.project(x - (scale / math.sqrt(t)) * g / math.sqrt(len(g)))
        val = float(np.abs(theta - x).sum())
        if val < best_val:
            best, best_val = x, val
    return best


def penalized_median_min(z, sets: Sequence[ConfidenceSet], cfg: PenalizedConfig | None = None) -> PenalizedResult:
    """Minimize ``<theta, z> + M sum_ij |theta_j - theta_ij|`` over ``theta`` and ``theta_i in C_i``.

    Alternating minimization supplies a feasible start; block steps can
    stall on the nonsmooth coupling, so the convex problem is then solved
    directly (``cfg.polish``).
    """
    cfg = cfg or PenalizedConfig()
    if len(sets) == 0:
        raise InputError("penalized_median_min needs at least one confidence set")
    z = np.asarray(z, dtype=float)
    big_m = cfg.penalty
    ells = [_Ellipsoid(s) for s in sets]
    sel = np.stack([e.center for e in ells])

    def objective(theta, sel):
        return float(theta @ z) + big_m * float(np.abs(theta[None, :] - sel).sum())

    theta = _theta_step(z, sel, big_m)
    best = (objective(theta, sel), theta, sel.copy())
    trace = [best[0]]
    converged = False
    for _ in range(cfg.max_outer):
        sel = np.stack([_selection_step(theta, e, s, cfg.inner_iter) for e, s in zip(ells, sel)])
        theta = _theta_step(z, sel, big_m)
        obj = objective(theta, sel)
        trace.append(obj)
        if obj < best[0]:
            improvement = best[0] - obj
            best = (obj, theta, sel.copy())
            if improvement <= cfg.tol * max(1.0, abs(obj)):
                converged = True
                break
        else:
            converged = True
            break
    obj, theta, sel = best
    if cfg.polish:
        sel_p = _polish(z, ells, theta, sel, big_m)
        theta_p = _theta_step(z, sel_p, big_m)
        obj_p = objective(theta_p, sel_p)
        trace.append(obj_p)
        if obj_p < obj:
            obj, theta, sel = obj_p, theta_p, sel_p
    return PenalizedResult(theta=theta, selections=sel, objective=obj, value=float(theta @ z),
                           converged=converged, trace=tuple(trace))


def _polish(z: np.ndarray, ells: Sequence[_Ellipsoid], theta: np.ndarray, sel: np.ndarray,
            big_m: float) -> np.ndarray:
    """Solve the convex epigraph form with SLSQP from the alternating solution; returns selections.

    Variables are ``theta``, the selections of labelers with a positive
    radius, and ``t_ij >= |theta_j - theta_ij|``; the objective is scaled
    by ``1 / M``.
    """
    from scipy.optimize import minimize

    k, d = sel.shape
    free = [i for i, e in enumerate(ells) if e.radius > 0]
    nf = len(free)
    n_var = d + nf * d + k * d
    t0 = d + nf * d
    slot = {i: d + p * d for p, i in enumerate(free)}
    # linear rows: t_ij - theta_j + theta_ij >= 0 and t_ij + theta_j - theta_ij >= 0
    a = np.zeros((2 * k * d, n_var))
    b = np.zeros(2 * k * d)
    row = 0
    for i in range(k):
        for j in range(d):
            for sign in (1.0, -1.0):
                a[row, t0 + i * d + j] = 1.0
                a[row, j] = -sign
                if i in slot:
                    a[row, slot[i] + j] = sign
                else:
                    b[row] = sign * ells[i].center[j]
                row += 1
    metrics = {i: (ells[i].q * ells[i].lam) @ ells[i].q.T for i in free}

    def ell_fun(x):
        out = np.empty(nf)
        for p, i in enumerate(free):
            w = x[slot[i]:slot[i] + d] - ells[i].center
            out[p] = 1.0 - (w @ metrics[i] @ w) / ells[i].radius ** 2
        return out

    def ell_jac(x):
        jac = np.zeros((nf, n_var))
        for p, i in enumerate(free):
            w = x[slot[i]:slot[i] + d] - ells[i].center
            jac[p, slot[i]:slot[i] + d] = -2.0 * (metrics[i] @ w) / ells[i].radius ** 2
        return jac

    grad = np.concatenate([z / big_m, np.zeros(nf * d), np.ones(k * d)])
    x0 = np.concatenate([theta, *(sel[i] for i in free), np.abs(theta[None, :] - sel).ravel()])
    cons = [{"type": "ineq", "fun": lambda x: a @ x + b, "jac": lambda x: a}]
    if nf:
        cons.append({"type": "ineq", "fun": ell_fun, "jac": ell_jac})
    res = minimize(lambda x: float(grad @ x), x0, jac=lambda x: grad, constraints=cons,
                   method="SLSQP", options={"ftol": 1e-15, "maxiter": 1000})
    out = sel.copy()
    for i in free:
        out[i] = ells[i].project(res.x[slot[i]:slot[i] + d])
    return out
