"""Policy optimization over the occupancy hyperrectangle, and welfare metrics.

Every optimizer here is exact: the objectives are separable per
coordinate, so the maximizer follows a sign rule. Coordinates with a zero
(or zero-straddling) coefficient get ``z_j = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .aggregation import MedianBox, coordinate_median, separable_min
from .env import ProblemInstance
from .errors import InputError, NumericError
from .estimation import BoxBounds

ALGORITHMS = ("naive_mle", "pessimistic_sw", "median_mle", "pessimistic_momle")


@dataclass(frozen=True)
class Policy:
    z: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 1 or np.any(np.abs(z) > 1.0):
            raise InputError("policy occupancy must be a vector in [-1, 1]^d")
        object.__setattr__(self, "z", z)


def sign_rule(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Maximizer of ``sum_j min(lo_j z_j, hi_j z_j)`` over ``[-1, 1]^d``."""
    return np.where(lo > 0, 1.0, np.where(hi < 0, -1.0, 0.0))


def optimize_linear(theta, provenance: str = "linear") -> Policy:
    theta = np.asarray(theta, dtype=float)
    return Policy(np.sign(theta), provenance)


def optimize_pessimistic_median(mbox: MedianBox, provenance: str = "pessimistic_momle") -> Policy:
    return Policy(sign_rule(mbox.m_lo, mbox.m_hi), provenance)


def optimize_pessimistic_average(boxes: Sequence[BoxBounds], provenance: str = "pessimistic_sw") -> Policy:
    if len(boxes) == 0:
        raise InputError("need at least one box")
    lo = np.mean([b.lo for b in boxes], axis=0)
    hi = np.mean([b.hi for b in boxes], axis=0)
    return Policy(sign_rule(lo, hi), provenance)


def pessimistic_average_value(z, boxes: Sequence[BoxBounds]) -> float:
    lo = np.mean([b.lo for b in boxes], axis=0)
    hi = np.mean([b.hi for b in boxes], axis=0)
    return separable_min(np.asarray(z, dtype=float), lo, hi)


# Array-level algorithms used by the hot loops. Each reduces ``(k, d)``
# arrays of MLEs and box half-widths to an aggregate box ``(lo, hi)``; the
# policy then maximizes ``min_{theta in [lo, hi]} <theta, z>``.

def _naive_mle(thetas, half):
    avg = thetas.mean(axis=0)
    return avg, avg


def _pessimistic_sw(thetas, half):
    return (thetas - half).mean(axis=0), (thetas + half).mean(axis=0)


def _median_mle(thetas, half):
    med = coordinate_median(thetas)
    return med, med


def _pessimistic_momle(thetas, half):
    return coordinate_median(thetas - half), coordinate_median(thetas + half)


ALGORITHM_FUNCS: dict[str, Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]] = {
    "naive_mle": _naive_mle,
    "pessimistic_sw": _pessimistic_sw,
    "median_mle": _median_mle,
    "pessimistic_momle": _pessimistic_momle,
}


def aggregate_bounds(name: str, thetas, half_widths) -> tuple[np.ndarray, np.ndarray]:
    try:
        func = ALGORITHM_FUNCS[name]
    except KeyError:
        raise InputError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}") from None
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    half = np.broadcast_to(np.asarray(half_widths, dtype=float), thetas.shape)
    return func(thetas, half)


def choose_occupancy(lo, hi, actions=None) -> np.ndarray:
    """Maximizer of the pessimistic value over the hyperrectangle, or over finite action features."""
    if actions is None:
        return sign_rule(lo, hi)
    feats = np.atleast_2d(np.asarray(actions, dtype=float))
    values = np.where(feats >= 0, feats * lo, feats * hi).sum(axis=1)
    return feats[int(np.argmax(values))]


def run_algorithm(name: str, thetas, half_widths, actions=None) -> Policy:
    """One of the four aggregation algorithms on fitted MLEs and box half-widths."""
    lo, hi = aggregate_bounds(name, thetas, half_widths)
    return Policy(choose_occupancy(lo, hi, actions), name)


@dataclass(frozen=True)
class WelfareReport:
    utilities: np.ndarray
    welfare: float
    optimal_welfare: float
    subopt: float
    approx_ratio: float | None

    def row(self) -> dict:
        out = {"W": self.welfare, "W_star": self.optimal_welfare, "subopt": self.subopt,
               "alpha": self.approx_ratio}
        out.update({f"J_{i + 1}": float(u) for i, u in enumerate(self.utilities)})
        return out


def welfare_report(z, true_params) -> WelfareReport:
    params = np.atleast_2d(np.asarray(true_params, dtype=float))
    z = np.asarray(z, dtype=float)
    if z.shape != (params.shape[1],):
        raise InputError(f"occupancy has dimension {z.shape}, instance has d={params.shape[1]}")
    utilities = params @ z
    welfare = float(utilities.mean())
    w_star = float(np.abs(params.mean(axis=0)).sum())
    alpha = welfare / w_star if w_star > 0 else None
    return WelfareReport(utilities, welfare, w_star, w_star - welfare, alpha)


def evaluate(policy: Policy, instance: ProblemInstance) -> WelfareReport:
    return welfare_report(policy.z, instance.true_params)


# Finite-action baselines used by the counterexample verifier.

def action_values(params, action_feats) -> np.ndarray:
    """``(k, m)`` matrix of utilities ``<theta_i, phi_a>``."""
    params = np.atleast_2d(np.asarray(params, dtype=float))
    feats = np.atleast_2d(np.asarray(action_feats, dtype=float))
    return params @ feats.T


def best_action(theta, action_feats) -> int:
    """Index of the highest-reward action; ties go to the lowest index."""
    return int(np.argmax(action_values(theta, action_feats)[0]))


@dataclass(frozen=True)
class MaxMinResult:
    probs: np.ndarray
    value: float

    @property
    def action(self) -> int:
        """Most probable action."""
        return int(np.argmax(self.probs))


def maxmin_policy(reported, action_feats, pure: bool = False) -> MaxMinResult:
    """Distribution over actions maximizing the minimum reported utility.

    Mixed policies solve ``max t`` subject to ``U p >= t`` over the simplex
    as a linear program; ``pure=True`` restricts to deterministic actions.
    """
    from scipy.optimize import linprog

    u = action_values(reported, action_feats)
    k, m = u.shape
    if m == 0:
        raise InputError("maxmin_policy needs at least one action")
    if pure or m == 1:
        mins = u.min(axis=0)
        a = int(np.argmax(mins))
        probs = np.zeros(m)
        probs[a] = 1.0
        return MaxMinResult(probs, float(mins[a]))
    cost = np.zeros(m + 1)
    cost[-1] = -1.0
    res = linprog(cost, A_ub=np.hstack([-u, np.ones((k, 1))]), b_ub=np.zeros(k),
                  A_eq=np.append(np.ones(m), 0.0)[None], b_eq=[1.0],
                  bounds=[(0, None)] * m + [(None, None)], method="highs")
    if res.status != 0:
        raise NumericError(f"maxmin linear program failed: {res.message}")
    probs = np.clip(res.x[:m], 0.0, None)
    probs /= probs.sum()
    return MaxMinResult(probs, float((u @ probs).min()))


