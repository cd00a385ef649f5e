"""Strategic labelers: utility of a reported parameter and SPSA attacks on it.

A labeler's strategy is the BT parameter its labels are drawn from. The
other labelers' data are held fixed, so an expected utility is an average
over the deviating labeler's own label draws. Everything that depends only
on the fixed queries (covariances, box half-widths) is computed once per
:class:`Arena`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env import ProblemInstance, QuerySet, derive_rng, project_ball
from .errors import ConfigError, InputError
from .estimation import (DEFAULT_CF, DEFAULT_DELTA, confidence_radius, default_ridge, fit_theta)
from .policy import aggregate_bounds, choose_occupancy
from .preference import enumerate_labelings, labels_from_uniforms, preference_probs

ESTIMATORS = ("mle", "oracle")


class Arena:
    """Fixed queries and other labelers' data against which one labeler deviates.

    ``estimator="oracle"`` replaces every fit by the reported parameter
    itself (the infinite-data limit); combine it with ``c_f=0`` for the
    radius-0 regime of the counterexamples. ``actions`` restricts the policy
    space to finitely many feature vectors instead of ``[-1, 1]^d``.
    """

    def __init__(self, instance: ProblemInstance, queries: Sequence[QuerySet], algorithm: str,
                 base_uniforms=None, delta: float = DEFAULT_DELTA, c_f: float = DEFAULT_CF,
                 H: int = 1, estimator: str = "mle", actions=None, reports=None):
        if estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}")
        if len(queries) != instance.k:
            raise InputError(f"need {instance.k} query sets, got {len(queries)}")
        self.instance = instance
        self.queries = list(queries)
        self.algorithm = algorithm
        self.estimator = estimator
        self.actions = None if actions is None else np.atleast_2d(np.asarray(actions, dtype=float))
        self.delta = delta
        self.c_f = c_f
        self.H = H
        k, d = instance.k, instance.d
        self.regs = np.array([default_ridge(d, q.n, delta) for q in self.queries])
        self.half = np.zeros((k, d))
        for i, q in enumerate(self.queries):
            radius = confidence_radius(d, q.n, k, delta, instance.B, instance.L, H, c_f)
            if radius > 0:
                inv = np.linalg.inv(q.covariance + self.regs[i] * np.eye(d))
                self.half[i] = radius * np.sqrt(np.diag(inv))
        # Reports the other labelers' fixed data were drawn from (truthful by default).
        self.reports = np.array(instance.true_params if reports is None else reports, dtype=float)
        if base_uniforms is None:
            base_uniforms = [derive_rng(instance.seed, 7, i).random(q.n) for i, q in enumerate(self.queries)]
        self.base_uniforms = [np.asarray(u, dtype=float) for u in base_uniforms]
        self.base_thetas = np.array([self.fit(i, self.base_labels(i)) for i in range(k)])

    @property
    def k(self) -> int:
        return self.instance.k

    def base_labels(self, i: int) -> np.ndarray:
        return labels_from_uniforms(self.reports[i], self.queries[i], self.base_uniforms[i])

    def fit(self, i: int, labels, report=None, theta0=None) -> np.ndarray:
        if self.estimator == "oracle":
            return np.array(self.reports[i] if report is None else report, dtype=float)
        signs = 1.0 - 2.0 * np.asarray(labels, dtype=float)
        y = self.queries[i].diffs * signs[:, None]
        theta, *_ = fit_theta(y, self.instance.B, self.regs[i], theta0)
        return theta

    def occupancy(self, thetas: np.ndarray) -> np.ndarray:
        lo, hi = aggregate_bounds(self.algorithm, thetas, self.half)
        return choose_occupancy(lo, hi, self.actions)

    def outcome(self, i: int, theta_i: np.ndarray) -> np.ndarray:
        """Occupancy produced when labeler ``i``'s fit is ``theta_i`` and the rest stay at base."""
        thetas = self.base_thetas.copy()
        thetas[i] = theta_i
        return self.occupancy(thetas)

    def utility(self, i: int, z: np.ndarray) -> float:
        return float(self.instance.true_params[i] @ z)

    def mc_outcomes(self, i: int, report, uniforms) -> np.ndarray:
        """Occupancies for each row of ``uniforms`` (one replication of labeler ``i``'s labels per row)."""
        report = np.asarray(report, dtype=float)
        uniforms = np.atleast_2d(uniforms)
        if self.estimator == "oracle":
            return np.repeat(self.outcome(i, report)[None], uniforms.shape[0], axis=0)
        q = self.queries[i]
        p0 = preference_probs(report, q.diffs)
        zs = []
        for u in uniforms:
            labels = (u >= p0).astype(np.int8)
            zs.append(self.outcome(i, self.fit(i, labels, theta0=self.base_thetas[i])))
        return np.array(zs)

    def expected_utility(self, i: int, report, uniforms) -> float:
        zs = self.mc_outcomes(i, report, uniforms)
        return float((zs @ self.instance.true_params[i]).mean())

    def exact_table(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """All label vectors of labeler ``i`` and the occupancy each one produces."""
        cache = getattr(self, "_exact", {})
        if i not in cache:
            labels, _ = enumerate_labelings(self.reports[i], self.queries[i])
            zs = np.array([self.outcome(i, self.fit(i, lab)) for lab in labels])
            cache[i] = (labels, zs)
            self._exact = cache
        return cache[i]

    def exact_utility(self, i: int, report) -> float:
        """Expected utility by enumerating all ``2^n`` label vectors (``n <= 12``)."""
        report = np.asarray(report, dtype=float)
        if self.estimator == "oracle":
            return self.utility(i, self.outcome(i, report))
        labels, zs = self.exact_table(i)
        p0 = preference_probs(report, self.queries[i].diffs)
        probs = np.where(labels == 0, p0, 1.0 - p0).prod(axis=1)
        return float(probs @ (zs @ self.instance.true_params[i]))

    def expected_subopt(self, i: int, report, uniforms) -> float:
        zs = self.mc_outcomes(i, report, uniforms)
        params = self.instance.true_params
        w_star = float(np.abs(params.mean(axis=0)).sum())
        return float(w_star - (zs @ params.mean(axis=0)).mean())


def evaluate_report(arena: Arena, labeler: int, report, rng: np.random.Generator | None = None,
                    reps: int = 8, exact: bool = False) -> float:
    """Expected utility of ``labeler`` when its labels are drawn from ``report``."""
    report = np.asarray(report, dtype=float)
    if not np.all(np.isfinite(report)):
        raise InputError("report must be finite")
    if exact:
        return arena.exact_utility(labeler, report)
    if reps < 1:
        raise ConfigError("reps must be at least 1")
    if rng is None:
        rng = derive_rng(arena.instance.seed, 11, labeler)
    uniforms = rng.random((reps, arena.queries[labeler].n))
    return arena.expected_utility(labeler, report, uniforms)


@dataclass(frozen=True)
class AttackConfig:
    steps: int = 200
    c0: float | None = None  # None means 0.1 * B
    a0: float | None = None  # None means 0.05 * B
    c_decay: float = 0.101
    a_decay: float = 0.602
    reps: int = 8
    eval_reps: int = 32
    seed: int = 0
    exact: bool = False

    def __post_init__(self):
        if self.steps < 1 or self.reps < 1 or self.eval_reps < 1:
            raise ConfigError("steps, reps and eval_reps must be positive")
        for name in ("c0", "a0"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive")

    def schedules(self, B: float) -> tuple[float, float]:
        return (0.1 * B if self.c0 is None else self.c0, 0.05 * B if self.a0 is None else self.a0)


@dataclass(frozen=True)
class AttackResult:
    truthful_utility: float
    best_utility: float
    gain: float
    trajectory: np.ndarray
    best_report: np.ndarray
    report_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    truthful_subopt: float = math.nan
    attacked_subopt: float = math.nan

    def trajectory_rows(self):
        for t, (u, nrm) in enumerate(zip(self.trajectory, self.report_norms)):
            yield {"step": t, "utility": float(u), "report_norm": float(nrm)}


def spsa_attack(arena: Arena, labeler: int, cfg: AttackConfig | None = None) -> AttackResult:
    """Climb ``labeler``'s expected utility over its report with SPSA.

    Starts from the true parameter. Each step draws a Rademacher direction
    and evaluates both perturbed reports on the same label uniforms. The
    best iterate by trajectory estimate is re-scored against the truthful
    report on held-out uniforms, which is where ``gain`` comes from.
    """
    cfg = cfg or AttackConfig()
    inst = arena.instance
    B, d, n = inst.B, inst.d, arena.queries[labeler].n
    c0, a0 = cfg.schedules(B)
    rng = derive_rng(cfg.seed, 13, labeler)
    truth = np.array(inst.true_params[labeler], dtype=float)

    def estimate(report, uniforms):
        if cfg.exact:
            return arena.exact_utility(labeler, report)
        return arena.expected_utility(labeler, report, uniforms)

    x = truth.copy()
    best_x = x.copy()
    best_u = -math.inf
    trajectory = np.empty(cfg.steps + 1)
    norms = np.empty(cfg.steps + 1)
    for t in range(1, cfg.steps + 1):
        c_t = c0 / t ** cfg.c_decay
        a_t = a0 / t ** cfg.a_decay
        delta = rng.choice(np.array([-1.0, 1.0]), size=d)
        uniforms = None if cfg.exact else rng.random((cfg.reps, n))
        u_plus = estimate(project_ball(x + c_t * delta, B), uniforms)
        u_minus = estimate(project_ball(x - c_t * delta, B), uniforms)
        u_here = 0.5 * (u_plus + u_minus)
        trajectory[t - 1], norms[t - 1] = u_here, np.linalg.norm(x)
        if u_here > best_u:
            best_u, best_x = u_here, x.copy()
        x = project_ball(x + a_t * (u_plus - u_minus) / (2.0 * c_t) * delta, B)
    final_uniforms = None if cfg.exact else rng.random((cfg.reps, n))
    u_final = estimate(x, final_uniforms)
    trajectory[-1], norms[-1] = u_final, np.linalg.norm(x)
    if u_final > best_u:
        best_u, best_x = u_final, x.copy()

    held_out = None if cfg.exact else rng.random((cfg.eval_reps, n))
    truthful_u = estimate(truth, held_out)
    attacked_u = estimate(best_x, held_out)
    if attacked_u < truthful_u:
        # truthful reporting is in the search space
        best_x, attacked_u = truth.copy(), truthful_u
    result = dict(truthful_utility=truthful_u, best_utility=attacked_u, gain=attacked_u - truthful_u,
                  trajectory=trajectory, best_report=best_x, report_norms=norms)
    if not cfg.exact:
        result["truthful_subopt"] = arena.expected_subopt(labeler, truth, held_out)
        result["attacked_subopt"] = arena.expected_subopt(labeler, best_x, held_out)
    return AttackResult(**result)
