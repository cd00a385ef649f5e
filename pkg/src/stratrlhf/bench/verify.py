"""Exact checks of the two-action manipulation counterexamples.

All checks run with radius-0 confidence sets and the oracle estimator
(estimates equal reports), so every number is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..env import ProblemInstance, QuerySet
from ..policy import best_action, maxmin_policy
from ..strategic import Arena, AttackConfig, spsa_attack

TOL = 1e-9
ACTION_A = np.array([0.5, 0.5])
ACTION_B = np.array([0.75, 0.0])


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    expected: dict
    actual: dict
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: expected {self.expected} actual {self.actual}"


@dataclass
class VerifyReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "checks": [{"name": c.name, "passed": c.passed, "expected": c.expected,
                            "actual": c.actual, "detail": c.detail} for c in self.checks]}


def oracle_arena(true_params, actions, algorithm: str = "pessimistic_sw", B: float = 2.0,
                 L: float = 1.0) -> Arena:
    """Arena whose estimates equal the reports and whose confidence sets are points."""
    params = np.atleast_2d(np.asarray(true_params, dtype=float))
    k, d = params.shape
    instance = ProblemInstance(d=d, k=k, n=1, B=B, L=L, true_params=params, seed=0)
    queries = [QuerySet.from_diffs(i, np.eye(d)) for i in range(k)]
    return Arena(instance, queries, algorithm, c_f=0.0, estimator="oracle", actions=actions)


def _close(a, b, tol=TOL) -> bool:
    return abs(float(a) - float(b)) <= tol


def check_social_welfare_flip() -> CheckResult:
    """Two labelers, pessimistic social welfare: misreport ``(1, -1)`` moves the choice from a to b."""
    arena = oracle_arena([[1.0, 0.0], [0.0, 1.0]], np.stack([ACTION_A, ACTION_B]))
    truthful = arena.exact_utility(0, [1.0, 0.0])
    misreport = arena.exact_utility(0, [1.0, -1.0])
    z_truth = arena.outcome(0, np.array([1.0, 0.0]))
    z_lie = arena.outcome(0, np.array([1.0, -1.0]))
    actual = {"truthful_utility": truthful, "manipulated_utility": misreport,
              "truthful_action": "a" if np.allclose(z_truth, ACTION_A) else "b",
              "manipulated_action": "a" if np.allclose(z_lie, ACTION_A) else "b"}
    expected = {"truthful_utility": 0.5, "manipulated_utility": 0.75,
                "truthful_action": "a", "manipulated_action": "b"}
    passed = (_close(truthful, 0.5) and _close(misreport, 0.75)
              and actual["truthful_action"] == "a" and actual["manipulated_action"] == "b")
    return CheckResult("social_welfare_flip", passed, expected, actual)


def check_maxmin_flip() -> CheckResult:
    """MaxMin over the two actions: the same misreport flips a to b and lifts labeler 1 to 3/4."""
    feats = np.stack([ACTION_A, ACTION_B])
    truth = np.array([[1.0, 0.0], [0.5, 0.5]])
    lie = np.array([[1.0, -1.0], [0.5, 0.5]])
    pure_truth = maxmin_policy(truth, feats, pure=True)
    pure_lie = maxmin_policy(lie, feats, pure=True)
    mixed_lie = maxmin_policy(lie, feats)
    u_truth = float(truth[0] @ (pure_truth.probs @ feats))
    u_lie = float(truth[0] @ (pure_lie.probs @ feats))
    u_mixed = float(truth[0] @ (mixed_lie.probs @ feats))
    actual = {"truthful_action": "ab"[pure_truth.action], "manipulated_action": "ab"[pure_lie.action],
              "truthful_utility": u_truth, "manipulated_utility": u_lie,
              "mixed_prob_b": float(mixed_lie.probs[1]), "mixed_utility": u_mixed}
    expected = {"truthful_action": "a", "manipulated_action": "b", "truthful_utility": 0.5,
                "manipulated_utility": 0.75, "mixed_prob_b": 4.0 / 7.0}
    passed = (actual["truthful_action"] == "a" and actual["manipulated_action"] == "b"
              and _close(u_truth, 0.5) and _close(u_lie, 0.75)
              and _close(actual["mixed_prob_b"], 4.0 / 7.0) and u_mixed > u_truth)
    return CheckResult("maxmin_flip", passed, expected, actual,
                       "mixed maxmin puts most mass on b and also raises labeler 1's utility")


def unbounded_instance(eps: float, k: int = 5, B: float = 1.0, L: float = 1.0):
    """Parameters and action features of the arbitrarily-bad-welfare construction."""
    params = np.zeros((k, 3))
    params[0] = [0.0, 1.0, 0.0]
    params[1:] = [B / (k - 1), 0.0, 0.0]
    phi_a = np.array([math.sqrt(L * L - 2 * eps * eps), 0.0, 0.0])
    phi_b = np.array([0.0, eps, math.sqrt(L * L - eps * eps)])
    return params, np.stack([phi_a, phi_b])


def check_unbounded_welfare(eps: float = 0.01, k: int = 5, B: float = 1.0, L: float = 1.0) -> CheckResult:
    """Misreport ``(0, 0, B)`` flips the chosen action to b; welfare ratio is ``sqrt(1 - 2 eps^2) / eps``."""
    params, feats = unbounded_instance(eps, k, B, L)
    arena = oracle_arena(params, feats, B=B, L=L)
    z_truth = arena.outcome(0, params[0])
    z_lie = arena.outcome(0, np.array([0.0, 0.0, B]))
    avg = params.mean(axis=0)
    w_truth, w_lie = float(avg @ z_truth), float(avg @ z_lie)
    ratio = w_truth / w_lie if w_lie > 0 else math.inf
    # the 1/k welfare normalization cancels in the ratio
    target = B * math.sqrt(L * L - 2 * eps * eps) / eps
    optimal = best_action(avg, feats)
    actual = {"welfare_optimal": "ab"[optimal], "chosen_truthful": "a" if np.allclose(z_truth, feats[0]) else "b",
              "chosen_manipulated": "a" if np.allclose(z_lie, feats[0]) else "b",
              "labeler_1_utility": float(params[0] @ z_lie), "welfare_ratio": ratio}
    expected = {"welfare_optimal": "a", "chosen_truthful": "a", "chosen_manipulated": "b", "labeler_1_utility": eps,
                "welfare_ratio": target}
    passed = (actual["welfare_optimal"] == "a" and actual["chosen_truthful"] == "a" and actual["chosen_manipulated"] == "b"
              and _close(actual["labeler_1_utility"], eps)
              and abs(ratio - target) <= 0.01 * target)
    return CheckResult(f"unbounded_welfare(eps={eps})", passed, expected, actual)


def check_attack_soundness() -> list[CheckResult]:
    """SPSA in exact mode recovers the 1/4 gain against social welfare and none against MoMLEs."""
    cfg = AttackConfig(steps=60, c0=1.0, a0=1.0, exact=True, seed=0)
    out = []
    sw = oracle_arena([[1.0, 0.0], [0.0, 1.0]], np.stack([ACTION_A, ACTION_B]))
    res = spsa_attack(sw, 0, cfg)
    out.append(CheckResult("attack_gain_social_welfare", _close(res.gain, 0.25),
                           {"gain": 0.25}, {"gain": res.gain, "best_report": res.best_report.tolist()}))
    med = oracle_arena([[1.0, 0.0], [0.0, 1.0]], None, algorithm="pessimistic_momle")
    res = spsa_attack(med, 0, cfg)
    out.append(CheckResult("attack_gain_momle", _close(res.gain, 0.0),
                           {"gain": 0.0}, {"gain": res.gain}))
    return out


def verify_counterexamples(eps: float = 0.01) -> VerifyReport:
    report = VerifyReport()
    report.checks.append(check_social_welfare_flip())
    report.checks.append(check_maxmin_flip())
    report.checks.append(check_unbounded_welfare(eps))
    report.checks.extend(check_attack_soundness())
    return report
