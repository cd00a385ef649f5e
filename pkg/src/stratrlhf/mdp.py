"""Tabular episodic MDPs: occupancy measures, trajectory features and
pessimistic-median policy optimization over the occupancy polytope.

Conventions at the API boundary:

* ``OccupancyMeasure.q`` holds per-step state-action probabilities, so each
  ``q[h]`` sums to one and ``q.sum() == H``. The feature occupancy
  ``feat`` carries the ``1/H`` normalization.
* :func:`trajectory_features` returns the *unnormalized* sum of per-step
  feature differences; it is the diff the BT model is fitted on.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aggregation import MedianBox, separable_min
from .errors import CapacityError, ConfigError, InputError, NumericError

MAX_ENUMERATION = 10 ** 6
MAX_GRADIENT_VARS = 20_000
ROW_TOL = 1e-12
FLOW_TOL = 1e-9
METHODS = ("auto", "enumerate", "gradient", "lp")
ARMIJO_C = 1e-4


@dataclass(frozen=True)
class TabularMdp:
    """Finite-horizon MDP with known dynamics.

    ``P`` has shape ``(H, S, A, S)`` with ``P[h, s, a, s']``; a stationary
    ``(S, A, S)`` array is broadcast over steps. ``phi`` has shape ``(S, A, d)``.
    """

    P: np.ndarray
    rho: np.ndarray
    phi: np.ndarray
    H: int
    L: float | None = None

    def __post_init__(self):
        if int(self.H) < 1:
            raise ConfigError("horizon H must be at least 1")
        P = np.array(self.P, dtype=float)
        if P.ndim == 3:
            P = np.broadcast_to(P, (int(self.H),) + P.shape).copy()
        rho = np.array(self.rho, dtype=float)
        phi = np.array(self.phi, dtype=float)
        if P.ndim != 4 or P.shape[0] != self.H or P.shape[1] != P.shape[3]:
            raise InputError(f"transitions must have shape (H, S, A, S), got {P.shape}")
        S, A = P.shape[1], P.shape[2]
        if rho.shape != (S,) or phi.ndim != 3 or phi.shape[:2] != (S, A):
            raise InputError("rho must have shape (S,) and phi shape (S, A, d)")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=3) - 1.0) > ROW_TOL):
            raise InputError("every transition row must be a probability vector")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > ROW_TOL:
            raise InputError("initial distribution must be a probability vector")
        norms = np.linalg.norm(phi, axis=2)
        L = float(norms.max()) if self.L is None else float(self.L)
        if norms.max() > L * (1 + 1e-12):
            raise InputError(f"feature norms exceed L={L}")
        for arr in (P, rho, phi):
            arr.flags.writeable = False
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "H", int(self.H))
        object.__setattr__(self, "L", L)

    @property
    def S(self) -> int:
        return self.P.shape[1]

    @property
    def A(self) -> int:
        return self.P.shape[2]

    @property
    def d(self) -> int:
        return self.phi.shape[2]

    @property
    def n_policies(self) -> int:
        return self.A ** (self.S * self.H)

    def to_json(self) -> str:
        return json.dumps({"H": self.H, "L": self.L, "P": self.P.tolist(),
                           "rho": self.rho.tolist(), "phi": self.phi.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "TabularMdp":
        data = json.loads(text)
        return cls(P=data["P"], rho=data["rho"], phi=data["phi"], H=data["H"], L=data.get("L"))


@dataclass(frozen=True)
class OccupancyMeasure:
    q: np.ndarray
    feat: np.ndarray

    def state_occupancy(self) -> np.ndarray:
        """Step-averaged state visitation ``(1/H) sum_h P(s_h = s)``."""
        return self.q.sum(axis=(0, 2)) / self.q.shape[0]


def random_mdp(S: int, A: int, H: int, d: int, rng: np.random.Generator, L: float = 1.0,
               stationary: bool = False) -> TabularMdp:
    """Dirichlet transitions and features drawn uniformly in the ``L``-ball."""
    shape = (S, A) if stationary else (H, S, A)
    P = rng.dirichlet(np.ones(S), size=shape)
    rho = rng.dirichlet(np.ones(S))
    phi = rng.standard_normal((S, A, d))
    radii = L * rng.random((S, A, 1)) ** (1.0 / d)
    phi = phi / np.linalg.norm(phi, axis=2, keepdims=True) * radii
    return TabularMdp(P=P, rho=rho, phi=phi, H=H, L=L)


def _check_policy(mdp: TabularMdp, policy) -> np.ndarray:
    pi = np.array(policy, dtype=float)
    if pi.ndim == 2:
        # deterministic policy given as action indices (H, S)
        if pi.shape != (mdp.H, mdp.S) or np.any(pi != np.round(pi)) or pi.min() < 0 or pi.max() >= mdp.A:
            raise InputError("deterministic policy must be an (H, S) array of action indices")
        return np.eye(mdp.A)[pi.astype(int)]
    if pi.shape != (mdp.H, mdp.S, mdp.A):
        raise InputError(f"policy must have shape (H, S, A) = {(mdp.H, mdp.S, mdp.A)}, got {pi.shape}")
    if np.any(pi < -ROW_TOL) or np.any(np.abs(pi.sum(axis=2) - 1.0) > 1e-9):
        raise InputError("policy rows must be probability vectors")
    return np.clip(pi, 0.0, None)


def occupancy(mdp: TabularMdp, policy) -> OccupancyMeasure:
    """Exact forward rollout of state-action occupancies for a Markov policy.

    ``policy`` is either an ``(H, S, A)`` table of action distributions or an
    ``(H, S)`` array of deterministic action indices.
    """
    pi = _check_policy(mdp, policy)
    q = np.empty((mdp.H, mdp.S, mdp.A))
    mu = mdp.rho.copy()
    for h in range(mdp.H):
        q[h] = mu[:, None] * pi[h]
        mu = np.einsum("sa,sat->t", q[h], mdp.P[h])
    return OccupancyMeasure(q, feature_occupancy(mdp, q))


def feature_occupancy(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    return np.einsum("hsa,sad->d", q, mdp.phi) / mdp.H


def flow_violation(mdp: TabularMdp, q: np.ndarray) -> float:
    """Largest absolute violation of the Bellman-flow equalities (and of ``q >= 0``)."""
    q = np.asarray(q, dtype=float)
    worst = max(0.0, float(-q.min()))
    worst = max(worst, float(np.abs(q[0].sum(axis=1) - mdp.rho).max()))
    for h in range(mdp.H - 1):
        inflow = np.einsum("sa,sat->t", q[h], mdp.P[h])
        worst = max(worst, float(np.abs(q[h + 1].sum(axis=1) - inflow).max()))
    return worst


def policy_from_occupancy(q: np.ndarray) -> np.ndarray:
    """Conditional action distributions; states with no mass get the uniform action."""
    q = np.clip(np.asarray(q, dtype=float), 0.0, None)
    mass = q.sum(axis=2, keepdims=True)
    A = q.shape[2]
    return np.where(mass > 0, q / np.where(mass > 0, mass, 1.0), 1.0 / A)


def repair_flow(mdp: TabularMdp, q: np.ndarray) -> OccupancyMeasure:
    """Map an approximately feasible ``q`` to the exact occupancy of its induced policy."""
    return occupancy(mdp, policy_from_occupancy(q))


def trajectory_features(phi: np.ndarray, traj_0: Sequence[tuple[int, int]],
                        traj_1: Sequence[tuple[int, int]]) -> np.ndarray:
    """Summed per-step feature difference ``sum_h phi(s_h, a_h) - phi(s'_h, a'_h)``."""
    phi = np.asarray(phi, dtype=float)
    t0 = np.asarray(traj_0, dtype=int).reshape(-1, 2)
    t1 = np.asarray(traj_1, dtype=int).reshape(-1, 2)
    if t0.shape != t1.shape:
        raise InputError(f"trajectories differ in length: {len(t0)} vs {len(t1)}")
    if len(t0) == 0:
        raise InputError("trajectories must be non-empty")
    if t0[0, 0] != t1[0, 0]:
        raise InputError("trajectories must share their initial state")
    return phi[t0[:, 0], t0[:, 1]].sum(axis=0) - phi[t1[:, 0], t1[:, 1]].sum(axis=0)


def sample_trajectories(mdp: TabularMdp, policy, m: int, rng: np.random.Generator,
                        start=None) -> np.ndarray:
    """``m`` rollouts as an ``(m, H, 2)`` array of ``(state, action)`` pairs."""
    pi = _check_policy(mdp, policy)
    out = np.empty((m, mdp.H, 2), dtype=np.int64)
    s = rng.choice(mdp.S, size=m, p=mdp.rho) if start is None else np.asarray(start, dtype=np.int64)
    for h in range(mdp.H):
        a = _sample_rows(pi[h][s], rng)
        out[:, h, 0], out[:, h, 1] = s, a
        s = _sample_rows(mdp.P[h][s, a], rng)
    return out


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((probs.shape[0], 1)) * cdf[:, -1:]
    return np.minimum((u > cdf).sum(axis=1), probs.shape[1] - 1)


def trajectory_pair_diffs(mdp: TabularMdp, m: int, rng: np.random.Generator, policy=None) -> np.ndarray:
    """Diffs of ``m`` trajectory pairs sharing an initial state (uniform behavior policy by default)."""
    if policy is None:
        policy = np.full((mdp.H, mdp.S, mdp.A), 1.0 / mdp.A)
    first = sample_trajectories(mdp, policy, m, rng)
    second = sample_trajectories(mdp, policy, m, rng, start=first[:, 0, 0])
    f0 = mdp.phi[first[..., 0], first[..., 1]].sum(axis=1)
    f1 = mdp.phi[second[..., 0], second[..., 1]].sum(axis=1)
    return f0 - f1


# Pessimistic-median policy optimization.

@dataclass(frozen=True)
class MdpSolution:
    policy: np.ndarray
    occupancy: OccupancyMeasure
    value: float
    method: str
    trace: tuple = field(default=(), repr=False)


def pessimistic_feat_value(feat: np.ndarray, mbox: MedianBox) -> float:
    return separable_min(np.asarray(feat, dtype=float), mbox.m_lo, mbox.m_hi)


def _thread_count() -> int:
    raw = os.environ.get("STRATRLHF_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise ConfigError(f"STRATRLHF_THREADS must be an integer, got {raw!r}") from None


def deterministic_policy_features(mdp: TabularMdp, indices: np.ndarray) -> np.ndarray:
    """Feature occupancies of deterministic policies given by flat indices in ``[0, A^(S H))``."""
    digits = (indices[:, None] // (mdp.A ** np.arange(mdp.S * mdp.H))[None, :]) % mdp.A
    acts = digits.reshape(-1, mdp.H, mdp.S)
    m = len(indices)
    mu = np.broadcast_to(mdp.rho, (m, mdp.S)).copy()
    feat = np.zeros((m, mdp.d))
    states = np.arange(mdp.S)
    for h in range(mdp.H):
        a = acts[:, h, :]
        feat += np.einsum("ms,msd->md", mu, mdp.phi[states[None, :], a])
        mu = np.einsum("ms,mst->mt", mu, mdp.P[h][states[None, :], a])
    return feat / mdp.H


def _index_to_policy(mdp: TabularMdp, index: int) -> np.ndarray:
    digits = (index // mdp.A ** np.arange(mdp.S * mdp.H)) % mdp.A
    return digits.reshape(mdp.H, mdp.S)


def _enumerate(mdp: TabularMdp, mbox: MedianBox, block: int = 1 << 14) -> MdpSolution:
    total = mdp.n_policies
    starts = range(0, total, block)

    def best_in(start):
        idx = np.arange(start, min(start + block, total), dtype=np.int64)
        feats = deterministic_policy_features(mdp, idx)
        vals = np.where(feats >= 0, feats * mbox.m_lo, feats * mbox.m_hi).sum(axis=1)
        j = int(np.argmax(vals))
        return float(vals[j]), int(idx[j])

    threads = _thread_count()
    if threads > 1 and total > block:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(best_in, starts))
    else:
        results = [best_in(s) for s in starts]
    # first maximizer wins ties so the result does not depend on threading
    value, index = max(results, key=lambda r: (r[0], -r[1]))
    acts = _index_to_policy(mdp, index)
    occ = occupancy(mdp, acts)
    return MdpSolution(np.eye(mdp.A)[acts], occ, pessimistic_feat_value(occ.feat, mbox), "enumerate")


class _FlowProjector:
    """Euclidean projection onto ``{q >= 0, C q = b}`` by Dykstra's alternating projections."""

    def __init__(self, mdp: TabularMdp):
        H, S, A = mdp.H, mdp.S, mdp.A
        n = H * S * A
        rows = []
        rhs = []
        for s in range(S):
            r = np.zeros((H, S, A))
            r[0, s, :] = 1.0
            rows.append(r.ravel())
            rhs.append(mdp.rho[s])
        for h in range(H - 1):
            for t in range(S):
                r = np.zeros((H, S, A))
                r[h + 1, t, :] = 1.0
                r[h] -= mdp.P[h][:, :, t]
                rows.append(r.ravel())
                rhs.append(0.0)
        C = np.array(rows)
        self.C_pinv = np.linalg.pinv(C)
        self.C = C
        self.b = np.array(rhs)
        self.shape = (H, S, A)
        self.n = n

    def affine(self, x: np.ndarray) -> np.ndarray:
        return x - self.C_pinv @ (self.C @ x - self.b)

    def __call__(self, q: np.ndarray, iters: int = 200, tol: float = 1e-12) -> np.ndarray:
        x = q.ravel().copy()
        p = np.zeros_like(x)
        r = np.zeros_like(x)
        for _ in range(iters):
            y = self.affine(x + p)
            p = x + p - y
            x_new = np.maximum(y + r, 0.0)
            r = y + r - x_new
            if np.abs(x_new - x).max() <= tol:
                x = x_new
                break
            x = x_new
        return x.reshape(self.shape)


def smoothed_objective(mdp: TabularMdp, q: np.ndarray, mbox: MedianBox, mu: float) -> tuple[float, np.ndarray]:
    """Smooth surrogate of the pessimistic value and its gradient in ``q``.

    ``min(lo f, hi f) = c f - r |f|`` with ``c = (lo + hi)/2``, ``r = (hi - lo)/2``;
    ``|f|`` is replaced by ``sqrt(f^2 + mu^2) - mu``, which is exact as ``mu -> 0``.
    """
    c = 0.5 * (mbox.m_lo + mbox.m_hi)
    r = 0.5 * (mbox.m_hi - mbox.m_lo)
    f = feature_occupancy(mdp, q)
    root = np.sqrt(f * f + mu * mu)
    value = float(c @ f - r @ (root - mu))
    g_feat = c - r * f / root
    grad = np.einsum("sad,d->sa", mdp.phi, g_feat)[None] / mdp.H
    return value, np.broadcast_to(grad, q.shape).copy()


MU_STAGES = (1e-1, 1e-2, 1e-3, 1e-4, 1e-6, 1e-8, 1e-10)


def _gradient(mdp: TabularMdp, mbox: MedianBox, iters: int = 5000, start=None) -> MdpSolution:
    """Projected gradient ascent on the smoothed objective with a decreasing smoothing level.

    Each step is Armijo-accepted on the current smoothed objective, so that
    objective never decreases within a stage. The best iterate under the
    exact pessimistic value is returned.
    """
    if mdp.H * mdp.S * mdp.A > MAX_GRADIENT_VARS:
        raise CapacityError("MDP too large for the occupancy-space gradient path")
    project = _FlowProjector(mdp)
    pol = np.full((mdp.H, mdp.S, mdp.A), 1.0 / mdp.A) if start is None else start
    q = occupancy(mdp, pol).q
    best_q = q
    best_value = pessimistic_feat_value(feature_occupancy(mdp, q), mbox)
    trace = []
    budget = max(1, iters // len(MU_STAGES))
    used = 0
    for mu in MU_STAGES:
        step = 1.0
        value, grad = smoothed_objective(mdp, q, mbox, mu)
        for _ in range(budget):
            if used >= iters:
                break
            used += 1
            moved = False
            while step >= 1e-12:
                cand = repair_flow(mdp, project(q + step * grad)).q
                cand_value, cand_grad = smoothed_objective(mdp, cand, mbox, mu)
                gain = float(np.sum(grad * (cand - q)))
                if cand_value >= value + ARMIJO_C * gain and gain > 0:
                    q, value, grad, moved = cand, cand_value, cand_grad, True
                    break
                step *= 0.5
            trace.append(value)
            if not moved:
                break
            exact = pessimistic_feat_value(feature_occupancy(mdp, q), mbox)
            if exact > best_value:
                best_q, best_value = q, exact
            step = min(4.0 * step, 1e6)
    policy = policy_from_occupancy(best_q)
    occ = occupancy(mdp, policy)
    return MdpSolution(policy, occ, pessimistic_feat_value(occ.feat, mbox), "gradient", tuple(trace))


def _lp(mdp: TabularMdp, mbox: MedianBox) -> MdpSolution:
    """Exact maximum over the occupancy polytope as a linear program."""
    from scipy.optimize import linprog

    project = _FlowProjector(mdp)
    nq, d = project.n, mdp.d
    Phi = mdp.phi.reshape(-1, d)
    Phi = np.broadcast_to(Phi, (mdp.H,) + Phi.shape).reshape(nq, d) / mdp.H
    # variables: q (nq), t (d); maximize sum t
    cost = np.concatenate([np.zeros(nq), -np.ones(d)])
    A_ub = np.vstack([
        np.hstack([-Phi.T * mbox.m_lo[:, None], np.eye(d)]),
        np.hstack([-Phi.T * mbox.m_hi[:, None], np.eye(d)]),
    ])
    b_ub = np.zeros(2 * d)
    A_eq = np.hstack([project.C, np.zeros((project.C.shape[0], d))])
    bounds = [(0, None)] * nq + [(None, None)] * d
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=project.b, bounds=bounds, method="highs")
    if res.status != 0:
        raise NumericError(f"occupancy LP failed: {res.message}")
    q = res.x[:nq].reshape(mdp.H, mdp.S, mdp.A)
    occ = repair_flow(mdp, q)
    return MdpSolution(policy_from_occupancy(q), occ, pessimistic_feat_value(occ.feat, mbox), "lp")


def optimize_mdp_pessimistic_median(mdp: TabularMdp, mbox: MedianBox, method: str = "auto",
                                    iters: int = 5000) -> MdpSolution:
    """Maximize the pessimistic median value of a policy's feature occupancy.

    ``"enumerate"`` scans deterministic time-dependent Markov policies,
    ``"gradient"`` runs projected ascent in occupancy space, ``"lp"`` solves
    the exact linear program. ``"auto"`` runs every feasible path among the
    first two and returns the better.
    """
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    if mbox.d != mdp.d:
        raise InputError(f"median box has dimension {mbox.d}, features have {mdp.d}")
    can_enum = mdp.n_policies <= MAX_ENUMERATION
    can_grad = mdp.H * mdp.S * mdp.A <= MAX_GRADIENT_VARS
    if method == "enumerate":
        if not can_enum:
            raise CapacityError(f"{mdp.n_policies} deterministic policies exceed {MAX_ENUMERATION}")
        return _enumerate(mdp, mbox)
    if method == "gradient":
        return _gradient(mdp, mbox, iters)
    if method == "lp":
        return _lp(mdp, mbox)
    if not (can_enum or can_grad):
        raise CapacityError("MDP too large for both enumeration and gradient paths")
    results = []
    if can_enum:
        results.append(_enumerate(mdp, mbox))
    if can_grad:
        results.append(_gradient(mdp, mbox, iters))
    return max(results, key=lambda r: r.value)


def optimal_welfare(mdp: TabularMdp, theta) -> tuple[float, np.ndarray]:
    """Best true value ``<theta, feat>`` and a deterministic optimal policy, by backward induction."""
    theta = np.asarray(theta, dtype=float)
    reward = mdp.phi @ theta / mdp.H
    V = np.zeros(mdp.S)
    acts = np.empty((mdp.H, mdp.S), dtype=int)
    for h in reversed(range(mdp.H)):
        Q = reward + mdp.P[h] @ V
        acts[h] = np.argmax(Q, axis=1)
        V = Q.max(axis=1)
    return float(mdp.rho @ V), acts


def contrast_mdp(seed: int, S: int = 3, A: int = 2, H: int = 3, d: int = 2) -> TabularMdp:
    """Dirichlet dynamics with unit-norm features at uniformly random angles (``d = 2``)."""
    if d != 2:
        raise ConfigError("contrast_mdp builds planar features; d must be 2")
    rng = np.random.default_rng(seed)
    base = random_mdp(S, A, H, d, rng)
    angles = rng.uniform(0.0, 2.0 * np.pi, (S, A))
    phi = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    return TabularMdp(P=base.P, rho=base.rho, phi=phi, H=H, L=1.0)


def labeler_boxes(mdp: TabularMdp, thetas, n: int, rng: np.random.Generator, B: float = 1.0,
                  delta: float = 0.1, c_f: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-labeler MLE boxes from ``n`` trajectory-pair comparisons each.

    Labels follow the BT model on the unnormalized trajectory diff, so the
    curvature constant uses ``H * L * B``.
    """
    from .estimation import DEFAULT_CF, confidence_radius, default_ridge, fit_theta
    from .preference import preference_probs

    c_f = DEFAULT_CF if c_f is None else c_f
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    k, d = thetas.shape
    reg = default_ridge(d, n, delta)
    radius = confidence_radius(d, n, k, delta, B, mdp.L, mdp.H, c_f)
    lo, hi = np.empty((k, d)), np.empty((k, d))
    for i, theta in enumerate(thetas):
        x = trajectory_pair_diffs(mdp, n, rng)
        prefer_0 = rng.random(n) < preference_probs(theta, x)
        y = x * np.where(prefer_0, 1.0, -1.0)[:, None]
        theta_hat, *_ = fit_theta(y, B, reg)
        metric = x.T @ x / n + reg * np.eye(d)
        half = radius * np.sqrt(np.diag(np.linalg.inv(metric)))
        lo[i], hi[i] = theta_hat - half, theta_hat + half
    return lo, hi
