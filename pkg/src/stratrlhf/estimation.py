"""Per-labeler Bradley-Terry MLE, confidence ellipsoids and their boxes.

The fit maximizes the total log-likelihood minus ``reg/2 * |theta|^2`` over
the ball ``|theta| <= B``. The same ``reg`` is added to the per-sample
covariance to form the confidence metric ``M = cov + reg * I``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .env import QuerySet
from .errors import ConfigError, InputError, NumericError
from .preference import LabelerDataset

DEFAULT_CF = 0.5
DEFAULT_DELTA = 0.1
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 5000
MAX_VERTEX_DIM = 20


def default_ridge(d: int, n: int, delta: float = DEFAULT_DELTA) -> float:
    """Ridge weight ``(d + log(1/delta)) / n``."""
    return (d + math.log(1.0 / delta)) / n


def logistic_gamma(L: float, B: float, H: int = 1) -> float:
    """Curvature constant ``1 / (2 + exp(-HLB) + exp(HLB))`` of the BT likelihood."""
    a = H * L * B
    # e^-a / (1 + e^-a)^2, which stays finite for large or infinite a
    e = math.exp(-a)
    return e / (1.0 + e) ** 2


def confidence_radius(d: int, n: int, k: int, delta: float, B: float, L: float,
                      H: int = 1, c_f: float = DEFAULT_CF) -> float:
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if min(d, n, k) < 1 or B <= 0 or L <= 0 or H < 1:
        raise ConfigError("d, n, k, H must be positive integers and B, L positive")
    if c_f < 0:
        raise ConfigError(f"c_f must be non-negative, got {c_f}")
    if c_f == 0:
        return 0.0
    gamma = logistic_gamma(L, B, H)
    if gamma == 0:
        raise NumericError(f"curvature constant underflows at H*L*B = {H * L * B}")
    return c_f / gamma * math.sqrt((d + math.log(k / delta)) / n)


@dataclass(frozen=True)
class MleFit:
    theta_hat: np.ndarray
    cov: np.ndarray
    reg: float
    n: int
    converged: bool
    grad_norm: float
    n_iter: int = 0
    B: float = math.inf

    @property
    def d(self) -> int:
        return self.theta_hat.shape[0]

    @property
    def metric(self) -> np.ndarray:
        return self.cov + self.reg * np.eye(self.d)

    def inverse_metric(self) -> np.ndarray:
        m = self.metric
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise NumericError("covariance plus ridge is not positive definite; use reg > 0") from exc
        inv = np.linalg.inv(m)
        return 0.5 * (inv + inv.T)

    def to_dict(self) -> dict:
        return {"theta_hat": self.theta_hat.tolist(), "cov": self.cov.tolist(),
                "reg": self.reg, "n": self.n, "converged": self.converged,
                "grad_norm": self.grad_norm, "n_iter": self.n_iter, "B": self.B}


def fit_theta(signed_diffs: np.ndarray, B: float, reg: float, theta0=None,
              tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Kernel call shared by :func:`fit_mle` and the hot loops; returns the raw tuple."""
    y = np.ascontiguousarray(signed_diffs, dtype=np.float64)
    if theta0 is None:
        theta0 = np.zeros(y.shape[1])
    return kernels.fit_bt(y, np.asarray(theta0, dtype=np.float64), float(B), float(reg),
                          float(tol), int(max_iter))


def fit_mle(dataset: LabelerDataset, B: float, reg: float | None = None,
            tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
            delta: float = DEFAULT_DELTA, theta0=None) -> MleFit:
    """Ridge-regularized BT maximum likelihood over the B-ball.

    Non-convergence is reported through ``converged=False``; the best
    iterate is still returned.
    """
    if dataset.n == 0:
        raise InputError("cannot fit an empty dataset")
    queries = dataset.queries
    if reg is None:
        reg = default_ridge(queries.d, queries.n, delta)
    if reg < 0:
        raise ConfigError(f"reg must be non-negative, got {reg}")
    theta, n_iter, pg, _ = fit_theta(dataset.signed_diffs, B, reg, theta0, tol, max_iter)
    return MleFit(theta_hat=np.asarray(theta), cov=queries.covariance, reg=float(reg),
                  n=queries.n, converged=bool(pg <= tol), grad_norm=float(pg),
                  n_iter=int(n_iter), B=float(B))


@dataclass(frozen=True)
class BoxBounds:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InputError("box bounds must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise InputError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, theta) -> "BoxBounds":
        theta = np.asarray(theta, dtype=float)
        return cls(theta, theta.copy())

    @property
    def d(self) -> int:
        return self.lo.shape[0]


@dataclass(frozen=True)
class ConfidenceSet:
    fit: MleFit
    radius: float
    delta: float = DEFAULT_DELTA
    _inv_diag: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.radius >= 0:
            raise InputError(f"radius must be non-negative, got {self.radius}")

    @property
    def center(self) -> np.ndarray:
        return self.fit.theta_hat

    def distance(self, theta) -> float:
        """``|theta - theta_hat|_M``."""
        diff = np.asarray(theta, dtype=float) - self.fit.theta_hat
        return float(math.sqrt(max(diff @ self.fit.metric @ diff, 0.0)))

    def contains(self, theta) -> bool:
        return self.distance(theta) <= self.radius

    def half_widths(self) -> np.ndarray:
        inv_diag = self._inv_diag
        if inv_diag is None:
            inv_diag = np.diag(self.fit.inverse_metric())
        return self.radius * np.sqrt(inv_diag)


def confidence_set(fit: MleFit, k: int, delta: float = DEFAULT_DELTA, L: float = 1.0,
                   H: int = 1, c_f: float = DEFAULT_CF) -> ConfidenceSet:
    radius = confidence_radius(fit.d, fit.n, k, delta, fit.B, L, H, c_f)
    return ConfidenceSet(fit, radius, delta)


def ellipsoid_box(cset: ConfidenceSet) -> BoxBounds:
    """Tightest axis-aligned box containing the confidence ellipsoid."""
    half = cset.half_widths()
    return BoxBounds(cset.center - half, cset.center + half)


class Coverage(NamedTuple):
    kappa: float
    exact: bool


def coverage_coefficient(fit: MleFit, z=None, mode: str = "at") -> Coverage:
    """``|z|_{M^-1}`` at a given occupancy, or its maximum over ``[-1, 1]^d``.

    The maximum of the convex norm over the box sits at a vertex, so the
    uniform mode enumerates vertices for ``d <= 20`` and otherwise returns
    the bound ``sqrt(d / lambda_min(M))`` with ``exact=False``.
    """
    inv = fit.inverse_metric()
    d = fit.d
    if mode == "at":
        if z is None:
            raise InputError("mode 'at' needs an occupancy vector z")
        z = np.asarray(z, dtype=float)
        return Coverage(float(math.sqrt(max(z @ inv @ z, 0.0))), True)
    if mode != "uniform":
        raise InputError(f"unknown coverage mode {mode!r}")
    if d > MAX_VERTEX_DIM:
        lam_min = float(np.linalg.eigvalsh(fit.metric)[0])
        return Coverage(math.sqrt(d / lam_min), False)
    return Coverage(_max_vertex_norm(inv), True)


def _max_vertex_norm(inv: np.ndarray, chunk_bits: int = 14) -> float:
    d = inv.shape[0]
    if d == 1:
        return float(math.sqrt(inv[0, 0]))
    # z and -z give the same norm: fix the first sign
    rest = d - 1
    best = 0.0
    low_bits = min(rest, chunk_bits)
    low = 1.0 - 2.0 * ((np.arange(2 ** low_bits)[:, None] >> np.arange(low_bits)) & 1)
    for high in itertools.product((1.0, -1.0), repeat=rest - low_bits):
        verts = np.empty((low.shape[0], d))
        verts[:, 0] = 1.0
        verts[:, 1:1 + low_bits] = low
        if high:
            verts[:, 1 + low_bits:] = high
        vals = np.einsum("ij,jk,ik->i", verts, inv, verts)
        best = max(best, float(vals.max()))
    return math.sqrt(best)
