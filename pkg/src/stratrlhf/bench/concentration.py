"""Monte-Carlo checks of the MLE and median concentration rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..aggregation import coordinate_median
from ..env import InstanceConfig, derive_rng, generate_instance, generate_queries
from ..errors import ConfigError
from ..estimation import DEFAULT_CF, confidence_radius, default_ridge, fit_theta
from ..preference import preference_probs


@dataclass(frozen=True)
class ConcentrationConfig:
    d: int = 16
    mle_n_grid: tuple[int, ...] = (100, 200, 400, 800, 1600)
    mle_trials: int = 200
    median_k_grid: tuple[int, ...] = (5, 25, 125)
    median_d_grid: tuple[int, ...] = (4, 16, 64)
    median_trials: int = 2000
    sigma: float = 1.0
    delta: float = 0.1
    c_f: float = DEFAULT_CF
    B: float = 1.0
    L: float = 1.0
    sampler: str = "uniform"
    slope_tol: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if min(self.mle_trials, self.median_trials) < 2:
            raise ConfigError("need at least two trials per grid point")
        if len(self.mle_n_grid) < 2 or len(self.median_k_grid) < 2 or len(self.median_d_grid) < 2:
            raise ConfigError("each grid needs at least two points to fit a slope")


@dataclass
class SuiteResult:
    name: str
    grid: list
    quantiles: list
    slope: float
    target: float
    tol: float
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        ok = abs(self.slope - self.target) <= self.tol
        if "coverage" in self.extra:
            ok = ok and min(self.extra["coverage"]) >= self.extra["coverage_target"]
        return ok

    def to_dict(self) -> dict:
        return {"name": self.name, "grid": self.grid, "quantiles": self.quantiles, "slope": self.slope,
                "target": self.target, "tol": self.tol, "passed": self.passed, **self.extra}


def loglog_slope(x, y) -> float:
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def mle_errors(cfg: ConcentrationConfig, n: int) -> tuple[np.ndarray, float]:
    """Errors ``|theta_hat - theta*|_M`` over ``cfg.mle_trials`` truthful fits, and the radius."""
    errs = np.empty(cfg.mle_trials)
    reg = default_ridge(cfg.d, n, cfg.delta)
    inst_cfg = InstanceConfig(d=cfg.d, k=1, n=n, B=cfg.B, L=cfg.L, sampler=cfg.sampler)
    for t in range(cfg.mle_trials):
        rng = derive_rng(cfg.seed, 21, n, t)
        inst = generate_instance(inst_cfg, rng)
        (queries,) = generate_queries(inst, rng)
        theta = inst.true_params[0]
        prefer_0 = rng.random(n) < preference_probs(theta, queries.diffs)
        y = queries.diffs * np.where(prefer_0, 1.0, -1.0)[:, None]
        theta_hat, *_ = fit_theta(y, cfg.B, reg)
        diff = theta_hat - theta
        metric = queries.covariance + reg * np.eye(cfg.d)
        errs[t] = math.sqrt(diff @ metric @ diff)
    # single-labeler confidence level, matching the radius with k = 1
    radius = confidence_radius(cfg.d, n, 1, cfg.delta, cfg.B, cfg.L, 1, cfg.c_f)
    return errs, radius


def mle_suite(cfg: ConcentrationConfig) -> SuiteResult:
    quantiles, coverage, radii = [], [], []
    for n in cfg.mle_n_grid:
        errs, radius = mle_errors(cfg, n)
        quantiles.append(float(np.quantile(errs, 1 - cfg.delta)))
        coverage.append(float(np.mean(errs <= radius)))
        radii.append(radius)
    # smallest c_f reaching 1 - delta coverage at every n
    needed = max(q / r * cfg.c_f for q, r in zip(quantiles, radii))
    return SuiteResult("mle_error_vs_n", list(cfg.mle_n_grid), quantiles,
                       loglog_slope(cfg.mle_n_grid, quantiles), -0.5, cfg.slope_tol,
                       {"coverage": coverage, "coverage_target": 1 - cfg.delta, "radius": radii,
                        "c_f": cfg.c_f, "c_f_needed": needed})


def median_gaps(k: int, d: int, trials: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """``|median - average|_2`` of ``k`` i.i.d. Gaussian vectors, ``trials`` times."""
    samples = sigma * rng.standard_normal((trials, k, d))
    med = np.stack([coordinate_median(s) for s in samples])
    return np.linalg.norm(med - samples.mean(axis=1), axis=1)


def median_suites(cfg: ConcentrationConfig) -> tuple[SuiteResult, SuiteResult]:
    q = 1 - cfg.delta
    by_k = [float(np.quantile(median_gaps(k, cfg.d, cfg.median_trials, cfg.sigma,
                                          derive_rng(cfg.seed, 22, k, cfg.d)), q))
            for k in cfg.median_k_grid]
    k_mid = cfg.median_k_grid[len(cfg.median_k_grid) // 2]
    by_d = [float(np.quantile(median_gaps(k_mid, d, cfg.median_trials, cfg.sigma,
                                          derive_rng(cfg.seed, 23, k_mid, d)), q))
            for d in cfg.median_d_grid]
    return (SuiteResult("median_gap_vs_k", list(cfg.median_k_grid), by_k,
                        loglog_slope(cfg.median_k_grid, by_k), -0.5, cfg.slope_tol, {"d": cfg.d}),
            SuiteResult("median_gap_vs_d", list(cfg.median_d_grid), by_d,
                        loglog_slope(cfg.median_d_grid, by_d), 0.5, cfg.slope_tol, {"k": k_mid}))


def concentration_suite(cfg: ConcentrationConfig | None = None) -> list[SuiteResult]:
    cfg = cfg or ConcentrationConfig()
    return [mle_suite(cfg), *median_suites(cfg)]
