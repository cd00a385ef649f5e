"""Scaling of the measured manipulation gain against Pessimistic MoMLEs.

For each seeded instance and sample size the SPSA gain of one labeler is
divided by ``kappa_i * sqrt((d + log(k/delta)) / n)``, where ``kappa_i`` is
the uniform coverage of that labeler's data. A bounded spread of the ratio
means the gain follows the bound's shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..env import InstanceConfig
from ..estimation import DEFAULT_CF, DEFAULT_DELTA, MleFit, coverage_coefficient
from ..strategic import AttackConfig, spsa_attack
from .experiment import ExperimentConfig, build_arena, seed_material


@dataclass(frozen=True)
class ShapeConfig:
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    n_grid: tuple[int, ...] = (50, 200)
    instances: int = 20
    labeler: int = 0
    attack: AttackConfig = field(default_factory=AttackConfig)
    delta: float = DEFAULT_DELTA
    c_f: float = DEFAULT_CF
    spread: float = 10.0


@dataclass
class ShapeResult:
    rows: list[dict]
    spread: float

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r["ratio"] for r in self.rows])

    @property
    def median(self) -> float:
        return float(np.median(self.ratios))

    @property
    def p95(self) -> float:
        return float(np.quantile(self.ratios, 0.95))

    @property
    def passed(self) -> bool:
        return self.p95 <= self.spread * self.median

    @property
    def degenerate(self) -> bool:
        """All measured gains are zero, so the check holds without exercising the bound."""
        return bool(np.all(self.ratios == 0))

    def to_dict(self) -> dict:
        return {"median_ratio": self.median, "p95_ratio": self.p95, "spread": self.spread,
                "passed": self.passed, "degenerate": self.degenerate, "rows": self.rows}


def bound_shape(d: int, n: int, k: int, delta: float) -> float:
    return math.sqrt((d + math.log(k / delta)) / n)


def run_shape(cfg: ShapeConfig | None = None) -> ShapeResult:
    cfg = cfg or ShapeConfig()
    exp = ExperimentConfig(instance=cfg.instance, algorithms=("pessimistic_momle",), n_grid=cfg.n_grid,
                           seeds=cfg.instances, regime="strategic", delta=cfg.delta, c_f=cfg.c_f)
    rows = []
    for seed in range(cfg.instances):
        material = seed_material(exp, seed)
        for n in cfg.n_grid:
            arena = build_arena(exp, "pessimistic_momle", n, seed, material)
            i = cfg.labeler
            q = arena.queries[i]
            fit = MleFit(arena.base_thetas[i], q.covariance, float(arena.regs[i]), q.n, True, 0.0)
            kappa = coverage_coefficient(fit, mode="uniform").kappa
            res = spsa_attack(arena, i, replace(cfg.attack, seed=seed * 1000 + n))
            shape = kappa * bound_shape(arena.instance.d, n, arena.k, cfg.delta)
            rows.append({"seed": seed, "n": n, "gain": res.gain, "kappa": kappa,
                         "bound_shape": shape, "ratio": res.gain / shape})
    return ShapeResult(rows, cfg.spread)
