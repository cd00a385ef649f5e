"""Experiment grid: truthful and strategic suboptimality of the four algorithms.

Cells are keyed by ``(algorithm, n, seed)``. Within a seed the instance is
independent of ``n`` and the queries and base label uniforms are nested
prefixes of one long draw, so rows along ``n`` share randomness.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from ..env import InstanceConfig, QuerySet, derive_rng, generate_instance, sample_features
from ..errors import ConfigError
from ..estimation import DEFAULT_CF, DEFAULT_DELTA
from ..policy import ALGORITHMS, welfare_report
from ..strategic import Arena, AttackConfig, spsa_attack

CSV_HEADER = ("algorithm", "n", "seed", "regime", "subopt", "alpha", "gain", "runtime_ms")
REGIMES = ("truthful", "strategic", "both")


@dataclass(frozen=True)
class ExperimentConfig:
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    algorithms: tuple[str, ...] = ALGORITHMS
    n_grid: tuple[int, ...] = (20, 50, 100, 200)
    seeds: int = 5
    regime: str = "both"
    delta: float = DEFAULT_DELTA
    c_f: float = DEFAULT_CF
    attack: AttackConfig = field(default_factory=AttackConfig)
    # None means every labeler attacks once (round robin)
    attackers: int | None = None
    timing: bool = False
    output: str | None = None

    def __post_init__(self):
        if not self.n_grid or any(int(n) < 1 for n in self.n_grid):
            raise ConfigError("n_grid must be a non-empty list of positive sample sizes")
        if int(self.seeds) < 1:
            raise ConfigError("seeds must be at least 1")
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown or not self.algorithms:
            raise ConfigError(f"algorithms must be a non-empty subset of {ALGORITHMS}")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if self.attackers is not None and not 1 <= self.attackers <= self.instance.k:
            raise ConfigError(f"attackers must lie in [1, k={self.instance.k}]")
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        if "instance" in data:
            data["instance"] = InstanceConfig.from_dict(data["instance"] or {})
        if "attack" in data:
            attack = data["attack"] or {}
            bad = set(attack) - set(AttackConfig.__dataclass_fields__)
            if bad:
                raise ConfigError(f"unknown attack config keys: {sorted(bad)}")
            data["attack"] = AttackConfig(**attack)
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        attack = {name: getattr(self.attack, name) for name in AttackConfig.__dataclass_fields__}
        return {"instance": self.instance.to_dict(), "algorithms": list(self.algorithms),
                "n_grid": list(self.n_grid), "seeds": self.seeds, "regime": self.regime,
                "delta": self.delta, "c_f": self.c_f, "attack": attack,
                "attackers": self.attackers, "timing": self.timing, "output": self.output}


@dataclass
class CellResult:
    rows: list[dict]
    trajectories: list[dict]
    errors: list[dict]


def seed_material(cfg: ExperimentConfig, seed: int):
    """Instance, nested queries and base uniforms for one seed at the largest ``n``."""
    inst_cfg = cfg.instance
    n_max = max(cfg.n_grid)
    instance = generate_instance(inst_cfg.replace(n=n_max, seed=seed),
                                 rng=derive_rng(inst_cfg.seed, 0, seed))
    rng = derive_rng(inst_cfg.seed, 1, seed)
    feats = [(sample_features(n_max, inst_cfg.d, inst_cfg.L, inst_cfg.sampler, rng),
              sample_features(n_max, inst_cfg.d, inst_cfg.L, inst_cfg.sampler, rng))
             for _ in range(inst_cfg.k)]
    uniforms = derive_rng(inst_cfg.seed, 2, seed).random((inst_cfg.k, n_max))
    return instance, feats, uniforms


def build_arena(cfg: ExperimentConfig, algorithm: str, n: int, seed: int, material=None) -> Arena:
    instance, feats, uniforms = material or seed_material(cfg, seed)
    queries = [QuerySet(i, f0[:n], f1[:n]) for i, (f0, f1) in enumerate(feats)]
    return Arena(instance, queries, algorithm, base_uniforms=[u[:n] for u in uniforms],
                 delta=cfg.delta, c_f=cfg.c_f)


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    if isinstance(value, float):
        return repr(round(value, 12))
    return str(value)


def _cell_attack_seed(cfg: ExperimentConfig, algorithm: str, n: int, seed: int) -> int:
    key = [cfg.instance.seed, 3, seed, n, ALGORITHMS.index(algorithm)]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def run_cell(cfg: ExperimentConfig, algorithm: str, n: int, seed: int, material=None,
             trace: bool = False) -> CellResult:
    rows, trajectories, errors = [], [], []
    base = {"algorithm": algorithm, "n": n, "seed": seed}
    try:
        t0 = time.perf_counter()
        arena = build_arena(cfg, algorithm, n, seed, material)
        z = arena.occupancy(arena.base_thetas)
        report = welfare_report(z, arena.instance.true_params)
        runtime = (time.perf_counter() - t0) * 1e3
        if cfg.regime in ("truthful", "both"):
            rows.append(dict(base, regime="truthful", subopt=report.subopt,
                             alpha=report.approx_ratio, gain=None,
                             runtime_ms=runtime if cfg.timing else None))
    except Exception as exc:  # recorded per row, the grid keeps going
        errors.append(dict(base, regime="truthful", error=f"{type(exc).__name__}: {exc}"))
        rows.append(dict(base, regime="truthful", subopt=None, alpha=None, gain=None, runtime_ms=None))
        return CellResult(rows, trajectories, errors)
    if cfg.regime in ("strategic", "both"):
        try:
            t0 = time.perf_counter()
            attack = replace(cfg.attack, seed=_cell_attack_seed(cfg, algorithm, n, seed))
            count = arena.k if cfg.attackers is None else cfg.attackers
            shifts, gains = [], []
            for i in range(count):
                res = spsa_attack(arena, i, attack)
                # paired on the same held-out label draws as the truthful baseline
                shifts.append(res.attacked_subopt - res.truthful_subopt)
                gains.append(res.gain)
                if trace:
                    trajectories.extend(dict(base, labeler=i, **r) for r in res.trajectory_rows())
            subopt = report.subopt + float(np.mean(shifts))
            w_star = report.optimal_welfare
            alpha = (w_star - subopt) / w_star if w_star > 0 else None
            runtime = (time.perf_counter() - t0) * 1e3
            rows.append(dict(base, regime="strategic", subopt=subopt, alpha=alpha,
                             gain=float(np.mean(gains)), runtime_ms=runtime if cfg.timing else None))
        except Exception as exc:
            errors.append(dict(base, regime="strategic", error=f"{type(exc).__name__}: {exc}"))
            rows.append(dict(base, regime="strategic", subopt=None, alpha=None, gain=None, runtime_ms=None))
    return CellResult(rows, trajectories, errors)


def _run_seed(args) -> list[tuple[tuple, CellResult]]:
    cfg, seed, trace = args
    material = seed_material(cfg, seed)
    out = []
    for n in cfg.n_grid:
        for algorithm in cfg.algorithms:
            key = (seed, n, ALGORITHMS.index(algorithm))
            out.append((key, run_cell(cfg, algorithm, n, seed, material, trace)))
    return out


def thread_count() -> int:
    raw = os.environ.get("STRATRLHF_THREADS", "")
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"STRATRLHF_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError("STRATRLHF_THREADS must be at least 1")
    return value


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]
    trajectories: list[dict]
    errors: list[dict]

    def to_csv(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in CSV_HEADER])
        return buf.getvalue()

    def trajectories_csv(self) -> str:
        buf = io.StringIO()
        cols = ("algorithm", "n", "seed", "labeler", "step", "utility", "report_norm")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in self.trajectories:
            writer.writerow([_fmt(row[c]) for c in cols])
        return buf.getvalue()

    def summary(self) -> dict:
        groups: dict[tuple, list[dict]] = {}
        for row in self.rows:
            groups.setdefault((row["algorithm"], row["n"], row["regime"]), []).append(row)
        cells = []
        for (algorithm, n, regime), rows in groups.items():
            entry = {"algorithm": algorithm, "n": n, "regime": regime, "count": len(rows)}
            for metric in ("subopt", "alpha", "gain"):
                vals = np.array([r[metric] for r in rows if r[metric] is not None], dtype=float)
                vals = vals[np.isfinite(vals)]
                entry[f"{metric}_mean"] = float(vals.mean()) if vals.size else None
                entry[f"{metric}_se"] = (float(vals.std(ddof=1) / math.sqrt(vals.size))
                                         if vals.size > 1 else None)
            cells.append(entry)
        return {"normalization": "B=L=1, welfare = mean labeler utility over occupancy in [-1,1]^d",
                "config": self.config.to_dict(), "cells": cells, "errors": self.errors}

    def mean(self, algorithm: str, n: int, regime: str, metric: str = "subopt") -> float:
        vals = [r[metric] for r in self.rows
                if (r["algorithm"], r["n"], r["regime"]) == (algorithm, n, regime) and r[metric] is not None]
        return float(np.mean(vals)) if vals else math.nan

    def write(self, out_dir: str | Path, tsv: bool = False, trace: bool = False) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        name = "results.tsv" if tsv else "results.csv"
        paths = [out_dir / name, out_dir / "summary.json"]
        paths[0].write_text(self.to_csv("\t" if tsv else ","), encoding="utf-8")
        paths[1].write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        if trace:
            paths.append(out_dir / "trajectories.csv")
            paths[-1].write_text(self.trajectories_csv(), encoding="utf-8")
        return paths


def run_experiment(cfg: ExperimentConfig, trace: bool = False, workers: int | None = None) -> ExperimentResult:
    """Run every ``(algorithm, n, seed)`` cell; parallel over seeds, merged in key order."""
    workers = thread_count() if workers is None else workers
    jobs = [(cfg, seed, trace) for seed in range(cfg.seeds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(workers, len(jobs))) as pool:
            parts = list(pool.map(_run_seed, jobs))
    else:
        parts = [_run_seed(job) for job in jobs]
    cells = sorted((item for part in parts for item in part), key=lambda kv: kv[0])
    # rows ordered by (n, algorithm, seed, regime) for readability
    cells.sort(key=lambda kv: (kv[0][1], kv[0][2], kv[0][0]))
    rows, trajectories, errors = [], [], []
    for _, res in cells:
        rows.extend(res.rows)
        trajectories.extend(res.trajectories)
        errors.extend(res.errors)
    return ExperimentResult(cfg, rows, trajectories, errors)
