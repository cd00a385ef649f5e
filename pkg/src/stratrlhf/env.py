"""Synthetic contextual-bandit instances and offline comparison queries.

A bandit policy is represented only through its feature-occupancy vector
``z`` in the hyperrectangle ``[-1, 1]^d``; contexts are folded into the
feature vectors, so a comparison is just a pair of features.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np
import yaml

from .errors import ConfigError, InputError

SAMPLERS = ("uniform", "hypercube")

OCCUPANCY_LOW = -1.0
OCCUPANCY_HIGH = 1.0


def occupancy_box(d: int) -> tuple[np.ndarray, np.ndarray]:
    """The declared policy (occupancy) space ``[-1, 1]^d``."""
    return np.full(d, OCCUPANCY_LOW), np.full(d, OCCUPANCY_HIGH)


@dataclass(frozen=True)
class InstanceConfig:
    d: int = 16
    k: int = 5
    n: int = 200
    B: float = 1.0
    L: float = 1.0
    seed: int = 0
    gt_mean: float | Sequence[float] = 0.0
    # None means B / sqrt(d)
    gt_scale: float | None = None
    sampler: str = "uniform"

    def __post_init__(self):
        for name in ("d", "k", "n"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("B", "L"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive real, got {value!r}")
        if self.gt_scale is not None and not self.gt_scale >= 0:
            raise ConfigError(f"gt_scale must be non-negative, got {self.gt_scale!r}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        mean = np.atleast_1d(np.asarray(self.gt_mean, dtype=float))
        if mean.size not in (1, self.d):
            raise ConfigError(f"gt_mean must be a scalar or have length d={self.d}")

    @property
    def scale(self) -> float:
        return self.B / math.sqrt(self.d) if self.gt_scale is None else float(self.gt_scale)

    @property
    def mean_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.gt_mean, dtype=float), (self.d,)).copy()

    def replace(self, **changes) -> "InstanceConfig":
        data = self.to_dict()
        data.update(changes)
        return InstanceConfig(**data)

    def to_dict(self) -> dict[str, Any]:
        mean = self.gt_mean
        if not isinstance(mean, (int, float)):
            mean = [float(v) for v in mean]
        return {
            "d": self.d, "k": self.k, "n": self.n, "B": self.B, "L": self.L,
            "seed": self.seed, "gt_mean": mean, "gt_scale": self.gt_scale,
            "sampler": self.sampler,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "InstanceConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown instance config keys: {sorted(unknown)}")
        return cls(**data)


def load_config(path: str | Path) -> dict[str, Any]:
    """Read a YAML or JSON configuration file into a plain dict."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a key-value mapping")
    return data


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for a (master seed, run index, ...) key."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, keys)]))


def project_ball(v: np.ndarray, radius: float) -> np.ndarray:
    nrm = float(np.linalg.norm(v))
    if nrm > radius:
        return v * (radius / nrm)
    return v


@dataclass(frozen=True)
class ProblemInstance:
    d: int
    k: int
    n: int
    B: float
    L: float
    true_params: np.ndarray
    seed: int
    sampler: str = "uniform"

    def __post_init__(self):
        params = np.array(self.true_params, dtype=float)
        if params.shape != (self.k, self.d):
            raise InputError(f"true_params must have shape ({self.k}, {self.d}), got {params.shape}")
        params.flags.writeable = False
        object.__setattr__(self, "true_params", params)

    @property
    def true_average(self) -> np.ndarray:
        return self.true_params.mean(axis=0)

    def to_json(self) -> str:
        return json.dumps({
            "d": self.d, "k": self.k, "n": self.n, "B": self.B, "L": self.L,
            "seed": self.seed, "sampler": self.sampler,
            "true_params": self.true_params.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "ProblemInstance":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class ComparisonQuery:
    feat_0: np.ndarray
    feat_1: np.ndarray
    diff: np.ndarray = field(init=False)

    def __post_init__(self):
        f0 = np.asarray(self.feat_0, dtype=float)
        f1 = np.asarray(self.feat_1, dtype=float)
        if f0.shape != f1.shape or f0.ndim != 1:
            raise InputError("feature vectors must be 1-D and of equal length")
        object.__setattr__(self, "feat_0", f0)
        object.__setattr__(self, "feat_1", f1)
        object.__setattr__(self, "diff", f0 - f1)

    def swapped(self) -> "ComparisonQuery":
        return ComparisonQuery(self.feat_1, self.feat_0)


class QuerySet:
    """Fixed, ordered comparison queries of one labeler.

    Stored as ``(n, d)`` arrays; labels may change between draws but the
    features never do, so the arrays are read-only.
    """

    def __init__(self, labeler: int, feats_0, feats_1):
        f0 = np.array(feats_0, dtype=float, ndmin=2)
        f1 = np.array(feats_1, dtype=float, ndmin=2)
        if f0.shape != f1.shape:
            raise InputError(f"feature arrays differ in shape: {f0.shape} vs {f1.shape}")
        if f0.shape[0] == 0:
            raise InputError("a query set needs at least one query")
        diffs = f0 - f1
        for arr in (f0, f1, diffs):
            arr.flags.writeable = False
        self.labeler = int(labeler)
        self.feats_0 = f0
        self.feats_1 = f1
        self.diffs = diffs

    @classmethod
    def from_diffs(cls, labeler: int, diffs) -> "QuerySet":
        """Query set whose second alternative is the zero feature vector."""
        diffs = np.array(diffs, dtype=float, ndmin=2)
        return cls(labeler, diffs, np.zeros_like(diffs))

    @property
    def n(self) -> int:
        return self.diffs.shape[0]

    @cached_property
    def covariance(self) -> np.ndarray:
        """``(1/n) sum_j x_j x_j^T`` over the difference vectors."""
        cov = self.diffs.T @ self.diffs / self.n
        cov = 0.5 * (cov + cov.T)
        cov.flags.writeable = False
        return cov

    @property
    def d(self) -> int:
        return self.diffs.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, j: int) -> ComparisonQuery:
        return ComparisonQuery(self.feats_0[j], self.feats_1[j])

    def __iter__(self) -> Iterator[ComparisonQuery]:
        return (self[j] for j in range(self.n))

    def to_dict(self) -> dict[str, Any]:
        return {"labeler": self.labeler, "feats_0": self.feats_0.tolist(),
                "feats_1": self.feats_1.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "QuerySet":
        return cls(data["labeler"], data["feats_0"], data["feats_1"])


def generate_instance(config: InstanceConfig, rng: np.random.Generator | None = None) -> ProblemInstance:
    """Draw true reward parameters i.i.d. Gaussian, projected onto the B-ball."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    raw = config.mean_vector + config.scale * rng.standard_normal((config.k, config.d))
    params = np.array([project_ball(row, config.B) for row in raw])
    return ProblemInstance(
        d=config.d, k=config.k, n=config.n, B=float(config.B), L=float(config.L),
        true_params=params, seed=config.seed, sampler=config.sampler,
    )


def sample_features(m: int, d: int, L: float, sampler: str, rng: np.random.Generator) -> np.ndarray:
    half = L / math.sqrt(d)
    if sampler == "uniform":
        return rng.uniform(-half, half, size=(m, d))
    if sampler == "hypercube":
        return half * rng.choice(np.array([-1.0, 1.0]), size=(m, d))
    raise ConfigError(f"unknown sampler {sampler!r}")


def generate_queries(instance: ProblemInstance, rng: np.random.Generator | None = None) -> list[QuerySet]:
    """Independent query sets, one per labeler, each of size ``instance.n``."""
    if rng is None:
        rng = derive_rng(instance.seed, 1)
    sets = []
    for i in range(instance.k):
        f0 = sample_features(instance.n, instance.d, instance.L, instance.sampler, rng)
        f1 = sample_features(instance.n, instance.d, instance.L, instance.sampler, rng)
        sets.append(QuerySet(i, f0, f1))
    return sets
