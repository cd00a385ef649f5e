"""Bradley-Terry preferences and (possibly misreported) labeled datasets.

Label convention: ``0`` means the first alternative was preferred, which
happens with probability ``sigmoid(<theta, feat_0 - feat_1>)``. A labeler's
strategy is the parameter its labels are drawn from; query features are
never touched.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .env import ComparisonQuery, QuerySet
from .errors import InputError, NumericError

MAX_ENUMERATION_N = 12


def sigmoid(u):
    """Logistic function, branch-on-sign so neither branch overflows."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def _check_finite(*arrays) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite parameter or feature values")


def bt_preference_prob(theta, query: ComparisonQuery) -> float:
    """Probability that ``query.feat_0`` is preferred under parameter ``theta``."""
    theta = np.asarray(theta, dtype=float)
    _check_finite(theta, query.feat_0, query.feat_1)
    p = sigmoid(float(theta @ query.diff))
    # keep strictly inside (0, 1) where float rounding would saturate
    return float(np.clip(p, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0)))


def preference_probs(theta, diffs) -> np.ndarray:
    """Vectorized ``bt_preference_prob`` over the rows of ``diffs``."""
    theta = np.asarray(theta, dtype=float)
    diffs = np.asarray(diffs, dtype=float)
    _check_finite(theta, diffs)
    return np.atleast_1d(sigmoid(diffs @ theta))


class LabelerDataset:
    """One labeler's fixed queries plus binary labels.

    The parameter the labels were drawn from is kept for diagnostics only;
    estimation code works from :attr:`signed_diffs` and never sees it.
    """

    def __init__(self, labeler: int, queries: QuerySet, labels, report_param=None):
        labels = np.asarray(labels, dtype=np.int8)
        if labels.shape != (queries.n,):
            raise InputError(f"expected {queries.n} labels, got shape {labels.shape}")
        if np.any((labels != 0) & (labels != 1)):
            raise InputError("labels must be 0 or 1")
        labels.flags.writeable = False
        self.labeler = int(labeler)
        self.queries = queries
        self.labels = labels
        self._report_param = None if report_param is None else np.array(report_param, dtype=float)

    @property
    def n(self) -> int:
        return self.queries.n

    @property
    def signed_diffs(self) -> np.ndarray:
        """Rows ``s_j * x_j`` with ``s_j = +1`` for label 0 and ``-1`` for label 1."""
        signs = 1.0 - 2.0 * self.labels
        return np.ascontiguousarray(self.queries.diffs * signs[:, None])

    def diagnostics(self) -> dict[str, Any]:
        return {"report_param": None if self._report_param is None else self._report_param.copy()}

    def to_dict(self, diagnostics: bool = False) -> dict[str, Any]:
        out = {"labeler": self.labeler, "queries": self.queries.to_dict(),
               "labels": self.labels.tolist()}
        if diagnostics and self._report_param is not None:
            out["report_param"] = self._report_param.tolist()
        return out

    def to_json(self, diagnostics: bool = False) -> str:
        return json.dumps(self.to_dict(diagnostics=diagnostics))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LabelerDataset":
        return cls(data["labeler"], QuerySet.from_dict(data["queries"]), data["labels"],
                   data.get("report_param"))


def labels_from_uniforms(report_param, queries: QuerySet, uniforms) -> np.ndarray:
    """Label 0 where ``uniforms < P(feat_0 preferred)``; reuse uniforms for common random numbers."""
    p = preference_probs(report_param, queries.diffs)
    return (np.asarray(uniforms) >= p).astype(np.int8)


def sample_dataset(report_param, queries: QuerySet, rng: np.random.Generator,
                   uniforms=None) -> LabelerDataset:
    if queries.n == 0:
        raise InputError("cannot label an empty query set")
    if uniforms is None:
        uniforms = rng.random(queries.n)
    labels = labels_from_uniforms(report_param, queries, uniforms)
    return LabelerDataset(queries.labeler, queries, labels, report_param)


def enumerate_labelings(report_param, queries: QuerySet) -> tuple[np.ndarray, np.ndarray]:
    """All ``2^n`` label vectors with their exact probabilities under ``report_param``."""
    n = queries.n
    if n > MAX_ENUMERATION_N:
        raise InputError(f"exact enumeration supports n <= {MAX_ENUMERATION_N}, got {n}")
    codes = np.arange(2 ** n)
    labels = ((codes[:, None] >> np.arange(n)) & 1).astype(np.int8)
    p0 = preference_probs(report_param, queries.diffs)
    probs = np.where(labels == 0, p0, 1.0 - p0).prod(axis=1)
    return labels, probs
