"""Ranking metrics for balanced link prediction and their aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import MetricError


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise MetricError(f"{len(s)} scores but {len(y)} labels")
    y = y.astype(bool)
    if y.all() or not y.any():
        raise MetricError("metric needs at least one positive and one negative")
    return s, y


def average_precision(scores, labels) -> float:
    """Step-wise area under the precision-recall curve.

    Items are ranked by descending score; equal scores keep input order, so
    every position is its own threshold.
    """
    s, y = _check(scores, labels)
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / hits.sum())


def auc_roc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counting half."""
    s, y = _check(scores, labels)
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # average ranks over tie groups
    ranks = np.empty(len(s), dtype=np.float64)
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], len(s)]
    avg = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(avg, ends - starts)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class MetricReport:
    per_relation: dict[str, dict[str, float]]
    micro: dict[str, float]
    macro: dict[str, float]
    counts: dict[str, int]
    train_seconds: float = 0.0
    test_seconds: float = 0.0
    tags: dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tags": dict(self.tags),
            "per_relation": {r: dict(m) for r, m in self.per_relation.items()},
            "micro": dict(self.micro),
            "macro": dict(self.macro),
            "counts": dict(self.counts),
            "train_seconds": self.train_seconds,
            "test_seconds": self.test_seconds,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricReport":
        return cls(
            {r: dict(m) for r, m in d["per_relation"].items()},
            dict(d["micro"]),
            dict(d["macro"]),
            {k: int(v) for k, v in d["counts"].items()},
            float(d.get("train_seconds", 0.0)),
            float(d.get("test_seconds", 0.0)),
            dict(d.get("tags", {})),
        )


def _both(scores, labels) -> dict[str, float]:
    return {"AP": average_precision(scores, labels), "AUC": auc_roc(scores, labels)}


def aggregate(sets: Mapping[str, tuple[np.ndarray, np.ndarray]]) -> MetricReport:
    """Per-relation metrics, micro (pooled) and macro (unweighted mean).

    ``sets`` maps a relation label to ``(scores, labels)``.  Pooling keeps
    relation order, then input order, which fixes tie handling for AP.
    """
    if not sets:
        raise MetricError("no score sets to aggregate")
    per = {str(r): _both(s, y) for r, (s, y) in sets.items()}
    pooled_s = np.concatenate([np.asarray(s, dtype=np.float64).reshape(-1) for s, _ in sets.values()])
    pooled_y = np.concatenate([np.asarray(y).reshape(-1) for _, y in sets.values()])
    macro = {k: float(np.mean([m[k] for m in per.values()])) for k in ("AP", "AUC")}
    counts = {str(r): int(np.asarray(y).size) for r, (_, y) in sets.items()}
    return MetricReport(per, _both(pooled_s, pooled_y), macro, counts)
