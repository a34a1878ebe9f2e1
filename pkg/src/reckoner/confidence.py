"""Confidence-based data splitting and confidence-stratified bias analysis:
per-bucket group rate gaps and per-bucket feature histograms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, DataError, UndefinedRateError
from .metrics import GroupRates, bias_gap, confusion, rates
from .serial import round_float

GAP_RATES = ("tpr", "tnr", "fpr", "fnr")


def confidence_of(model, x: np.ndarray) -> np.ndarray | float:
    """max(p, 1 - p) of the model's predicted probability; always in [0.5, 1]."""
    p = model.score(x)
    if isinstance(p, float):
        return max(p, 1.0 - p)
    return np.maximum(p, 1.0 - p)


@dataclass(frozen=True)
class ConfidenceSplit:
    threshold: float
    low: np.ndarray
    high: np.ndarray
    scores: np.ndarray

    @property
    def low_empty(self) -> bool:
        return self.low.size == 0

    @property
    def high_empty(self) -> bool:
        return self.high.size == 0


def split_by_confidence(d: Dataset, model, threshold: float) -> ConfidenceSplit:
    """Partition rows at a confidence threshold; ties go to the high side."""
    if not (0.5 <= threshold < 1.0):
        raise ConfigError(f"confidence threshold must lie in [0.5, 1), got {threshold}")
    scores = np.asarray(confidence_of(model, d.x), dtype=np.float64)
    is_high = scores >= threshold
    idx = np.arange(d.n, dtype=np.int64)
    return ConfidenceSplit(
        threshold=threshold,
        low=idx[~is_high],
        high=idx[is_high],
        scores=scores,
    )


@dataclass(frozen=True)
class BucketSpec:
    """Confidence bucket boundaries: [t_k, t_{k+1}), the last bucket closed at 1."""

    thresholds: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8)

    def __post_init__(self) -> None:
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        t = self.thresholds
        if not t or t[0] != 0.5:
            raise ConfigError("bucket thresholds must start at 0.5")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ConfigError("bucket thresholds must be strictly increasing")
        if t[-1] >= 1.0:
            raise ConfigError("bucket thresholds must stay below 1")

    @property
    def count(self) -> int:
        return len(self.thresholds)

    def edges(self) -> list[tuple[float, float]]:
        t = self.thresholds
        return [(t[k], t[k + 1] if k + 1 < len(t) else 1.0) for k in range(len(t))]

    def assign(self, scores: np.ndarray) -> np.ndarray:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.size and (scores.min() < 0.5 or scores.max() > 1.0):
            raise DataError("confidence scores must lie in [0.5, 1]")
        idx = np.searchsorted(np.asarray(self.thresholds), scores, side="right") - 1
        return np.clip(idx, 0, self.count - 1).astype(np.int64)


@dataclass(frozen=True)
class BucketEntry:
    lo: float
    hi: float
    group_rates: dict[int, GroupRates]
    group_counts: dict[int, int]
    gaps: dict[str, float | None]


@dataclass(frozen=True)
class BucketReport:
    spec: BucketSpec
    pair: tuple[int, int]
    entries: tuple[BucketEntry, ...]
    total: int

    def to_dict(self) -> dict:
        def fmt(v):
            return None if v is None else round_float(v)

        buckets = []
        for e in self.entries:
            buckets.append({
                "lo": e.lo,
                "hi": e.hi,
                "counts": {str(g): c for g, c in sorted(e.group_counts.items())},
                "rates": {
                    str(g): {name: fmt(r.get(name)) for name in
                             ("tpr", "tnr", "fpr", "fnr", "positive_rate")}
                    for g, r in sorted(e.group_rates.items())
                },
                "gaps": {name: fmt(e.gaps[name]) for name in GAP_RATES},
            })
        return {
            "group_pair": [self.pair[0], self.pair[1]],
            "thresholds": list(self.spec.thresholds),
            "total": self.total,
            "buckets": buckets,
        }

    def to_csv_rows(self) -> list[list[str]]:
        """One row per bucket x group x measure, plus per-bucket gap rows."""
        rows = [["bucket", "lo", "hi", "group", "measure", "value"]]

        def fmt(v):
            return "" if v is None else f"{v:.12g}"

        for k, e in enumerate(self.entries):
            for g in sorted(e.group_counts):
                rows.append([str(k), fmt(e.lo), fmt(e.hi), str(g), "count",
                             str(e.group_counts[g])])
                r = e.group_rates[g]
                for name in ("tpr", "tnr", "fpr", "fnr", "positive_rate"):
                    rows.append([str(k), fmt(e.lo), fmt(e.hi), str(g), name,
                                 fmt(r.get(name))])
            for name in GAP_RATES:
                rows.append([str(k), fmt(e.lo), fmt(e.hi), "gap", f"delta_{name}",
                             fmt(e.gaps[name])])
        return rows


def bucket_analysis(d: Dataset, preds, scores, spec: BucketSpec,
                    g_i: int, g_j: int) -> BucketReport:
    """Per-bucket, per-group confusion rates and signed gaps for a group pair.

    Undefined rates propagate as None gaps rather than being zero-filled.
    """
    preds = np.asarray(preds, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if not (preds.shape[0] == scores.shape[0] == d.n):
        raise DataError("preds, scores, and dataset lengths differ")
    assignment = spec.assign(scores)
    entries = []
    for k, (lo, hi) in enumerate(spec.edges()):
        mask = assignment == k
        table = rates(confusion(preds[mask], d.y[mask], d.s[mask]))
        gaps: dict[str, float | None] = {}
        for name in GAP_RATES:
            try:
                gaps[name] = bias_gap(table, name, g_i, g_j)
            except (UndefinedRateError, DataError):
                gaps[name] = None
        counts = {g: int((d.s[mask] == g).sum()) for g in np.unique(d.s[mask])}
        entries.append(BucketEntry(
            lo=lo, hi=hi,
            group_rates=dict(table.groups),
            group_counts={int(g): c for g, c in counts.items()},
            gaps=gaps,
        ))
    return BucketReport(spec=spec, pair=(g_i, g_j), entries=tuple(entries), total=d.n)


@dataclass(frozen=True)
class HistogramReport:
    feature: str
    edges: np.ndarray
    counts: dict[tuple[int, int], np.ndarray]  # (bucket, group) -> per-bin counts

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "edges": [round_float(e) for e in self.edges],
            "counts": {
                f"{b}:{g}": [int(c) for c in arr]
                for (b, g), arr in sorted(self.counts.items())
            },
        }

    def to_csv_rows(self) -> list[list[str]]:
        rows = [["bucket", "group", "bin", "lo", "hi", "count"]]
        for (b, g), arr in sorted(self.counts.items()):
            for i, c in enumerate(arr):
                rows.append([str(b), str(g), str(i),
                             f"{self.edges[i]:.12g}", f"{self.edges[i + 1]:.12g}",
                             str(int(c))])
        return rows


def feature_histograms(d: Dataset, scores, spec: BucketSpec, feature: str,
                       bins: int) -> HistogramReport:
    """Equal-width histograms of one numeric feature, split by bucket and group.

    Bin edges are shared across all cells, spanning the feature's global
    [min, max].
    """
    if bins < 1:
        raise ConfigError("bins must be >= 1")
    if d.n == 0:
        raise DataError("empty dataset")
    offsets = d.schema.feature_offsets()
    kinds = {c.name: c.kind for c in d.schema.feature_columns}
    if feature not in kinds:
        raise DataError(f"unknown feature {feature!r}")
    if kinds[feature] != "numeric":
        raise DataError(f"feature {feature!r} is not numeric")
    values = d.x[:, offsets[feature]]
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[0] != d.n:
        raise DataError("scores and dataset lengths differ")
    assignment = spec.assign(scores)
    _, edges = np.histogram(values, bins=bins, range=(values.min(), values.max()))
    counts: dict[tuple[int, int], np.ndarray] = {}
    for k in range(spec.count):
        for g in np.unique(d.s):
            mask = (assignment == k) & (d.s == g)
            cell, _ = np.histogram(values[mask], bins=edges)
            counts[(k, int(g))] = cell
    return HistogramReport(feature=feature, edges=edges, counts=counts)
