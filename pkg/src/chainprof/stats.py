"""Aggregation of repeated measurements into means and 95% t-intervals."""
from __future__ import annotations

import math
from collections import defaultdict
from typing import Dict, Iterable, Mapping, Sequence, Tuple

from scipy.special import stdtrit

from chainprof import kernels
from chainprof.errors import InsufficientSamples, NonFinite
from chainprof.model import AggregatedMetric, MeasurementRecord

CONFIDENCE = 0.95


def t_quantile(p: float, df: int) -> float:
    """Student-t quantile (inverse regularized incomplete beta, via cephes)."""
    return float(stdtrit(df, p))


def aggregate(samples: Sequence[float]) -> AggregatedMetric:
    """Mean, sample std and two-sided 95% Student-t interval of ``samples``."""
    samples = list(samples)
    if len(samples) < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {len(samples)}")
    if not all(math.isfinite(v) for v in samples):
        raise NonFinite("samples contain non-finite values")
    n = len(samples)
    mean, std = kernels.mean_std(samples)
    if std == 0.0:
        return AggregatedMetric(mean, 0.0, n, mean, mean)
    half = t_quantile(0.5 + CONFIDENCE / 2, n - 1) * std / math.sqrt(n)
    return AggregatedMetric(mean, std, n, mean - half, mean + half)


def point_estimate(value: float) -> AggregatedMetric:
    """Single-sample group carried without an interval."""
    return AggregatedMetric(value, 0.0, 1, value, value, no_ci=True)


GroupKey = Tuple[int, str, str]


def group_records(records: Iterable[MeasurementRecord]) -> Dict[GroupKey, list]:
    groups: Dict[GroupKey, list] = defaultdict(list)
    for r in sorted(records, key=lambda r: r.key):
        groups[(r.config_index, r.node, r.metric)].append(r.value)
    return groups


def aggregate_bundle(records: Iterable[MeasurementRecord],
                     configs: Iterable[int] | None = None,
                     metrics: Iterable[str] | None = None) -> Dict[int, Dict[str, AggregatedMetric]]:
    """Aggregate records per (config_index, metric).

    Metric names are unique per experiment, so the node is implied by the
    metric. ``configs`` and ``metrics`` optionally restrict the output.
    Groups with a single surviving sample become point estimates flagged
    ``no_ci``; empty groups are absent.
    """
    config_set = None if configs is None else set(configs)
    metric_set = None if metrics is None else set(metrics)
    table: Dict[int, Dict[str, AggregatedMetric]] = {}
    for (ci, _node, metric), values in group_records(records).items():
        if config_set is not None and ci not in config_set:
            continue
        if metric_set is not None and metric not in metric_set:
            continue
        agg = aggregate(values) if len(values) >= 2 else point_estimate(values[0])
        table.setdefault(ci, {})[metric] = agg
    return {ci: dict(sorted(row.items())) for ci, row in sorted(table.items())}


def pooled_mean_variance(aggs: Iterable[AggregatedMetric]) -> float:
    """Average variance of the point means (std**2 / n) across table rows."""
    aggs = [a for a in aggs if not a.no_ci]
    if not aggs:
        return 0.0
    return sum(a.std * a.std / a.n for a in aggs) / len(aggs)
