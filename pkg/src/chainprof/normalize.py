"""Host-relative normalization of profiles and geometric-mean scoring.

Normalized values are ratios to a per-metric host baseline. Ratios are
combined with the geometric mean, which keeps comparisons between profiles
independent of the baseline chosen.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence

from chainprof import kernels
from chainprof.errors import BaselineError
from chainprof.model import AggregatedMetric, HostDescriptor, PerformanceProfile

PROVENANCES = ("measured", "supplied")


@dataclass(frozen=True)
class BaselineVector:
    baselines: Mapping[str, float]
    host: HostDescriptor
    provenance: str = "supplied"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise BaselineError(f"provenance must be one of {PROVENANCES}")

    def value(self, metric: str) -> float:
        if metric not in self.baselines:
            raise BaselineError(f"no baseline for metric {metric!r}")
        b = self.baselines[metric]
        if not (math.isfinite(b) and b > 0):
            raise BaselineError(f"baseline for {metric!r} must be > 0, got {b}")
        return b

    def to_dict(self):
        return {"host": self.host.to_dict(), "provenance": self.provenance,
                "baselines": dict(sorted(self.baselines.items()))}

    @classmethod
    def from_dict(cls, d):
        return cls({k: float(v) for k, v in d["baselines"].items()},
                   HostDescriptor.from_dict(d["host"]), d.get("provenance", "supplied"))

    @classmethod
    def unit(cls, metrics: Iterable[str], host: HostDescriptor) -> "BaselineVector":
        return cls({m: 1.0 for m in metrics}, host, "supplied")


def load_baseline(path) -> BaselineVector:
    from chainprof.configio import check_schema

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    check_schema(doc, "baseline")
    return BaselineVector.from_dict(doc)


def normalize_profile(profile: PerformanceProfile, baseline: BaselineVector) -> PerformanceProfile:
    """Divide every mean, std and CI bound by the metric's baseline."""
    factors = {m: baseline.value(m) for m in profile.metric_names()}
    table = {}
    for ci, row in profile.table.items():
        table[ci] = {
            m: AggregatedMetric(a.mean / factors[m], a.std / factors[m], a.n,
                                a.ci95_low / factors[m], a.ci95_high / factors[m], a.no_ci)
            for m, a in row.items()
        }
    return PerformanceProfile(profile.scope, profile.subject, table, profile.host,
                              profile.metrics, profile.links)


def geometric_mean_score(values: Sequence[float]) -> float:
    values = list(values)
    if not values:
        raise ValueError("geometric mean of an empty sequence")
    for v in values:
        if not v > 0:
            raise ValueError(f"geometric mean needs positive values, got {v}")
    return math.exp(kernels.log_mean(values))


def row_score(row: Mapping[str, AggregatedMetric],
              higher_is_better: Optional[Mapping[str, bool]] = None) -> float:
    """Single-number score of one normalized table row.

    Lower-is-better metrics enter as reciprocals so that larger always
    means better.
    """
    direction = higher_is_better or {}
    ratios = []
    for m, agg in sorted(row.items()):
        r = agg.mean
        ratios.append(r if direction.get(m, True) else 1.0 / r)
    return geometric_mean_score(ratios)


def profile_scores(profile: PerformanceProfile) -> Dict[int, float]:
    direction = {m: spec.higher_is_better for m, spec in profile.metrics.items()}
    return {ci: row_score(row, direction) for ci, row in sorted(profile.table.items())}
