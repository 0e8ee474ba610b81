"""Scaling-model fits, SLA queries and chain bottleneck analysis.

Three candidate models are fitted to (resource value, metric mean) points:

* constant  y = a
* linear    y = a + b x
* plateau   y = a + b min(x, k), knee k searched over interior tested x values

The smallest residual sum of squares wins; a model with more parameters
must beat a simpler one by more than a tie tolerance. Without measurement
noise the tolerance is 1e-9 relative SSE. When the variance of the point
means is known (from the repetitions) the tolerance is raised to the 99%
chi-square bound of the SSE reduction that pure noise would produce, so
noisy flat or linear profiles are not mistaken for plateaus.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from scipy.stats import chi2

from chainprof import kernels
from chainprof.errors import FitError, MissingMarginalSweep, Unreachable, ValidationError
from chainprof.model import DIMENSIONS, ResourceConfiguration, swept_axes
from chainprof.stats import pooled_mean_variance

INSENSITIVE_THRESHOLD = 0.01
TIE_RTOL = 1e-9
# SSE differences below this fraction of sum(y**2) are rounding noise
TIE_ATOL_SCALE = 1e-20
NOISE_ALPHA = 0.01
ABS_SLOPE_FLOOR = 1e-12

KINDS = ("constant", "linear", "plateau")
N_PARAMS = {"constant": 1, "linear": 2, "plateau": 3}


@dataclass(frozen=True)
class ScalingModel:
    kind: str
    params: Mapping[str, float]
    sse: float
    behavior_class: str
    resource_dimension: str = ""
    metric: str = ""
    saturation_point: Optional[float] = None
    relative_slope: Optional[float] = None
    candidates: Mapping[str, float] = field(default_factory=dict, compare=False)

    def predict(self, x: float) -> float:
        p = self.params
        if self.kind == "constant":
            return p["a"]
        if self.kind == "linear":
            return p["a"] + p["b"] * x
        return p["a"] + p["b"] * min(x, p["k"])

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params), "sse": self.sse,
                "behavior_class": self.behavior_class,
                "resource_dimension": self.resource_dimension, "metric": self.metric,
                "saturation_point": self.saturation_point,
                "relative_slope": self.relative_slope,
                "candidate_sse": dict(self.candidates)}


def _noise_tolerance(noise_var: float, extra_params: int, knee_candidates: int) -> float:
    alpha = NOISE_ALPHA / max(1, knee_candidates)
    return float(chi2.ppf(1.0 - alpha, extra_params)) * noise_var


def fit_scaling_model(points: Sequence[Tuple[float, float]], noise_var: Optional[float] = None,
                      resource_dimension: str = "", metric: str = "",
                      threshold: float = INSENSITIVE_THRESHOLD) -> ScalingModel:
    """Fit constant, linear and plateau models and pick the best one.

    ``noise_var`` is the variance of each point's mean (std**2 / n); leave
    it None for exact data.
    """
    pts = sorted((float(x), float(y)) for x, y in points)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    distinct = sorted(set(xs))
    if len(distinct) < 3:
        raise FitError(f"need at least 3 distinct resource values, got {len(distinct)}")
    if not all(math.isfinite(v) for v in xs + ys):
        raise FitError("points must be finite")

    a0, sse0 = kernels.constant_fit(ys)
    a1, b1, sse1 = kernels.linear_fit(xs, ys)
    a2, b2, k2, sse2 = kernels.plateau_fit(xs, ys)
    knees = len(distinct) - 2
    scale = sum(y * y for y in ys)

    def beats(new, old, extra, knee_count=1):
        tol = TIE_RTOL * old + TIE_ATOL_SCALE * scale
        if noise_var:
            tol = max(tol, _noise_tolerance(noise_var, extra, knee_count))
        return new < old - tol

    kind, sse = "constant", sse0
    if beats(sse1, sse0, 1):
        kind, sse = "linear", sse1
    if beats(sse2, sse, N_PARAMS["plateau"] - N_PARAMS[kind], knees):
        kind, sse = "plateau", sse2

    candidates = {"constant": sse0, "linear": sse1, "plateau": sse2}
    span = distinct[-1] - distinct[0]
    mean_y = sum(ys) / len(ys)
    if kind == "constant":
        return ScalingModel(kind, {"a": a0}, sse0, "insensitive", resource_dimension, metric,
                            relative_slope=0.0, candidates=candidates)
    if kind == "linear":
        if mean_y != 0.0:
            rel = abs(b1) * span / abs(mean_y)
            flat = rel < threshold
        else:
            rel = None
            flat = abs(b1) < ABS_SLOPE_FLOOR
        return ScalingModel(kind, {"a": a1, "b": b1}, sse1, "insensitive" if flat else "scaling",
                            resource_dimension, metric, relative_slope=rel, candidates=candidates)
    rel = abs(b2) * (k2 - distinct[0]) / abs(mean_y) if mean_y != 0.0 else None
    return ScalingModel(kind, {"a": a2, "b": b2, "k": k2}, sse2, "saturating", resource_dimension,
                        metric, saturation_point=k2, relative_slope=rel, candidates=candidates)


def _satisfies(value: float, target: float, higher_is_better: bool) -> bool:
    tol = 1e-9 * max(abs(value), abs(target))
    if higher_is_better:
        return value >= target - tol
    return value <= target + tol


def min_resource_for_sla(model: ScalingModel, grid: Sequence[float], target: float,
                         higher_is_better: bool = True) -> float:
    """Smallest tested grid value whose predicted metric meets ``target``."""
    grid = sorted(grid)
    if not grid:
        raise ValueError("empty grid")
    best = None
    for x in grid:
        y = model.predict(x)
        if _satisfies(y, target, higher_is_better):
            return x
        if best is None or (y > best if higher_is_better else y < best):
            best = y
    raise Unreachable(target, best)


# ---------------------------------------------------------------- marginals

def _limit_tuple(limits):
    return tuple(limits.get(d) for d in DIMENSIONS)


def marginal_points(configs: Sequence[ResourceConfiguration], table, metric: str, node: str,
                    dimension: str, reference: ResourceConfiguration):
    """(x, AggregatedMetric) for configs that vary only ``node``'s ``dimension``.

    Every other node must sit at its reference limits, and ``node``'s other
    dimensions must equal the reference too. Sorted by x.
    """
    nodes = sorted({n for c in configs for n in c.assignments} | set(reference.assignments))
    ref_node = reference.limits_for(node).to_dict()
    ref_node.pop(dimension, None)
    out = []
    for c in configs:
        row = table.get(c.index)
        if row is None or metric not in row:
            continue
        if any(_limit_tuple(c.limits_for(o)) != _limit_tuple(reference.limits_for(o))
               for o in nodes if o != node):
            continue
        mine = c.limits_for(node).to_dict()
        x = mine.pop(dimension, None)
        if x is None or mine != ref_node:
            continue
        out.append((float(x), row[metric]))
    out.sort(key=lambda p: p[0])
    return out


@dataclass(frozen=True)
class SensitivityResult:
    elasticities: Mapping[str, float]
    bottleneck: Optional[str]
    metric: str
    dimension: str

    def to_dict(self):
        return {"metric": self.metric, "dimension": self.dimension,
                "elasticities": dict(sorted(self.elasticities.items())),
                "bottleneck": self.bottleneck}


def elasticity(xs: Sequence[float], ys: Sequence[float]) -> float:
    _, b, _ = kernels.linear_fit(xs, ys)
    mean_x = sum(xs) / len(xs)
    mean_y = sum(ys) / len(ys)
    if mean_y == 0.0:
        return 0.0
    return b * mean_x / mean_y


def chain_sensitivity(bundle, metric: str, dimension: str,
                      reference: Optional[ResourceConfiguration] = None,
                      threshold: float = INSENSITIVE_THRESHOLD) -> SensitivityResult:
    """Per-node elasticity of an end-to-end metric and the resulting bottleneck.

    ``reference`` defaults to configuration 0. A node is the bottleneck when
    its elasticity is the largest and at least ``threshold``; ties go to the
    lexicographically smallest node id.
    """
    if isinstance(reference, int):
        reference = bundle.configuration(reference)
    reference = reference or bundle.configuration(0)
    profile = next((p for p in bundle.profiles if p.scope == "NSP" and metric in p.metrics), None)
    if profile is None:
        profile = next((p for p in bundle.profiles if metric in p.metrics), None)
    if profile is None:
        raise ValidationError(f"unknown metric {metric!r}")
    elasticities = {}
    for node in sorted(bundle.topology.node_ids):
        pts = marginal_points(bundle.configurations, profile.table, metric, node, dimension, reference)
        if len({x for x, _ in pts}) < 2:
            raise MissingMarginalSweep(node, dimension)
        elasticities[node] = elasticity([x for x, _ in pts], [a.mean for _, a in pts])
    bottleneck = None
    best = -math.inf
    for node in sorted(elasticities):
        if elasticities[node] > best:
            best, bottleneck = elasticities[node], node
    if best < threshold:
        bottleneck = None
    return SensitivityResult(elasticities, bottleneck, metric, dimension)


# ---------------------------------------------------------------- report

@dataclass
class Analysis:
    report: dict
    plots: Dict[str, List[Tuple[float, float, float, float, float]]]


def _plot_name(scope, subject, metric, node, dim):
    return f"{scope.lower()}-{subject}__{metric}__{node}-{dim}.csv"


def analyze_bundle(bundle, sla: Optional[Mapping[str, float]] = None,
                   dimension: Optional[str] = None, bottleneck_metric: Optional[str] = None,
                   normalized: bool = False) -> Analysis:
    """Fit every (profile, metric, swept node dimension) marginal in ``bundle``."""
    sla = dict(sla or {})
    profiles = bundle.normalized if normalized and bundle.normalized else bundle.profiles
    configs = bundle.configurations
    reference = configs[0]
    axes = swept_axes(configs)
    if dimension:
        axes = [(n, d) for n, d in axes if dimension in (d, f"{n}:{d}", f"{n}.{d}")]
    fits, skipped = [], []
    plots = {}
    for profile in profiles:
        for metric in sorted(profile.metrics):
            spec = profile.metrics[metric]
            for node, dim in axes:
                if profile.scope == "VNFP" and node != profile.subject:
                    continue
                pts = marginal_points(configs, profile.table, metric, node, dim, reference)
                entry = {"scope": profile.scope, "subject": profile.subject, "metric": metric,
                         "node": node, "dimension": dim}
                try:
                    noise = pooled_mean_variance(a for _, a in pts)
                    model = fit_scaling_model([(x, a.mean) for x, a in pts], noise_var=noise,
                                              resource_dimension=dim, metric=metric)
                except FitError as exc:
                    skipped.append({**entry, "reason": str(exc)})
                    continue
                entry.update(model.to_dict())
                entry["grid"] = sorted({x for x, _ in pts})
                if metric in sla:
                    try:
                        x = min_resource_for_sla(model, entry["grid"], sla[metric], spec.higher_is_better)
                        entry["sla"] = {"target": sla[metric], "allocation": x}
                    except Unreachable as exc:
                        entry["sla"] = {"target": sla[metric], "allocation": "unreachable",
                                        "best_predicted": exc.best}
                fits.append(entry)
                plots[_plot_name(profile.scope, profile.subject, metric, node, dim)] = [
                    (x, a.mean, a.ci95_low, a.ci95_high, model.predict(x)) for x, a in pts]

    report = {
        "bundle": bundle.manifest.name,
        "normalized": bool(normalized and bundle.normalized),
        "insensitive_threshold": INSENSITIVE_THRESHOLD,
        "selection": "min SSE; more parameters must beat simpler models by max(1e-9 relative SSE, "
                     "chi2(0.99) noise bound from repetition variance)",
        "reference_config": reference.index,
        "target_environment": "not translated: allocations are tested grid points on the profiling host",
        "fits": fits,
        "skipped": skipped,
    }
    if bottleneck_metric:
        dims = sorted({d for _, d in axes}, key=DIMENSIONS.index)
        results = []
        for dim in dims:
            try:
                results.append(chain_sensitivity(bundle, bottleneck_metric, dim, reference).to_dict())
            except MissingMarginalSweep as exc:
                results.append({"metric": bottleneck_metric, "dimension": dim, "error": str(exc)})
        report["bottlenecks"] = results
    return Analysis(report, plots)
