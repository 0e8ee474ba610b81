"""Domain types for profiling campaigns and configuration-space enumeration.

All types are immutable value objects. Resource limits follow the usual
container controls: number of cores, share of CPU time, memory, swap and
block-device bandwidth. A missing limit means "unlimited".
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field, fields
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from chainprof.errors import ValidationError

# enumeration order of dimensions, last one varies fastest
DIMENSIONS = ("cpu_cores", "cpu_time", "mem_max", "mem_swap_max", "block_io_bw")

PROBE_ROLES = ("source", "sink", "measure")
SCOPES = ("VNFP", "NSP", "TP")

_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")


def quantize(value: float) -> float:
    """Round to the 9 significant digits used in the records file."""
    return float(format(value, ".9g"))


@dataclass(frozen=True)
class HostDescriptor:
    cpu_model: str
    physical_cores: int
    total_mem_mb: int

    def to_dict(self):
        return {"cpu_model": self.cpu_model, "physical_cores": self.physical_cores,
                "total_mem_mb": self.total_mem_mb}

    @classmethod
    def from_dict(cls, d):
        return cls(str(d["cpu_model"]), int(d["physical_cores"]), int(d["total_mem_mb"]))


@dataclass(frozen=True)
class ResourceLimits:
    cpu_cores: Optional[int] = None
    cpu_time: Optional[float] = None
    mem_max: Optional[float] = None
    mem_swap_max: Optional[float] = None
    block_io_bw: Optional[float] = None

    def to_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "ResourceLimits":
        unknown = set(d) - set(DIMENSIONS)
        if unknown:
            raise ValidationError([f"unknown limit dimension {k!r}" for k in sorted(unknown)])
        return cls(**d)

    def get(self, dimension: str):
        return getattr(self, dimension)


@dataclass(frozen=True)
class ResourceConfiguration:
    """Per-node limits for one profiling run; ``index`` is its sweep ordinal."""

    assignments: Mapping[str, ResourceLimits]
    index: int = 0

    def limits_for(self, node_id: str) -> ResourceLimits:
        return self.assignments.get(node_id, ResourceLimits())

    def label(self) -> str:
        parts = []
        for node in sorted(self.assignments):
            lim = self.assignments[node].to_dict()
            inner = ",".join(f"{k}={_fmt(lim[k])}" for k in DIMENSIONS if k in lim)
            parts.append(f"{node}({inner})")
        return ";".join(parts)

    def to_dict(self):
        return {"index": self.index,
                "assignments": {n: self.assignments[n].to_dict() for n in sorted(self.assignments)}}

    @classmethod
    def from_dict(cls, d):
        return cls({n: ResourceLimits.from_dict(v) for n, v in d["assignments"].items()},
                   int(d["index"]))


def _fmt(v):
    if isinstance(v, float) and v.is_integer():
        return str(int(v)) if abs(v) >= 1 else repr(v)
    return repr(v) if isinstance(v, float) else str(v)


@dataclass(frozen=True)
class ConfigurationSpace:
    mode: str
    dimensions: Mapping[str, Mapping[str, Tuple]] = field(default_factory=dict)
    explicit_list: Tuple[Mapping[str, ResourceLimits], ...] = ()

    def to_dict(self):
        if self.mode == "cartesian":
            return {"mode": "cartesian",
                    "dimensions": {n: {d: list(v) for d, v in dims.items()}
                                   for n, dims in self.dimensions.items()}}
        return {"mode": "explicit",
                "configurations": [{n: lim.to_dict() for n, lim in entry.items()}
                                   for entry in self.explicit_list]}


@dataclass(frozen=True)
class NodeSpec:
    id: str
    image: str
    kind: str = "vnf"


@dataclass(frozen=True)
class ProbeSpec:
    id: str
    role: str
    image: str
    isolated_cores: Optional[Tuple[int, ...]] = None


@dataclass(frozen=True)
class LinkSpec:
    src: str
    dst: str
    delay_ms: float = 0.0
    bw_mbps: Optional[float] = None

    def to_dict(self):
        d = {"from": self.src, "to": self.dst, "delay_ms": self.delay_ms}
        if self.bw_mbps is not None:
            d["bw_mbps"] = self.bw_mbps
        return d


@dataclass(frozen=True)
class TopologyDescriptor:
    nodes: Tuple[NodeSpec, ...]
    probes: Tuple[ProbeSpec, ...] = ()
    links: Tuple[LinkSpec, ...] = ()
    variant: Optional[str] = None

    @property
    def node_ids(self) -> List[str]:
        return [n.id for n in self.nodes]

    @property
    def probe_ids(self) -> List[str]:
        return [p.id for p in self.probes]

    @property
    def endpoint_ids(self) -> List[str]:
        return self.node_ids + self.probe_ids

    def probe(self, probe_id: str) -> ProbeSpec:
        for p in self.probes:
            if p.id == probe_id:
                return p
        raise KeyError(probe_id)

    def probes_with_role(self, role: str) -> List[ProbeSpec]:
        return [p for p in self.probes if p.role == role]

    @property
    def whitebox(self) -> bool:
        return not self.probes

    def path(self, start: str, end: str) -> Optional[List[LinkSpec]]:
        """Links along a directed path from ``start`` to ``end`` (BFS), or None."""
        out: Dict[str, List[LinkSpec]] = {}
        for link in self.links:
            out.setdefault(link.src, []).append(link)
        prev: Dict[str, LinkSpec] = {}
        frontier = [start]
        seen = {start}
        while frontier:
            nxt = []
            for cur in frontier:
                for link in out.get(cur, ()):
                    if link.dst in seen:
                        continue
                    seen.add(link.dst)
                    prev[link.dst] = link
                    nxt.append(link.dst)
            frontier = nxt
        if end not in seen:
            return None
        hops = []
        cur = end
        while cur != start:
            hops.append(prev[cur])
            cur = prev[cur].src
        return hops[::-1]

    def to_dict(self):
        d = {
            "nodes": [{"id": n.id, "image": n.image} for n in self.nodes],
            "probes": [_probe_dict(p) for p in self.probes],
            "links": [lk.to_dict() for lk in self.links],
        }
        if self.variant is not None:
            d["variant"] = self.variant
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            nodes=tuple(NodeSpec(n["id"], n["image"], n.get("kind", "vnf")) for n in d["nodes"]),
            probes=tuple(
                ProbeSpec(p["id"], p["role"], p["image"],
                          tuple(p["isolated_cores"]) if p.get("isolated_cores") is not None else None)
                for p in d.get("probes", ())),
            links=tuple(LinkSpec(lk["from"], lk["to"], float(lk.get("delay_ms", 0.0)),
                                 None if lk.get("bw_mbps") is None else float(lk["bw_mbps"]))
                        for lk in d.get("links", ())),
            variant=d.get("variant"),
        )


def _probe_dict(p: ProbeSpec):
    d = {"id": p.id, "role": p.role, "image": p.image}
    if p.isolated_cores is not None:
        d["isolated_cores"] = list(p.isolated_cores)
    return d


@dataclass(frozen=True)
class MetricSpec:
    name: str
    source: str
    file: str
    key: str
    unit: str = ""
    higher_is_better: bool = True

    def to_dict(self):
        return {"name": self.name, "source": self.source, "file": self.file, "key": self.key,
                "unit": self.unit, "higher_is_better": self.higher_is_better}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["source"], d["file"], d["key"], d.get("unit", ""),
                   bool(d.get("higher_is_better", True)))


@dataclass(frozen=True)
class MeasurementRecord:
    config_index: int
    repetition: int
    node: str
    metric: str
    value: float
    unit: str = ""

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValidationError(f"non-finite value for {self.node}/{self.metric}")
        # records are stored with 9 significant digits; keep memory and disk equal
        object.__setattr__(self, "value", quantize(self.value))

    @property
    def key(self):
        return (self.config_index, self.repetition, self.node, self.metric)


@dataclass(frozen=True)
class AggregatedMetric:
    mean: float
    std: float
    n: int
    ci95_low: float
    ci95_high: float
    no_ci: bool = False

    @property
    def half_width(self) -> float:
        return (self.ci95_high - self.ci95_low) / 2.0

    def to_dict(self):
        d = {"mean": self.mean, "std": self.std, "n": self.n,
             "ci95_low": self.ci95_low, "ci95_high": self.ci95_high}
        if self.no_ci:
            d["no_ci"] = True
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["mean"]), float(d["std"]), int(d["n"]), float(d["ci95_low"]),
                   float(d["ci95_high"]), bool(d.get("no_ci", False)))


@dataclass(frozen=True)
class PerformanceProfile:
    scope: str
    subject: str
    table: Mapping[int, Mapping[str, AggregatedMetric]]
    host: HostDescriptor
    metrics: Mapping[str, MetricSpec] = field(default_factory=dict)
    links: Tuple[LinkSpec, ...] = ()

    def metric_names(self) -> List[str]:
        names = set()
        for row in self.table.values():
            names.update(row)
        return sorted(names)


@dataclass
class ValidationReport:
    errors: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_for_errors(self):
        if self.errors:
            raise ValidationError(self.errors)
        return self


# ---------------------------------------------------------------- validation

def validate_limits(limits: ResourceLimits, host: Optional[HostDescriptor] = None,
                    real_executor: bool = False, node: Optional[str] = None) -> ValidationReport:
    """Check every present limit against its domain.

    Core counts above ``host.physical_cores`` are only rejected for real
    executors; the simulated backend uses them to model hyper-threading.
    """
    report = ValidationReport()
    prefix = f"{node}: " if node else ""
    err = report.errors.append
    c = limits.cpu_cores
    if c is not None:
        if isinstance(c, bool) or not isinstance(c, int) and not float(c).is_integer():
            err(f"{prefix}cpu_cores must be an integer")
        elif c < 1:
            err(f"{prefix}cpu_cores must be ≥ 1")
        elif real_executor and host is not None and c > host.physical_cores:
            err(f"{prefix}cpu_cores must be ≤ {host.physical_cores} (physical cores)")
    q = limits.cpu_time
    if q is not None and not (_finite(q) and 0 < q <= 1):
        err(f"{prefix}cpu_time must be in (0,1]")
    if limits.mem_max is not None and not (_finite(limits.mem_max) and limits.mem_max > 0):
        err(f"{prefix}mem_max must be > 0")
    if limits.mem_swap_max is not None and not (_finite(limits.mem_swap_max) and limits.mem_swap_max >= 0):
        err(f"{prefix}mem_swap_max must be ≥ 0")
    if limits.block_io_bw is not None and not (_finite(limits.block_io_bw) and limits.block_io_bw > 0):
        err(f"{prefix}block_io_bw must be > 0")
    return report


def _finite(v) -> bool:
    try:
        return math.isfinite(v)
    except TypeError:
        return False


def validate_topology(topo: TopologyDescriptor) -> ValidationReport:
    report = ValidationReport()
    err = report.errors.append
    seen = set()
    for ident in topo.endpoint_ids:
        if not ident or not _ID_RE.match(ident):
            err(f"invalid id {ident!r}: must match [A-Za-z0-9_-]+")
        if ident in seen:
            err(f"duplicate id {ident!r}")
        seen.add(ident)
    if not topo.nodes:
        err("topology declares no VNF nodes")
    for node in topo.nodes:
        if node.kind != "vnf":
            err(f"node {node.id!r}: kind must be 'vnf'")
    for probe in topo.probes:
        if probe.role not in PROBE_ROLES:
            err(f"probe {probe.id!r}: role must be one of {', '.join(PROBE_ROLES)}")
        if probe.isolated_cores is not None and not probe.isolated_cores:
            err(f"probe {probe.id!r}: isolated_cores must be non-empty when given")
    roles = {p.role for p in topo.probes}
    if topo.probes and not {"source", "sink"} <= roles:
        err("blackbox topology needs at least one source and one sink probe")
    if not topo.probes:
        report.warnings.append("no probes declared: whitebox profiling")

    pairs = set()
    for link in topo.links:
        for end in (link.src, link.dst):
            if end not in seen:
                err(f"link {link.src}->{link.dst}: unknown endpoint {end!r}")
        if link.src == link.dst:
            err(f"link {link.src}->{link.dst}: self-loop")
        if (link.src, link.dst) in pairs:
            err(f"duplicate link {link.src}->{link.dst}")
        pairs.add((link.src, link.dst))
        if not (_finite(link.delay_ms) and link.delay_ms >= 0):
            err(f"link {link.src}->{link.dst}: delay_ms must be ≥ 0")
        if link.bw_mbps is not None and not (_finite(link.bw_mbps) and link.bw_mbps > 0):
            err(f"link {link.src}->{link.dst}: bw_mbps must be > 0")

    endpoints = [e for e in topo.endpoint_ids]
    if len(endpoints) >= 2 and not report.errors:
        adj: Dict[str, set] = {e: set() for e in endpoints}
        for link in topo.links:
            adj[link.src].add(link.dst)
            adj[link.dst].add(link.src)
        stack, reached = [endpoints[0]], {endpoints[0]}
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in reached:
                    reached.add(nb)
                    stack.append(nb)
        if len(reached) != len(endpoints):
            missing = sorted(set(endpoints) - reached)
            err(f"topology graph is disconnected (unreachable: {', '.join(missing)})")
    return report


def validate_space(space: ConfigurationSpace, topo: TopologyDescriptor,
                   host: Optional[HostDescriptor] = None, real_executor: bool = False) -> ValidationReport:
    report = ValidationReport()
    err = report.errors.append
    vnfs = set(topo.node_ids)
    probes = set(topo.probe_ids)

    def check_node(node):
        if node in probes:
            err(f"probe {node!r} cannot carry resource limits")
            return False
        if node not in vnfs:
            err(f"unknown node {node!r}")
            return False
        return True

    if space.mode == "cartesian":
        if not space.dimensions:
            err("cartesian sweep declares no dimensions")
        for node, dims in space.dimensions.items():
            if not check_node(node):
                continue
            if not dims:
                err(f"{node}: no dimensions")
            for dim, values in dims.items():
                if dim not in DIMENSIONS:
                    err(f"{node}: unknown dimension {dim!r}")
                    continue
                if len(values) == 0:
                    err(f"{node}.{dim}: empty dimension list")
                for v in values:
                    r = validate_limits(ResourceLimits(**{dim: v}), host, real_executor, node)
                    report.errors.extend(r.errors)
    elif space.mode == "explicit":
        if not space.explicit_list:
            err("explicit sweep has no entries")
        for i, entry in enumerate(space.explicit_list):
            for node, limits in entry.items():
                if check_node(node):
                    r = validate_limits(limits, host, real_executor, f"configurations[{i}].{node}")
                    report.errors.extend(r.errors)
    else:
        err(f"unknown sweep mode {space.mode!r}")
    return report


# ---------------------------------------------------------------- enumeration

def enumerate_configurations(space: ConfigurationSpace,
                             topo: TopologyDescriptor) -> List[ResourceConfiguration]:
    """Expand a sweep into indexed configurations.

    Cartesian sweeps use odometer order: nodes sorted by id, dimensions in
    DIMENSIONS order, the last (node, dimension) pair varying fastest.
    """
    validate_space(space, topo).raise_for_errors()
    if space.mode == "explicit":
        return [ResourceConfiguration(dict(entry), i) for i, entry in enumerate(space.explicit_list)]

    axes = []
    for node in sorted(space.dimensions):
        dims = space.dimensions[node]
        for dim in DIMENSIONS:
            if dim in dims:
                axes.append((node, dim, tuple(dims[dim])))
    out = []
    for i, combo in enumerate(itertools.product(*(a[2] for a in axes))):
        per_node: Dict[str, Dict[str, float]] = {}
        for (node, dim, _), value in zip(axes, combo):
            per_node.setdefault(node, {})[dim] = value
        out.append(ResourceConfiguration({n: ResourceLimits(**d) for n, d in per_node.items()}, i))
    return out


def marginal_space(reference: Mapping[str, ResourceLimits],
                   dimension: str, values: Mapping[str, Sequence]) -> ConfigurationSpace:
    """Explicit sweep varying one node at a time around ``reference``.

    The reference configuration comes first; every node in ``values`` then
    gets one entry per value that differs from its reference value.
    """
    if dimension not in DIMENSIONS:
        raise ValidationError(f"unknown dimension {dimension!r}")
    ref = {n: reference[n] for n in sorted(reference)}
    entries = [dict(ref)]
    for node in sorted(values):
        base = ref.get(node, ResourceLimits())
        for v in values[node]:
            if v == base.get(dimension):
                continue
            entry = dict(ref)
            entry[node] = _replace(base, dimension, v)
            entries.append(entry)
    return ConfigurationSpace("explicit", explicit_list=tuple(entries))


def _replace(limits: ResourceLimits, dimension: str, value) -> ResourceLimits:
    d = limits.to_dict()
    d[dimension] = value
    return ResourceLimits(**d)


def configuration_count(space: ConfigurationSpace) -> int:
    if space.mode == "explicit":
        return len(space.explicit_list)
    return math.prod(len(v) for dims in space.dimensions.values() for v in dims.values())


def swept_axes(configs: Iterable[ResourceConfiguration]) -> List[Tuple[str, str]]:
    """(node, dimension) pairs whose value differs between configurations."""
    values: Dict[Tuple[str, str], set] = {}
    configs = list(configs)
    nodes = sorted({n for c in configs for n in c.assignments})
    for c in configs:
        for node in nodes:
            lim = c.limits_for(node)
            for dim in DIMENSIONS:
                values.setdefault((node, dim), set()).add(lim.get(dim))
    return [k for k in sorted(values, key=lambda k: (k[0], DIMENSIONS.index(k[1])))
            if len(values[k]) > 1]
