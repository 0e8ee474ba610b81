"""Deterministic in-process backend driven by synthetic VNF models."""
from __future__ import annotations

import math
import random
import threading
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence

from chainprof import kernels
from chainprof.backend.base import Backend, NodeResult, RunResult
from chainprof.errors import ValidationError
from chainprof.model import (LinkSpec, ResourceConfiguration, ResourceLimits, TopologyDescriptor,
                             validate_limits)
from chainprof.seeding import node_seed

RESULT_FILE = "result.json"


@dataclass(frozen=True)
class SimVNFModel:
    """Synthetic performance model of one VNF.

    ``base_rate`` is the primary-metric rate on one core with full CPU time.
    """

    base_rate: float
    parallel_fraction: float = 1.0
    max_threads: int = 1
    cpu_bound: bool = True
    mem_floor_mb: float = 0.0
    noise_std: float = 0.0
    metric_key: str = "throughput"

    def __post_init__(self):
        problems = []
        if not (math.isfinite(self.base_rate) and self.base_rate > 0):
            problems.append("base_rate must be > 0")
        if not 0.0 <= self.parallel_fraction <= 1.0:
            problems.append("parallel_fraction must be in [0,1]")
        if isinstance(self.max_threads, bool) or int(self.max_threads) != self.max_threads \
                or self.max_threads < 1:
            problems.append("max_threads must be a positive integer")
        if not self.mem_floor_mb >= 0:
            problems.append("mem_floor_mb must be ≥ 0")
        if not self.noise_std >= 0:
            problems.append("noise_std must be ≥ 0")
        if problems:
            raise ValidationError(problems)

    def to_dict(self):
        return {"base_rate": self.base_rate, "parallel_fraction": self.parallel_fraction,
                "max_threads": self.max_threads, "cpu_bound": self.cpu_bound,
                "mem_floor_mb": self.mem_floor_mb, "noise_std": self.noise_std,
                "metric_key": self.metric_key}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def sim_evaluate(model: SimVNFModel, limits: ResourceLimits, noise_draw: float = 0.0) -> float:
    validate_limits(limits).raise_for_errors()
    cores = 1 if limits.cpu_cores is None else limits.cpu_cores
    q = 1.0 if limits.cpu_time is None else limits.cpu_time
    mem = math.nan if limits.mem_max is None else limits.mem_max
    return kernels.sim_evaluate(float(model.base_rate), float(model.parallel_fraction),
                                float(model.max_threads), bool(model.cpu_bound),
                                float(model.mem_floor_mb), float(model.noise_std),
                                float(cores), float(q), float(mem), float(noise_draw))


@dataclass(frozen=True)
class ChainMetrics:
    throughput: float
    latency_ms: float
    path: tuple


def sim_chain_metric(topo: TopologyDescriptor, capacities: Mapping[str, float],
                     links: Optional[Sequence[LinkSpec]] = None) -> ChainMetrics:
    """End-to-end throughput (min rule) and latency (sum rule) along source→sink.

    ``links`` overrides the topology's links, e.g. for a topology variant.
    """
    if links is not None:
        topo = TopologyDescriptor(topo.nodes, topo.probes, tuple(links), topo.variant)
    sources = topo.probes_with_role("source")
    sinks = topo.probes_with_role("sink")
    hops = None
    for src in sources:
        for dst in sinks:
            hops = topo.path(src.id, dst.id)
            if hops is not None:
                break
        if hops is not None:
            break
    if hops is None:
        raise ValidationError("no source-to-sink path in topology")
    vnfs = set(topo.node_ids)
    path_nodes = tuple(lk.dst for lk in hops if lk.dst in vnfs)
    throughput = math.inf
    for node in path_nodes:
        throughput = min(throughput, capacities[node])
    for lk in hops:
        if lk.bw_mbps is not None:
            throughput = min(throughput, lk.bw_mbps)
    latency = 0.0
    for lk in hops:
        latency += lk.delay_ms
    return ChainMetrics(throughput, latency, path_nodes)


class SimulatedBackend(Backend):
    """Synthesizes result documents from SimVNFModels.

    Each node's noise draw comes from its own generator seeded from
    (run seed, node id), so runs can be executed in any order or in
    parallel with identical output.
    """

    concurrency_safe = True

    def __init__(self, models: Mapping[str, SimVNFModel]):
        self.models = dict(models)
        self._lock = threading.Lock()
        self.active = 0
        self.deployed = 0
        self.torn_down = 0

    def _deploy(self):
        with self._lock:
            self.active += 1
            self.deployed += 1

    def _teardown(self):
        with self._lock:
            self.active -= 1
            self.torn_down += 1

    def close(self):
        if self.active:
            raise RuntimeError(f"{self.active} simulated runs still active")

    def capacities(self, topo, config, rng_seed) -> Dict[str, float]:
        caps = {}
        for node in topo.node_ids:
            draw = random.Random(node_seed(rng_seed, node)).gauss(0.0, 1.0)
            caps[node] = sim_evaluate(self.models[node], config.limits_for(node), draw)
        return caps

    def execute_run(self, topo: TopologyDescriptor, config: ResourceConfiguration,
                    repetition: int, rng_seed: int) -> RunResult:
        missing = [n for n in topo.node_ids if n not in self.models]
        if missing:
            raise ValidationError([f"no simulation model for node {n!r}" for n in missing])
        self._deploy()
        try:
            caps = self.capacities(topo, config, rng_seed)
            result = RunResult()
            chain = sim_chain_metric(topo, caps) if topo.probes else None
            for node in topo.node_ids:
                model = self.models[node]
                doc = {model.metric_key: caps[node], "capacity": caps[node]}
                if chain is not None and node in chain.path:
                    doc["processed"] = chain.throughput
                result.nodes[node] = NodeResult({RESULT_FILE: doc},
                                                log=f"config={config.index} rep={repetition}")
            for probe in topo.probes:
                if probe.role == "source":
                    doc = {"sent": chain.throughput}
                else:
                    doc = {"throughput": chain.throughput, "latency_ms": chain.latency_ms}
                result.nodes[probe.id] = NodeResult({RESULT_FILE: doc})
            return result
        finally:
            self._teardown()
