"""Profiling campaign orchestration.

For each configuration (config-major) and repetition (minor) the engine asks
the backend for one deploy/measure/collect/teardown cycle, turns the
collected result documents into measurement records and finally aggregates
them into NSP, VNFP and TP profiles.
"""
from __future__ import annotations

import datetime as _dt
import logging
import math
import os
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from chainprof import seeding
from chainprof.backend import Backend, RunResult, make_backend
from chainprof.backend.simulated import RESULT_FILE, SimVNFModel
from chainprof.backend.base import BackendConfig
from chainprof.configio import (ExperimentSpec, FlaggedRun, Manifest, ProfileBundle,
                                experiment_from_document, write_bundle)
from chainprof.errors import (CollectionTimeout, FileMissing, MetricMissing, NodeFailed,
                              NodeMissing, NonFinite, NonNumeric)
from chainprof.host import detect_host
from chainprof.model import (HostDescriptor, MeasurementRecord, MetricSpec, PerformanceProfile,
                             enumerate_configurations)
from chainprof.normalize import BaselineVector
from chainprof.stats import aggregate_bundle

log = logging.getLogger(__name__)

BUNDLE_ENV = "CHAINPROF_BUNDLE"


@dataclass(frozen=True)
class RunPlan:
    runs: Tuple[Tuple[int, int], ...]
    seeds: Tuple[int, ...]

    @classmethod
    def build(cls, config_count: int, repetitions: int, seed: int) -> "RunPlan":
        runs = tuple((c, r) for c in range(config_count) for r in range(repetitions))
        seeds = tuple(seeding.run_seed(seed, c, r) for c, r in runs)
        if len(set(seeds)) != len(seeds):
            raise RuntimeError("per-run seed collision")
        return cls(runs, seeds)

    def __len__(self):
        return len(self.runs)


def extract_metric(result: RunResult, m: MetricSpec) -> float:
    node = result.nodes.get(m.source)
    if node is None:
        raise NodeMissing(m.source)
    if node.failure is not None:
        raise NodeFailed(m.source, node.failure)
    doc = node.documents.get(m.file)
    if doc is None:
        raise FileMissing(m.source, m.file)
    if m.key not in doc:
        raise MetricMissing(m.source, m.key)
    raw = doc[m.key]
    if isinstance(raw, bool):
        raise NonNumeric(m.source, m.key, raw)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise NonNumeric(m.source, m.key, raw) from None
    if not math.isfinite(value):
        raise NonFinite(f"{m.source}: key {m.key!r} has non-finite value {raw!r}")
    return value


def build_profiles(spec_topology, metrics: Sequence[MetricSpec], records, host: HostDescriptor,
                   service: str) -> List[PerformanceProfile]:
    """NSP first, then one VNFP per node (declaration order sorted by id), then TP."""
    table = aggregate_bundle(records)
    by_name = {m.name: m for m in metrics}

    def restricted(names):
        names = set(names)
        return {ci: {m: a for m, a in row.items() if m in names} for ci, row in table.items()
                if any(m in names for m in row)}

    node_ids = set(spec_topology.node_ids)
    if spec_topology.whitebox:
        service_metrics = [m.name for m in metrics]
    else:
        service_metrics = [m.name for m in metrics if m.source not in node_ids]
    profiles = [PerformanceProfile("NSP", service, restricted(service_metrics), host,
                                   {n: by_name[n] for n in service_metrics})]
    for node in sorted(node_ids):
        names = [m.name for m in metrics if m.source == node]
        profiles.append(PerformanceProfile("VNFP", node, restricted(names), host,
                                           {n: by_name[n] for n in names}))
    if spec_topology.variant:
        profiles.append(PerformanceProfile("TP", spec_topology.variant, restricted(service_metrics),
                                           host, {n: by_name[n] for n in service_metrics},
                                           tuple(spec_topology.links)))
    return profiles


def run_profiling(spec: ExperimentSpec, destination=None, backend: Optional[Backend] = None,
                  workers: int = 1, host: Optional[HostDescriptor] = None) -> ProfileBundle:
    """Execute the whole campaign described by ``spec``.

    Deploy and limit errors abort the campaign. A collection timeout flags
    that single run and the campaign continues. When ``destination`` is
    given the bundle is written there and the post-process hook (if any) is
    invoked on it.
    """
    host = host or spec.host or detect_host()
    configs = enumerate_configurations(spec.sweep, spec.topology)
    plan = RunPlan.build(len(configs), spec.repetitions, spec.seed)
    backend = backend or make_backend(spec, host)
    topo = spec.topology

    def one(i):
        (ci, rep), seed = plan.runs[i], plan.seeds[i]
        try:
            return backend.execute_run(topo, configs[ci], rep, seed)
        except CollectionTimeout as exc:
            return exc

    backend.open()
    try:
        if workers > 1 and backend.concurrency_safe:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(one, range(len(plan))))
        else:
            results = [one(i) for i in range(len(plan))]
    finally:
        backend.close()

    records: List[MeasurementRecord] = []
    flagged: List[FlaggedRun] = []
    for (ci, rep), result in zip(plan.runs, results):
        if isinstance(result, CollectionTimeout):
            log.warning("run config=%d rep=%d timed out: %s", ci, rep, result)
            flagged.append(FlaggedRun(ci, rep, f"collection timeout: {result}", len(spec.metrics)))
            continue
        failed = []
        for m in spec.metrics:
            try:
                value = extract_metric(result, m)
            except NodeFailed as exc:
                failed.append(str(exc))
                continue
            records.append(MeasurementRecord(ci, rep, m.source, m.name, value, m.unit))
        if failed:
            flagged.append(FlaggedRun(ci, rep, "; ".join(failed), len(failed)))

    records.sort(key=lambda r: r.key)
    service = spec.service or spec.name
    manifest = Manifest(
        name=spec.name, spec_digest=spec.digest, host=host, config_count=len(configs),
        repetitions=spec.repetitions, metric_count=len(spec.metrics), record_count=len(records),
        seed=spec.seed, seed_mixing=seeding.DESCRIPTION, warmup_s=spec.warmup_s,
        duration_s=getattr(backend, "duration_s", None), service=service,
        variant=topo.variant, metrics=tuple(spec.metrics), flagged_runs=tuple(flagged),
        created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(),
    )
    bundle = ProfileBundle(
        manifest=manifest, records=tuple(records),
        profiles=tuple(build_profiles(topo, spec.metrics, records, host, service)),
        topology=topo, configurations=tuple(configs),
    )
    if destination is not None:
        write_bundle(bundle, destination)
        if spec.post_process:
            invoke_post_process(spec.post_process, destination)
    return bundle


def invoke_post_process(hook: str, bundle_dir) -> int:
    """Run ``hook <bundle_dir>`` with CHAINPROF_BUNDLE set; output goes to logs/."""
    bundle_dir = Path(bundle_dir).resolve()
    env = dict(os.environ)
    env[BUNDLE_ENV] = str(bundle_dir)
    logs = bundle_dir / "logs"
    logs.mkdir(exist_ok=True)
    try:
        proc = subprocess.run([hook, str(bundle_dir)], env=env, capture_output=True, text=True)
        code, out, err = proc.returncode, proc.stdout, proc.stderr
    except OSError as exc:
        code, out, err = 127, "", str(exc)
    (logs / "post_process.stdout").write_text(out)
    (logs / "post_process.stderr").write_text(err)
    if code != 0:
        log.warning("post-process hook %s exited with status %d", hook, code)
    return code


# ---------------------------------------------------------------- baseline calibration

CALIBRATION_RATE = 1000.0


def calibration_spec(backend: Optional[BackendConfig] = None, image: str = "chainprof/calibration",
                     seed: int = 0) -> ExperimentSpec:
    """Single trivial node at one core and full CPU time."""
    backend = backend or BackendConfig()
    doc = {
        "name": "calibration",
        "repetitions": 3,
        "seed": seed,
        "topology": {"nodes": [{"id": "calibration", "image": image}]},
        "sweep": {"mode": "explicit", "configurations": [{"calibration": {"cpu_cores": 1, "cpu_time": 1.0}}]},
        "metrics": [{"name": "calibration_rate", "source": "calibration", "file": RESULT_FILE,
                     "key": "throughput", "unit": "ops/s"}],
        "backend": backend.to_dict(),
    }
    if backend.type == "simulated":
        doc["sim_models"] = {"calibration": SimVNFModel(CALIBRATION_RATE, 0.0, 1).to_dict()}
    return experiment_from_document(doc)


def measure_baseline(metrics: Sequence[MetricSpec], host: HostDescriptor,
                     backend: Optional[BackendConfig] = None, image: str = "chainprof/calibration",
                     seed: int = 0) -> BaselineVector:
    """Baseline vector from the host's speed relative to the nominal calibration rate.

    Higher-is-better metrics get the speed factor, lower-is-better ones its
    reciprocal.
    """
    bundle = run_profiling(calibration_spec(backend, image, seed), host=host)
    speed = bundle.profiles[0].table[0]["calibration_rate"].mean / CALIBRATION_RATE
    if not speed > 0:
        raise NonFinite(f"calibration produced a non-positive speed factor {speed}")
    return BaselineVector({m.name: speed if m.higher_is_better else 1.0 / speed for m in metrics},
                          host, "measured")
