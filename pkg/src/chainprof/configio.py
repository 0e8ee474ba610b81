"""Experiment spec parsing and profile-bundle serialization.

Specs, manifests and profiles are JSON documents; measurement records are a
flat CSV file with one row per record. Values in the CSV are rendered with
9 significant digits, which makes the records file byte-deterministic.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import jsonschema

from chainprof.backend.base import BackendConfig
from chainprof.backend.simulated import SimVNFModel
from chainprof.errors import BundleIntegrityError, SchemaError, SpecSyntaxError, ValidationError
from chainprof.model import (AggregatedMetric, ConfigurationSpace, HostDescriptor, LinkSpec,
                             MeasurementRecord, MetricSpec, PerformanceProfile,
                             ResourceConfiguration, ResourceLimits, TopologyDescriptor,
                             validate_space, validate_topology)

DEFAULT_REPETITIONS = 3
RECORDS_HEADER = ("config_index", "repetition", "node", "metric", "value", "unit")
CPU_TIME_INTERPRETATION = (
    "cpu_time is a fraction of total machine CPU time in (0,1]; container backend applies "
    "CFS quota = cpu_time * 100ms per 100ms period"
)


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("chainprof").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def check_schema(doc, name: str):
    """Raise SchemaError for the most relevant violation of schema ``name``."""
    validator = jsonschema.Draft202012Validator(load_schema(name))
    errors = list(validator.iter_errors(doc))
    if not errors:
        return
    best = jsonschema.exceptions.best_match(errors)
    path = list(best.absolute_path)
    if best.validator == "required":
        missing = [k for k in best.validator_value if k not in best.instance]
        path = path + missing[:1]
        message = f"required field {missing[0]!r} is missing"
    elif best.validator == "additionalProperties" and best.validator_value is False:
        extra = sorted(set(best.instance) - set(best.schema.get("properties", {})))
        path = path + extra[:1]
        message = f"unknown key {extra[0]!r}"
    else:
        message = best.message
    raise SchemaError(message, _pointer(path))


def canonical_json(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def digest(doc) -> str:
    return hashlib.sha256(canonical_json(doc)).hexdigest()


# ---------------------------------------------------------------- experiment spec

@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    topology: TopologyDescriptor
    sweep: ConfigurationSpace
    metrics: Tuple[MetricSpec, ...]
    backend: BackendConfig
    repetitions: int = DEFAULT_REPETITIONS
    seed: int = 0
    sim_models: Optional[Mapping[str, SimVNFModel]] = None
    post_process: Optional[str] = None
    warmup_s: float = 0.0
    host: Optional[HostDescriptor] = None
    service: Optional[str] = None
    document: Mapping = field(default_factory=dict, compare=False, repr=False)

    @property
    def digest(self) -> str:
        return digest(self.document)

    def metric(self, name: str) -> MetricSpec:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    def with_overrides(self, seed=None, backend=None) -> "ExperimentSpec":
        doc = json.loads(json.dumps(self.document))
        if seed is not None:
            doc["seed"] = seed
        if backend is not None:
            doc["backend"] = backend.to_dict()
            if backend.type != "simulated":
                doc.pop("sim_models", None)
        return experiment_from_document(doc)


def parse_experiment(text: str) -> ExperimentSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    return experiment_from_document(doc)


def load_experiment(path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_experiment(fh.read())


def experiment_from_document(doc) -> ExperimentSpec:
    check_schema(doc, "experiment")
    topo = TopologyDescriptor.from_dict(doc["topology"])
    validate_topology(topo).raise_for_errors()

    sweep_doc = doc["sweep"]
    if sweep_doc["mode"] == "cartesian":
        space = ConfigurationSpace("cartesian", dimensions={
            node: {dim: tuple(vals) for dim, vals in dims.items()}
            for node, dims in sweep_doc["dimensions"].items()})
    else:
        space = ConfigurationSpace("explicit", explicit_list=tuple(
            {node: ResourceLimits(**lim) for node, lim in entry.items()}
            for entry in sweep_doc["configurations"]))
    host = HostDescriptor.from_dict(doc["host"]) if "host" in doc else None
    backend = BackendConfig(**doc["backend"])
    validate_space(space, topo, host, real_executor=backend.type == "container").raise_for_errors()

    metrics = tuple(MetricSpec.from_dict(m) for m in doc["metrics"])
    issues = []
    names = set()
    endpoints = set(topo.endpoint_ids)
    for i, m in enumerate(metrics):
        if m.name in names:
            issues.append(f"/metrics/{i}/name: duplicate metric name {m.name!r}")
        names.add(m.name)
        if m.source not in endpoints:
            issues.append(f"/metrics/{i}/source: unknown node {m.source!r}")

    sim_models = None
    if backend.type == "simulated":
        raw = doc.get("sim_models")
        if raw is None:
            issues.append("/sim_models: required for the simulated backend")
        else:
            for node in topo.node_ids:
                if node not in raw:
                    issues.append(f"/sim_models/{node}: missing model for node")
            for node in raw:
                if node not in topo.node_ids:
                    issues.append(f"/sim_models/{node}: not a VNF node")
            sim_models = {n: SimVNFModel.from_dict(v) for n, v in raw.items()}
    elif "sim_models" in doc:
        issues.append("/sim_models: only valid for the simulated backend")
    if issues:
        raise ValidationError(issues)

    return ExperimentSpec(
        name=doc["name"], topology=topo, sweep=space, metrics=metrics, backend=backend,
        repetitions=doc.get("repetitions", DEFAULT_REPETITIONS), seed=doc.get("seed", 0),
        sim_models=sim_models, post_process=doc.get("post_process"),
        warmup_s=float(doc.get("warmup_s", 0.0)), host=host, service=doc.get("service"),
        document=doc,
    )


# ---------------------------------------------------------------- bundle

@dataclass(frozen=True)
class FlaggedRun:
    config_index: int
    repetition: int
    reason: str
    metrics_skipped: int

    def to_dict(self):
        return {"config_index": self.config_index, "repetition": self.repetition,
                "reason": self.reason, "metrics_skipped": self.metrics_skipped}


@dataclass(frozen=True)
class Manifest:
    name: str
    spec_digest: str
    host: HostDescriptor
    config_count: int
    repetitions: int
    metric_count: int
    record_count: int
    cpu_time_interpretation: str = CPU_TIME_INTERPRETATION
    seed: int = 0
    seed_mixing: str = ""
    warmup_s: float = 0.0
    duration_s: Optional[float] = None
    service: str = ""
    variant: Optional[str] = None
    metrics: Tuple[MetricSpec, ...] = ()
    flagged_runs: Tuple[FlaggedRun, ...] = ()
    created_at: str = field(default="", compare=False)

    def to_dict(self):
        return {
            "name": self.name, "spec_digest": self.spec_digest, "host": self.host.to_dict(),
            "config_count": self.config_count, "repetitions": self.repetitions,
            "metric_count": self.metric_count, "record_count": self.record_count,
            "cpu_time_interpretation": self.cpu_time_interpretation, "seed": self.seed,
            "seed_mixing": self.seed_mixing, "warmup_s": self.warmup_s,
            "duration_s": self.duration_s, "service": self.service, "variant": self.variant,
            "metrics": [m.to_dict() for m in self.metrics],
            "flagged_runs": [f.to_dict() for f in self.flagged_runs],
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            name=d["name"], spec_digest=d["spec_digest"], host=HostDescriptor.from_dict(d["host"]),
            config_count=d["config_count"], repetitions=d["repetitions"],
            metric_count=d["metric_count"], record_count=d["record_count"],
            cpu_time_interpretation=d["cpu_time_interpretation"], seed=d.get("seed", 0),
            seed_mixing=d.get("seed_mixing", ""), warmup_s=d.get("warmup_s", 0.0),
            duration_s=d.get("duration_s"), service=d.get("service", ""),
            variant=d.get("variant"),
            metrics=tuple(MetricSpec.from_dict(m) for m in d.get("metrics", ())),
            flagged_runs=tuple(FlaggedRun(**f) for f in d.get("flagged_runs", ())),
            created_at=d.get("created_at", ""),
        )


@dataclass(frozen=True)
class ProfileBundle:
    manifest: Manifest
    records: Tuple[MeasurementRecord, ...]
    profiles: Tuple[PerformanceProfile, ...]
    topology: TopologyDescriptor
    configurations: Tuple[ResourceConfiguration, ...]
    normalized: Optional[Tuple[PerformanceProfile, ...]] = None
    baseline: Optional[object] = None

    def profile(self, scope: str, subject: Optional[str] = None) -> PerformanceProfile:
        for p in self.profiles:
            if p.scope == scope and (subject is None or p.subject == subject):
                return p
        raise KeyError((scope, subject))

    def configuration(self, index: int) -> ResourceConfiguration:
        return self.configurations[index]


def profile_filename(p: PerformanceProfile) -> str:
    if p.scope == "NSP":
        return "nsp.json"
    return f"{p.scope.lower()}-{p.subject}.json"


def profile_to_dict(p: PerformanceProfile, normalized: bool = False) -> dict:
    d = {
        "scope": p.scope, "subject": p.subject, "host": p.host.to_dict(),
        "metrics": {name: p.metrics[name].to_dict() for name in sorted(p.metrics)},
        "table": [{"config_index": ci,
                   "metrics": {m: agg.to_dict() for m, agg in sorted(row.items())}}
                  for ci, row in sorted(p.table.items())],
    }
    if p.links:
        d["links"] = [lk.to_dict() for lk in p.links]
    if normalized:
        d["normalized"] = True
    return d


def profile_from_dict(d: dict) -> PerformanceProfile:
    check_schema(d, "profile")
    return PerformanceProfile(
        scope=d["scope"], subject=d["subject"],
        table={row["config_index"]: {m: AggregatedMetric.from_dict(a) for m, a in row["metrics"].items()}
               for row in d["table"]},
        host=HostDescriptor.from_dict(d["host"]),
        metrics={n: MetricSpec.from_dict(m) for n, m in d["metrics"].items()},
        links=tuple(LinkSpec(lk["from"], lk["to"], float(lk.get("delay_ms", 0.0)), lk.get("bw_mbps"))
                    for lk in d.get("links", ())),
    )


def render_records(records: Sequence[MeasurementRecord]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORDS_HEADER)
    for r in sorted(records, key=lambda r: r.key):
        writer.writerow((r.config_index, r.repetition, r.node, r.metric, format(r.value, ".9g"), r.unit))
    return buf.getvalue().encode("utf-8")


def parse_records(data: bytes) -> List[MeasurementRecord]:
    reader = csv.reader(io.StringIO(data.decode("utf-8")))
    header = next(reader, None)
    if tuple(header or ()) != RECORDS_HEADER:
        raise BundleIntegrityError(f"records header mismatch: {header}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(RECORDS_HEADER):
            raise BundleIntegrityError(f"records line {lineno}: expected 6 fields, got {len(row)}")
        try:
            value = float(row[4])
            ci, rep = int(row[0]), int(row[1])
        except ValueError as exc:
            raise BundleIntegrityError(f"records line {lineno}: {exc}") from None
        if not math.isfinite(value):
            raise BundleIntegrityError(f"records line {lineno}: non-finite value {row[4]!r}")
        out.append(MeasurementRecord(ci, rep, row[2], row[3], value, row[5]))
    return out


def check_bundle(bundle: ProfileBundle):
    m = bundle.manifest
    problems = []
    if m.record_count != len(bundle.records):
        problems.append(f"manifest record_count {m.record_count} != {len(bundle.records)} records")
    if m.config_count != len(bundle.configurations):
        problems.append(f"manifest config_count {m.config_count} != {len(bundle.configurations)}")
    if m.metrics and m.metric_count != len(m.metrics):
        problems.append(f"manifest metric_count {m.metric_count} != {len(m.metrics)} metrics")
    expected = m.config_count * m.repetitions * m.metric_count - sum(f.metrics_skipped for f in m.flagged_runs)
    if expected != len(bundle.records):
        problems.append(f"expected {expected} records from counts, found {len(bundle.records)}")
    keys = set()
    for r in bundle.records:
        if r.key in keys:
            problems.append(f"duplicate record {r.key}")
            break
        keys.add(r.key)
        if not 0 <= r.config_index < m.config_count:
            problems.append(f"record references unknown configuration {r.config_index}")
            break
    for p in bundle.profiles + (bundle.normalized or ()):
        bad = [ci for ci in p.table if not 0 <= ci < m.config_count]
        if bad:
            problems.append(f"{p.scope} {p.subject}: unknown configuration indices {bad}")
    if problems:
        raise BundleIntegrityError("; ".join(problems))


def _dump(path: Path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_bundle(bundle: ProfileBundle, destination) -> str:
    """Write ``bundle`` under ``destination``; returns the manifest's sha256."""
    check_bundle(bundle)
    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)
    records = render_records(bundle.records)
    (dest / "records.csv").write_bytes(records)
    _dump(dest / "topology.json", bundle.topology.to_dict())
    _dump(dest / "configurations.json", [c.to_dict() for c in bundle.configurations])
    for p in bundle.profiles:
        _dump(dest / "profiles" / profile_filename(p), profile_to_dict(p))
    if bundle.normalized is not None:
        write_normalized(dest, bundle.normalized, bundle.baseline)
    manifest = bundle.manifest.to_dict()
    manifest["created_at"] = bundle.manifest.created_at or _dt.datetime.now(_dt.timezone.utc).isoformat()
    manifest["records_sha256"] = hashlib.sha256(records).hexdigest()
    data = (json.dumps(manifest, indent=2) + "\n").encode("utf-8")
    (dest / "manifest.json").write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def write_normalized(dest, profiles, baseline=None):
    dest = Path(dest)
    for p in profiles:
        _dump(dest / "normalized" / profile_filename(p), profile_to_dict(p, normalized=True))
    if baseline is not None:
        _dump(dest / "normalized" / "baseline.json", baseline.to_dict())


def _read_json(path: Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise BundleIntegrityError(f"missing bundle file {path}") from None
    except json.JSONDecodeError as exc:
        raise BundleIntegrityError(f"{path}: malformed JSON ({exc})") from None


def _read_profiles(directory: Path) -> Tuple[PerformanceProfile, ...]:
    out = []
    for f in sorted(directory.glob("*.json")):
        if f.name == "baseline.json":
            continue
        try:
            out.append(profile_from_dict(_read_json(f)))
        except SchemaError as exc:
            raise BundleIntegrityError(f"{f}: {exc}") from None
    return tuple(sorted(out, key=_profile_order))


def _profile_order(p: PerformanceProfile):
    return ("NSP", "VNFP", "TP").index(p.scope), p.subject


def load_bundle(source) -> ProfileBundle:
    from chainprof.normalize import BaselineVector

    src = Path(source)
    if not src.is_dir():
        raise BundleIntegrityError(f"bundle directory {src} does not exist")
    manifest_doc = _read_json(src / "manifest.json")
    try:
        check_schema(manifest_doc, "manifest")
    except SchemaError as exc:
        raise BundleIntegrityError(f"manifest: {exc}") from None
    try:
        data = (src / "records.csv").read_bytes()
    except FileNotFoundError:
        raise BundleIntegrityError(f"missing bundle file {src / 'records.csv'}") from None
    expected_digest = manifest_doc.get("records_sha256")
    if expected_digest and hashlib.sha256(data).hexdigest() != expected_digest:
        raise BundleIntegrityError("records digest mismatch")
    records = parse_records(data)
    normalized = baseline = None
    if (src / "normalized").is_dir():
        normalized = _read_profiles(src / "normalized")
        if (src / "normalized" / "baseline.json").exists():
            baseline = BaselineVector.from_dict(_read_json(src / "normalized" / "baseline.json"))
    bundle = ProfileBundle(
        manifest=Manifest.from_dict(manifest_doc),
        records=tuple(sorted(records, key=lambda r: r.key)),
        profiles=_read_profiles(src / "profiles"),
        topology=TopologyDescriptor.from_dict(_read_json(src / "topology.json")),
        configurations=tuple(ResourceConfiguration.from_dict(c)
                             for c in _read_json(src / "configurations.json")),
        normalized=normalized,
        baseline=baseline,
    )
    check_bundle(bundle)
    return bundle


def writable_directory(path) -> bool:
    """True when ``path`` exists or can be created and accepts new files."""
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError:
        return False
    return os.access(p, os.W_OK | os.X_OK)
