"""Container-engine backend speaking the Docker-compatible remote HTTP API.

Limits map onto kernel resource controls as follows:

* cpu_time     -> CFS bandwidth quota, ``cpu_time * 100 ms`` per 100 ms period
* cpu_cores    -> cpuset pinning on the lowest free cores (probe cores reserved first)
* mem_max      -> memory limit; mem_swap_max adds to the memory+swap limit
* block_io_bw  -> identical read and write throttles on the primary block device

Each endpoint gets a shared result volume mounted at ``/profiling/out``;
every ``*.json`` file found there after the run becomes a result document.
Runs are strictly serial.
"""
from __future__ import annotations

import json
import logging
import os
import time
from pathlib import Path
from typing import Dict, List, Mapping, Optional

import requests

from chainprof.backend.base import RESULT_MOUNT, Backend, BackendConfig, NodeResult, RunResult
from chainprof.errors import CollectionTimeout, DeployError, LimitError, ValidationError
from chainprof.model import (HostDescriptor, LinkSpec, ResourceConfiguration, ResourceLimits,
                             TopologyDescriptor, validate_limits)

log = logging.getLogger(__name__)

CPU_PERIOD_US = 100_000
MIB = 1024 * 1024


def allocate_cores(topo: TopologyDescriptor, config: ResourceConfiguration,
                   physical_cores: int) -> Dict[str, Optional[List[int]]]:
    """Core sets per endpoint; None means "all non-reserved cores".

    Probe ``isolated_cores`` are reserved first. VNFs with a cpu_cores limit
    then take the lowest-numbered free cores in declaration order.
    """
    out: Dict[str, Optional[List[int]]] = {}
    reserved: Dict[int, str] = {}
    for probe in topo.probes:
        if probe.isolated_cores is None:
            continue
        for core in probe.isolated_cores:
            if not 0 <= core < physical_cores:
                raise LimitError(f"probe {probe.id}: core {core} does not exist on this host")
            if core in reserved:
                raise LimitError(f"probe {probe.id}: core {core} already isolated for {reserved[core]}")
            reserved[core] = probe.id
        out[probe.id] = sorted(probe.isolated_cores)
    free = [c for c in range(physical_cores) if c not in reserved]
    unpinned = []
    for node in topo.nodes:
        wanted = config.limits_for(node.id).cpu_cores
        if wanted is None:
            unpinned.append(node.id)
            continue
        if wanted > len(free):
            if reserved and wanted <= len(free) + len(reserved):
                probes = sorted(set(reserved.values()))
                raise LimitError(f"{node.id}: {wanted} cores would overlap isolated cores of "
                                 f"probe(s) {', '.join(probes)}")
            raise LimitError(f"{node.id}: {wanted} cores requested, {len(free)} free")
        out[node.id], free = free[:wanted], free[wanted:]
    for node_id in unpinned:
        if not free:
            raise LimitError(f"{node_id}: no unreserved cores left")
        out[node_id] = list(free)
    for probe in topo.probes:
        out.setdefault(probe.id, None)
    return out


def host_config(limits: ResourceLimits, cpuset: Optional[List[int]], block_device: str,
                binds: List[str]) -> dict:
    """HostConfig body for container creation."""
    cfg: dict = {"Binds": list(binds)}
    if cpuset is not None:
        cfg["CpusetCpus"] = ",".join(str(c) for c in cpuset)
    if limits.cpu_time is not None:
        cfg["CpuPeriod"] = CPU_PERIOD_US
        cfg["CpuQuota"] = int(round(limits.cpu_time * CPU_PERIOD_US))
    if limits.mem_max is not None:
        mem = int(round(limits.mem_max * MIB))
        cfg["Memory"] = mem
        if limits.mem_swap_max is not None:
            cfg["MemorySwap"] = mem + int(round(limits.mem_swap_max * MIB))
    elif limits.mem_swap_max is not None:
        raise LimitError("mem_swap_max requires mem_max on the container backend")
    if limits.block_io_bw is not None:
        rate = int(round(limits.block_io_bw * MIB))
        cfg["BlkioDeviceReadBps"] = [{"Path": block_device, "Rate": rate}]
        cfg["BlkioDeviceWriteBps"] = [{"Path": block_device, "Rate": rate}]
    return cfg


def shaping_command(link: LinkSpec, interface: str = "eth0") -> Optional[List[str]]:
    """netem command applying a link's delay and rate on the sender side."""
    if not link.delay_ms and link.bw_mbps is None:
        return None
    cmd = ["tc", "qdisc", "replace", "dev", interface, "root", "netem"]
    if link.delay_ms:
        cmd += ["delay", f"{link.delay_ms:g}ms"]
    if link.bw_mbps is not None:
        cmd += ["rate", f"{link.bw_mbps:g}mbit"]
    return cmd


def read_result_volume(path: Path) -> Dict[str, dict]:
    docs = {}
    if not path.is_dir():
        return docs
    for f in sorted(path.rglob("*.json")):
        rel = f.relative_to(path).as_posix()
        with open(f) as fh:
            docs[rel] = json.load(fh)
    return docs


class ContainerBackend(Backend):
    concurrency_safe = False

    def __init__(self, config: BackendConfig, host: HostDescriptor,
                 images: Mapping[str, str], session=None):
        if config.type != "container":
            raise ValidationError("ContainerBackend needs a container BackendConfig")
        self.config = config
        self.host = host
        self.images = dict(images)
        self.session = session or requests.Session()
        self.base = config.endpoint.rstrip("/")
        self.volume_root = Path(config.volume_root or os.path.join(os.getcwd(), ".chainprof-volumes"))
        self.duration_s = config.duration_s
        self.live: List[str] = []
        self.networks: List[str] = []

    # -- HTTP helpers

    def _call(self, method, path, node=None, ok=(200, 201, 204, 304), **kw):
        try:
            resp = self.session.request(method, self.base + path, timeout=kw.pop("timeout", 30), **kw)
        except requests.RequestException as exc:
            raise DeployError(f"container engine unreachable at {self.base}: {exc}", node) from exc
        if resp.status_code not in ok:
            raise DeployError(f"{method} {path} -> HTTP {resp.status_code}: {resp.text[:200]}", node)
        return resp

    def open(self):
        self._call("GET", "/_ping", timeout=5)

    def close(self):
        self._cleanup()

    def _cleanup(self):
        while self.live:
            cid = self.live.pop()
            for method, path in (("POST", f"/containers/{cid}/stop"),
                                 ("DELETE", f"/containers/{cid}?force=true&v=true")):
                try:
                    self._call(method, path, ok=(200, 204, 304, 404))
                except DeployError as exc:
                    log.warning("teardown of %s failed: %s", cid, exc)
        while self.networks:
            net = self.networks.pop()
            try:
                self._call("DELETE", f"/networks/{net}", ok=(200, 204, 404))
            except DeployError as exc:
                log.warning("removing network %s failed: %s", net, exc)

    # -- run cycle

    def execute_run(self, topo: TopologyDescriptor, config: ResourceConfiguration,
                    repetition: int, rng_seed: int) -> RunResult:
        for node in topo.node_ids:
            report = validate_limits(config.limits_for(node), self.host, real_executor=True, node=node)
            if not report.ok:
                raise LimitError("; ".join(report.errors))
        cores = allocate_cores(topo, config, self.host.physical_cores)
        tag = f"chainprof-c{config.index}-r{repetition}"
        run_dir = self.volume_root / tag
        ids: Dict[str, str] = {}
        try:
            net = self._call("POST", "/networks/create", json={"Name": tag, "CheckDuplicate": True}).json()
            self.networks.append(net.get("Id", tag))
            # probes first so their isolated cores are in place before VNFs start
            order = [p.id for p in topo.probes] + topo.node_ids
            for ep in order:
                out_dir = run_dir / ep
                out_dir.mkdir(parents=True, exist_ok=True)
                limits = config.limits_for(ep) if ep in topo.node_ids else ResourceLimits()
                body = {
                    "Image": self.images[ep],
                    "Env": [f"CHAINPROF_SEED={rng_seed}", f"CHAINPROF_REPETITION={repetition}"]
                           + ([f"CHAINPROF_DURATION_S={self.duration_s:g}"] if self.duration_s else []),
                    "Labels": {"chainprof.run": tag, "chainprof.endpoint": ep},
                    "HostConfig": {**host_config(limits, cores.get(ep), self.config.block_device,
                                                 [f"{out_dir}:{RESULT_MOUNT}"]),
                                   "NetworkMode": tag},
                }
                created = self._call("POST", f"/containers/create?name={tag}-{ep}", node=ep, json=body).json()
                ids[ep] = created["Id"]
                self.live.append(created["Id"])
            for ep in order:
                self._call("POST", f"/containers/{ids[ep]}/start", node=ep)
            for link in topo.links:
                cmd = shaping_command(link)
                if cmd is not None:
                    self._exec(ids[link.src], cmd, link.src)
            waited = [p.id for p in topo.probes if p.role == "sink"] or topo.node_ids
            deadline = time.monotonic() + self.config.timeout_s
            for ep in waited:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise CollectionTimeout(f"timed out waiting for {ep}")
                try:
                    self.session.request("POST", f"{self.base}/containers/{ids[ep]}/wait",
                                         timeout=remaining)
                except requests.Timeout as exc:
                    raise CollectionTimeout(f"timed out waiting for {ep}") from exc
                except requests.RequestException as exc:
                    raise DeployError(str(exc), ep) from exc
            result = RunResult()
            for ep in order:
                logs = self._call("GET", f"/containers/{ids[ep]}/logs?stdout=1&stderr=1", node=ep)
                docs = read_result_volume(run_dir / ep)
                result.nodes[ep] = NodeResult(docs, log=logs.text)
            return result
        finally:
            self._cleanup()

    def _exec(self, cid, cmd, node):
        created = self._call("POST", f"/containers/{cid}/exec", node=node,
                             json={"Cmd": cmd, "AttachStdout": True, "AttachStderr": True}).json()
        self._call("POST", f"/exec/{created['Id']}/start", node=node, json={"Detach": False})

