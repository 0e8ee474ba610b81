"""Execution backend contract shared by the simulated and container backends."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

from chainprof.errors import ValidationError
from chainprof.model import ResourceConfiguration, TopologyDescriptor

BACKEND_TYPES = ("simulated", "container")
RESULT_MOUNT = "/profiling/out"


@dataclass(frozen=True)
class BackendConfig:
    type: str = "simulated"
    endpoint: Optional[str] = None
    volume_root: Optional[str] = None
    block_device: str = "/dev/sda"
    duration_s: Optional[float] = None
    timeout_s: float = 600.0

    def __post_init__(self):
        if self.type not in BACKEND_TYPES:
            raise ValidationError(f"backend.type must be one of {', '.join(BACKEND_TYPES)}")
        if self.type == "container" and not self.endpoint:
            raise ValidationError("backend.endpoint is required for the container backend")
        if self.type == "simulated" and self.endpoint:
            raise ValidationError("backend.endpoint is only valid for the container backend")

    def to_dict(self):
        d = {"type": self.type}
        for key in ("endpoint", "volume_root", "duration_s"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.block_device != "/dev/sda":
            d["block_device"] = self.block_device
        if self.timeout_s != 600.0:
            d["timeout_s"] = self.timeout_s
        return d


@dataclass
class NodeResult:
    """Result documents of one node, keyed by path relative to its result volume."""

    documents: Dict[str, Mapping[str, object]] = field(default_factory=dict)
    log: str = ""
    failure: Optional[str] = None


@dataclass
class RunResult:
    nodes: Dict[str, NodeResult] = field(default_factory=dict)


class Backend:
    """Deploy, limit, run, collect and tear down one configuration at a time.

    Subclasses implement ``execute_run``; ``open``/``close`` bracket a
    whole campaign and ``close`` must release everything still held.
    """

    concurrency_safe = False
    duration_s: Optional[float] = None

    def open(self):
        pass

    def close(self):
        pass

    def __enter__(self):
        self.open()
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def execute_run(self, topo: TopologyDescriptor, config: ResourceConfiguration,
                    repetition: int, rng_seed: int) -> RunResult:
        raise NotImplementedError
