"""Execution backends."""
from chainprof.backend.base import Backend, BackendConfig, NodeResult, RunResult, RESULT_MOUNT
from chainprof.backend.simulated import (RESULT_FILE, ChainMetrics, SimulatedBackend, SimVNFModel,
                                         sim_chain_metric, sim_evaluate)


def make_backend(spec, host=None):
    """Instantiate the backend an ExperimentSpec asks for."""
    if spec.backend.type == "simulated":
        return SimulatedBackend(spec.sim_models)
    from chainprof.backend.container import ContainerBackend
    from chainprof.host import detect_host

    images = {n.id: n.image for n in spec.topology.nodes}
    images.update({p.id: p.image for p in spec.topology.probes})
    return ContainerBackend(spec.backend, host or detect_host(), images)


__all__ = [
    "Backend", "BackendConfig", "NodeResult", "RunResult", "RESULT_MOUNT", "RESULT_FILE",
    "ChainMetrics", "SimulatedBackend", "SimVNFModel", "sim_chain_metric", "sim_evaluate",
    "make_backend",
]
