import copy
import json
from importlib import resources

import pytest

from chainprof.configio import experiment_from_document
from chainprof.model import HostDescriptor

HOST = HostDescriptor("test-cpu", 4, 8192)


def demo_path(name):
    return str(resources.files("chainprof").joinpath("demos", name))


def demo_doc(name):
    with open(demo_path(name)) as fh:
        return json.load(fh)


def single_node_doc(model, dimension, grid, seed=0, repetitions=3, noise=0.0, metric="m"):
    """Whitebox one-node spec sweeping one dimension."""
    return {
        "name": "single", "repetitions": repetitions, "seed": seed,
        "topology": {"nodes": [{"id": "v", "image": "img/v"}]},
        "sweep": {"mode": "cartesian", "dimensions": {"v": {dimension: list(grid)}}},
        "metrics": [{"name": metric, "source": "v", "file": "result.json", "key": "throughput"}],
        "backend": {"type": "simulated"},
        "sim_models": {"v": {**model, "noise_std": noise}},
    }


@pytest.fixture
def host():
    return HOST


@pytest.fixture
def chain_doc():
    return demo_doc("chain.json")


@pytest.fixture
def chain_spec(chain_doc):
    return experiment_from_document(copy.deepcopy(chain_doc))


@pytest.fixture
def whitebox_spec():
    return experiment_from_document(demo_doc("whitebox.json"))


def chain_marginal_doc(models, dimension, grid, seed=0, repetitions=3, noise=0.0):
    """Linear chain s -> nodes -> t with one-node-at-a-time sweeps of ``dimension``.

    Every node sits at grid[0] in the reference configuration.
    """
    from chainprof.model import ResourceLimits, marginal_space

    ids = sorted(models)
    ends = ["s"] + ids + ["t"]
    reference = {n: ResourceLimits(**{dimension: grid[0]}) for n in ids}
    space = marginal_space(reference, dimension, {n: list(grid) for n in ids})
    return {
        "name": "chain-marginal", "repetitions": repetitions, "seed": seed,
        "topology": {
            "nodes": [{"id": n, "image": f"img/{n}"} for n in ids],
            "probes": [{"id": "s", "role": "source", "image": "img/src"},
                       {"id": "t", "role": "sink", "image": "img/sink"}],
            "links": [{"from": a, "to": b} for a, b in zip(ends, ends[1:])],
        },
        "sweep": space.to_dict(),
        "metrics": [{"name": "e2e", "source": "t", "file": "result.json", "key": "throughput"}],
        "backend": {"type": "simulated"},
        "sim_models": {n: {**m, "noise_std": noise} for n, m in models.items()},
    }
