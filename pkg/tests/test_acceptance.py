"""Acceptance suite: one PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are written
straight to the terminal so they survive output capture.
"""
import copy
import json
import math
import random
import time

import jsonschema
import mpmath
import pytest

from chainprof.configio import experiment_from_document, load_bundle, load_schema, render_records, write_bundle
from chainprof.engine import run_profiling
from chainprof.errors import Unreachable
from chainprof.model import (ConfigurationSpace, NodeSpec, TopologyDescriptor, configuration_count,
                             enumerate_configurations)
from chainprof.normalize import geometric_mean_score
from chainprof.predict import (analyze_bundle, chain_sensitivity, fit_scaling_model,
                               marginal_points, min_resource_for_sla)
from chainprof.stats import aggregate, pooled_mean_variance
from conftest import HOST, chain_marginal_doc, demo_doc, single_node_doc

mpmath.mp.dps = 40


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


# ---------------------------------------------------------------- 1 enumeration

def random_space(rng):
    n_nodes = rng.randint(1, 4)
    nodes = [f"n{i}" for i in range(n_nodes)]
    axes = [(n, d) for n in nodes for d in ("cpu_cores", "cpu_time", "mem_max")]
    chosen = rng.sample(axes, rng.randint(1, min(3, len(axes))))
    dims = {}
    for node, dim in chosen:
        k = rng.randint(1, 4)
        if dim == "cpu_cores":
            vals = rng.sample(range(1, 9), k)
        elif dim == "cpu_time":
            vals = rng.sample([0.1, 0.2, 0.25, 0.5, 0.75, 1.0], k)
        else:
            vals = rng.sample([128, 256, 512, 1024, 2048], k)
        dims.setdefault(node, {})[dim] = tuple(vals)
    topo = TopologyDescriptor(tuple(NodeSpec(n, "img") for n in nodes))
    return topo, ConfigurationSpace("cartesian", dimensions=dims)


def test_1_enumeration_exactness(report):
    rng = random.Random(1)
    spaces = [random_space(rng) for _ in range(100)]
    start = time.perf_counter()
    ok = True
    for topo, space in spaces:
        first = enumerate_configurations(space, topo)
        again = enumerate_configurations(space, topo)
        analytic = math.prod(len(v) for dims in space.dimensions.values() for v in dims.values())
        ok &= len(first) == analytic == configuration_count(space)
        ok &= first == again
        ok &= [c.index for c in first] == list(range(analytic))
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1.0
    assert report(1, ok, f"100 random spaces, counts and order exact, {elapsed:.3f}s (< 1s)")


# ---------------------------------------------------------------- 2 determinism

@pytest.mark.parametrize("demo", ["whitebox.json", "chain.json"])
def test_2_determinism(report, tmp_path, demo):
    spec = experiment_from_document(demo_doc(demo))
    times, data = [], []
    for name in ("a", "b"):
        start = time.perf_counter()
        run_profiling(spec, destination=tmp_path / name)
        times.append(time.perf_counter() - start)
        data.append((tmp_path / name / "records.csv").read_bytes())
    ok = data[0] == data[1] and max(times) < 10.0
    assert report(2, ok, f"{demo}: records byte-identical={data[0] == data[1]}, "
                         f"slowest run {max(times):.2f}s (< 10s)")


# ---------------------------------------------------------------- 3 statistics

def mp_t_quantile(df):
    """Root of the regularized incomplete beta form of the t CDF."""
    df = mpmath.mpf(df)

    def cdf(t):
        x = df / (df + t * t)
        tail = mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, x, regularized=True) / 2
        return 1 - tail if t > 0 else tail

    return mpmath.findroot(lambda t: cdf(t) - mpmath.mpf("0.975"), 2.0)


def oracle(samples):
    xs = [mpmath.mpf(s) for s in samples]
    n = len(xs)
    mean = mpmath.fsum(xs) / n
    std = mpmath.sqrt(mpmath.fsum((x - mean) ** 2 for x in xs) / (n - 1))
    half = mp_t_quantile(n - 1) * std / mpmath.sqrt(n)
    return float(mean), float(std), float(mean - half), float(mean + half)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def test_3_statistics_oracle(report):
    rng = random.Random(3)
    worst = 0.0
    for _ in range(500):
        n = rng.randint(2, 30)
        loc, scale = rng.uniform(-1e3, 1e3), rng.uniform(1e-3, 1e3)
        xs = [rng.gauss(loc, scale) for _ in range(n)]
        a = aggregate(xs)
        m, s, lo, hi = oracle(xs)
        worst = max(worst, rel(a.mean, m), rel(a.std, s), rel(a.ci95_low, lo), rel(a.ci95_high, hi))
    zero = aggregate([5.0, 5.0, 5.0])
    zero_ok = zero.ci95_high - zero.ci95_low == 0.0 and zero.std == 0.0
    ok = worst <= 1e-6 and zero_ok
    assert report(3, ok, f"500 random samples, worst relative error {worst:.2e} (<= 1e-6); "
                         f"zero-variance width exactly 0: {zero_ok}")


def test_3_statistics_stated_half_width(report):
    # Target 2.4843 +/- 1e-4 checked as given. The exact value t(0.975,2)/sqrt(3) is
    # 2.48413771..., 1.6e-4 away from 2.4843, so this check cannot pass.
    half = aggregate([1.0, 2.0, 3.0]).half_width
    exact = float(mp_t_quantile(2) / mpmath.sqrt(3))
    ok = abs(half - 2.4843) <= 1e-4
    assert report(3, ok, f"{{1,2,3}} half-width {half:.8f} vs stated 2.4843 +/- 1e-4 "
                         f"(independent reference gives {exact:.8f})")


# ---------------------------------------------------------------- 4 normalizer

def test_4_normalizer_invariance(report):
    rng = random.Random(4)
    worst = 0.0
    for _ in range(1000):
        k = rng.randint(1, 12)
        x = [rng.lognormvariate(0, 3) for _ in range(k)]
        y = [rng.lognormvariate(0, 3) for _ in range(k)]
        a = [rng.lognormvariate(0, 3) for _ in range(k)]
        lhs = geometric_mean_score([p / q for p, q in zip(x, a)]) / geometric_mean_score([p / q for p, q in zip(y, a)])
        rhs = geometric_mean_score([p / q for p, q in zip(x, y)])
        worst = max(worst, rel(lhs, rhs))
    ranking_ok = 0
    for _ in range(1000):
        k = rng.randint(1, 12)
        profiles = [[rng.lognormvariate(0, 2) for _ in range(k)] for _ in range(4)]
        b1 = [rng.lognormvariate(0, 2) for _ in range(k)]
        b2 = [rng.lognormvariate(0, 2) for _ in range(k)]
        rank = lambda b: sorted(range(4), key=lambda i: geometric_mean_score(
            [v / w for v, w in zip(profiles[i], b)]))
        ranking_ok += rank(b1) == rank(b2)
    ok = worst <= 1e-12 and ranking_ok == 1000
    assert report(4, ok, f"1000 triples, worst relative error {worst:.2e} (<= 1e-12); "
                         f"ranking invariant in {ranking_ok}/1000 trials")


# ---------------------------------------------------------------- 5 behavior classes

CORES = list(range(1, 9))
TIMES = [round(0.1 * i, 1) for i in range(1, 11)]
ANALOGUES = [
    ("db/cores", {"base_rate": 40.0, "cpu_bound": False}, "cpu_cores", CORES, "insensitive", None),
    ("db/time", {"base_rate": 40.0, "cpu_bound": False}, "cpu_time", TIMES, "insensitive", None),
    ("single-thread/cores", {"base_rate": 100.0, "max_threads": 1}, "cpu_cores", CORES, "insensitive", None),
    ("single-thread/time", {"base_rate": 100.0, "max_threads": 1}, "cpu_time", TIMES, "scaling", None),
    ("multithread/cores", {"base_rate": 100.0, "max_threads": 4}, "cpu_cores", CORES, "saturating", 4),
    ("multithread-p95/cores", {"base_rate": 100.0, "max_threads": 4, "parallel_fraction": 0.95},
     "cpu_cores", CORES, "saturating", 4),
    ("nginx/cores", {"base_rate": 100.0, "max_threads": 2}, "cpu_cores", CORES, "saturating", 2),
]


def classify(model, dimension, grid, seed, noise):
    doc = single_node_doc(model, dimension, grid, seed=seed, noise=noise)
    bundle = run_profiling(experiment_from_document(doc), host=HOST)
    pts = marginal_points(bundle.configurations, bundle.profiles[0].table, "m", "v", dimension,
                          bundle.configurations[0])
    return fit_scaling_model([(x, a.mean) for x, a in pts],
                             noise_var=pooled_mean_variance(a for _, a in pts))


def test_5_behavior_classes(report):
    exact_ok = 0
    for name, model, dim, grid, cls, knee in ANALOGUES:
        fit = classify(model, dim, grid, 0, 0.0)
        exact_ok += fit.behavior_class == cls and fit.saturation_point == knee
    noisy_ok, total, per_case = 0, 0, []
    for name, model, dim, grid, cls, knee in ANALOGUES:
        hits = 0
        for seed in range(20):
            fit = classify(model, dim, grid, seed, 0.05)
            hits += fit.behavior_class == cls and fit.saturation_point == knee
        per_case.append(f"{name} {hits}/20")
        noisy_ok += hits
        total += 20
    ok = exact_ok == len(ANALOGUES) and noisy_ok / total >= 0.9
    assert report(5, ok, f"noise-free {exact_ok}/{len(ANALOGUES)} correct; noise 0.05 "
                         f"{noisy_ok}/{total} = {noisy_ok / total:.1%} (>= 90%) [{', '.join(per_case)}]")


# ---------------------------------------------------------------- 6 bottlenecks

def amdahl_capacity(model, dimension, value):
    """Independent capacity oracle for one node at one limit (others default)."""
    if not model.get("cpu_bound", True):
        return model["base_rate"]
    cores, q = (value, 1.0) if dimension == "cpu_cores" else (1, value)
    t = min(cores, model.get("max_threads", 1))
    p = model.get("parallel_fraction", 1.0)
    return model["base_rate"] * q / ((1 - p) + p / t)


def true_binding_node(models, dimension, grid):
    """Brute force: the node whose marginal increase raises the min-rule output."""
    ref = {n: amdahl_capacity(m, dimension, grid[0]) for n, m in models.items()}
    base = min(ref.values())
    raisers = []
    for node, m in models.items():
        outs = [min([amdahl_capacity(m, dimension, v)] + [c for o, c in ref.items() if o != node])
                for v in grid]
        if max(outs) > base:
            raisers.append(node)
    return raisers


def random_chain(rng):
    n = rng.randint(3, 5)
    dimension = rng.choice(["cpu_cores", "cpu_time"])
    grid = [1, 2, 4] if dimension == "cpu_cores" else [0.25, 0.5, 1.0]
    while True:
        models = {}
        for i in range(n):
            if rng.random() < 0.2:
                models[f"n{i}"] = {"base_rate": rng.uniform(10, 1000), "cpu_bound": False}
            else:
                models[f"n{i}"] = {"base_rate": rng.uniform(10, 1000), "max_threads": rng.randint(1, 8),
                                   "parallel_fraction": rng.uniform(0.5, 1.0)}
        caps = sorted(amdahl_capacity(m, dimension, grid[0]) for m in models.values())
        # a clear binding node: at least 10% headroom to the runner-up
        if caps[1] >= 1.1 * caps[0]:
            return models, dimension, grid


def test_6_bottleneck_recovery(report):
    rng = random.Random(6)
    correct = with_binding = 0
    for i in range(50):
        models, dimension, grid = random_chain(rng)
        raisers = true_binding_node(models, dimension, grid)
        assert len(raisers) <= 1
        truth = raisers[0] if raisers else None
        with_binding += truth is not None
        bundle = run_profiling(experiment_from_document(
            chain_marginal_doc(models, dimension, grid, seed=i)), host=HOST)
        result = chain_sensitivity(bundle, "e2e", dimension)
        correct += result.bottleneck == truth
    ok = correct == 50
    assert report(6, ok, f"{correct}/50 random min-rule chains correct "
                         f"({with_binding} with a binding node, {50 - with_binding} with none)")


# ---------------------------------------------------------------- 7 SLA

def test_7_sla_queries(report):
    model = fit_scaling_model([(1, 10), (2, 20), (3, 20), (4, 20)])
    grid = [1, 2, 3, 4]
    answers = []
    for target in (5, 15, 25):
        try:
            answers.append(min_resource_for_sla(model, grid, target))
        except Unreachable:
            answers.append("Unreachable")
    rng = random.Random(7)
    targets = sorted(rng.uniform(0, 30) for _ in range(200))
    allocs = []
    for t in targets:
        try:
            allocs.append(min_resource_for_sla(model, grid, t))
        except Unreachable:
            allocs.append(math.inf)
    monotone = all(a <= b for a, b in zip(allocs, allocs[1:]))
    ok = answers == [1, 2, "Unreachable"] and monotone
    assert report(7, ok, f"targets 5/15/25 -> {answers[0]}/{answers[1]}/{answers[2]}; "
                         f"monotone over 200 targets: {monotone}")


# ---------------------------------------------------------------- 8 end to end

def test_8_end_to_end(report, tmp_path):
    doc = demo_doc("chain.json")
    spec = experiment_from_document(copy.deepcopy(doc))
    start = time.perf_counter()
    bundle = run_profiling(spec, destination=tmp_path / "bundle")
    elapsed = time.perf_counter() - start
    expected = 9 * 3 * len(spec.metrics)
    count_ok = len(bundle.records) == expected == bundle.manifest.record_count
    nodes_ok = len(spec.topology.nodes) == 4 and {p.role for p in spec.topology.probes} >= {"source", "sink"}
    schema = load_schema("profile")
    files = sorted((tmp_path / "bundle" / "profiles").glob("*.json"))
    scopes = set()
    for f in files:
        d = json.loads(f.read_text())
        jsonschema.validate(d, schema)
        scopes.add(d["scope"])
    jsonschema.validate(json.loads((tmp_path / "bundle" / "manifest.json").read_text()), load_schema("manifest"))
    round_trip = load_bundle(tmp_path / "bundle") == bundle
    ok = (count_ok and nodes_ok and scopes == {"NSP", "VNFP", "TP"} and round_trip
          and elapsed < 30.0 and bundle.manifest.config_count == 9)
    assert report(8, ok, f"{len(bundle.records)} records (= 9 x 3 x {len(spec.metrics)}), "
                         f"{len(files)} profile files valid ({'/'.join(sorted(scopes))}), "
                         f"round trip {round_trip}, {elapsed:.2f}s (< 30s)")
