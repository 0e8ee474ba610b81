import math
import random

import pytest
from hypothesis import assume, given, settings, strategies as st

from chainprof.configio import experiment_from_document
from chainprof.engine import run_profiling
from chainprof.errors import FitError, MissingMarginalSweep, Unreachable, ValidationError
from chainprof.predict import (analyze_bundle, chain_sensitivity, elasticity, fit_scaling_model,
                               min_resource_for_sla)
from conftest import HOST, chain_marginal_doc, single_node_doc

PLATEAU = [(1, 10), (2, 20), (3, 20), (4, 20)]


def plateau_oracle(points):
    """Brute-force knee search: for each interior x solve the 2x2 normal equations."""
    xs = sorted({x for x, _ in points})
    best = None
    for k in xs[1:-1]:
        u = [min(x, k) for x, _ in points]
        y = [v for _, v in points]
        n = len(u)
        su, sy = sum(u), sum(y)
        suu = sum(a * a for a in u)
        suy = sum(a * b for a, b in zip(u, y))
        det = n * suu - su * su
        b = (n * suy - su * sy) / det
        a = (sy - b * su) / n
        sse = sum((yy - a - b * uu) ** 2 for uu, yy in zip(u, y))
        if best is None or sse < best[0] - 1e-12:
            best = (sse, k)
    return best


class TestFitExamples:
    def test_constant(self):
        m = fit_scaling_model([(1, 5), (2, 5), (4, 5)])
        assert (m.kind, m.behavior_class) == ("constant", "insensitive")
        assert m.params["a"] == 5

    def test_linear(self):
        m = fit_scaling_model([(1, 10), (2, 20), (4, 40)])
        assert (m.kind, m.behavior_class) == ("linear", "scaling")
        assert m.params["b"] == pytest.approx(10.0, rel=1e-12)

    def test_plateau(self):
        m = fit_scaling_model(PLATEAU)
        assert (m.kind, m.behavior_class, m.saturation_point) == ("plateau", "saturating", 2)
        assert m.sse <= 1e-18
        assert plateau_oracle(PLATEAU) == (pytest.approx(0.0, abs=1e-18), 2)

    def test_nearly_flat_linear_is_insensitive(self):
        m = fit_scaling_model([(1, 100.0), (2, 100.2), (4, 100.6)])
        assert m.kind == "linear" and m.behavior_class == "insensitive"
        assert m.relative_slope < 0.01

    def test_zero_mean_uses_absolute_slope(self):
        m = fit_scaling_model([(1, -1.0), (2, 0.0), (3, 1.0)])
        assert m.kind == "linear" and m.relative_slope is None and m.behavior_class == "scaling"

    def test_too_few_points(self):
        with pytest.raises(FitError):
            fit_scaling_model([(1, 1), (1, 2), (2, 3)])

    def test_unsorted_input_is_sorted(self):
        assert fit_scaling_model(list(reversed(PLATEAU))).saturation_point == 2


grids = st.lists(st.integers(1, 16), min_size=3, max_size=8, unique=True).map(sorted)


class TestFitProperties:
    @settings(max_examples=200, deadline=None)
    @given(grids, st.floats(-100, 100), st.floats(-50, 50), st.data())
    def test_exact_recovery(self, xs, a, b, data):
        kind = data.draw(st.sampled_from(["constant", "linear", "plateau"]))
        if kind == "constant":
            ys = [a] * len(xs)
        elif kind == "linear":
            assume(abs(b) > 1e-3)
            ys = [a + b * x for x in xs]
        else:
            assume(len(xs) >= 4 and abs(b) > 1e-3)
            k = data.draw(st.sampled_from(xs[1:-2]))
            ys = [a + b * min(x, k) for x in xs]
        scale = sum(y * y for y in ys) or 1.0
        m = fit_scaling_model(list(zip(xs, ys)))
        assert m.kind == kind
        assert m.sse <= 1e-18 * max(1.0, scale)
        if kind == "plateau":
            assert m.saturation_point == k

    @settings(max_examples=200, deadline=None)
    @given(grids, st.lists(st.floats(0, 100), min_size=8, max_size=8))
    def test_plateau_matches_brute_force(self, xs, ys):
        pts = list(zip(xs, ys[:len(xs)]))
        assume(len(xs) >= 3)
        from chainprof.kernels import plateau_fit
        _, _, k, sse = plateau_fit([x for x, _ in pts], [y for _, y in pts])
        sse_o, _ = plateau_oracle(pts)
        assert sse == pytest.approx(sse_o, rel=1e-9, abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(grids, st.lists(st.floats(1, 100), min_size=8, max_size=8), st.floats(1e-3, 1e3))
    def test_scale_invariance(self, xs, ys, c):
        pts = list(zip(xs, ys))
        m1 = fit_scaling_model(pts)
        m2 = fit_scaling_model([(x, c * y) for x, y in pts])
        # a relative-slope value sitting on the threshold can flip by rounding
        assume(m1.relative_slope is None or abs(m1.relative_slope - 0.01) > 1e-9)
        # near-ties between candidates can flip by rounding too
        s = sorted(m1.candidates.values())
        assume(all(abs(p - q) > 1e-6 * max(p, q, 1e-300) for p, q in zip(s, s[1:])))
        assert (m1.kind, m1.behavior_class, m1.saturation_point) == (m2.kind, m2.behavior_class, m2.saturation_point)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.95, 1.0), st.integers(2, 7), st.floats(1, 1000))
    def test_knee_equals_max_threads(self, p, mt, rate):
        doc = single_node_doc({"base_rate": rate, "parallel_fraction": p, "max_threads": mt},
                              "cpu_cores", range(1, 9), repetitions=2)
        bundle = run_profiling(experiment_from_document(doc), host=HOST)
        fits = analyze_bundle(bundle).report["fits"]
        vnfp = next(f for f in fits if f["scope"] == "VNFP")
        assert vnfp["kind"] == "plateau" and vnfp["saturation_point"] == mt


class TestSLA:
    def test_examples(self):
        m = fit_scaling_model(PLATEAU)
        grid = [1, 2, 3, 4]
        assert min_resource_for_sla(m, grid, 5) == 1
        assert min_resource_for_sla(m, grid, 15) == 2
        with pytest.raises(Unreachable) as exc:
            min_resource_for_sla(m, grid, 25)
        assert exc.value.best == pytest.approx(20)

    def test_brute_force_grid(self):
        m = fit_scaling_model(PLATEAU)
        for target in [0, 10, 10.5, 19.9, 20]:
            expected = min(x for x in [1, 2, 3, 4] if m.predict(x) >= target - 1e-9 * 20)
            assert min_resource_for_sla(m, [1, 2, 3, 4], target) == expected

    def test_lower_is_better(self):
        m = fit_scaling_model([(1, 40), (2, 20), (4, 10), (8, 10)])
        assert min_resource_for_sla(m, [1, 2, 4, 8], 25, higher_is_better=False) in (2, 4)
        with pytest.raises(Unreachable):
            min_resource_for_sla(m, [1, 2, 4, 8], 1, higher_is_better=False)

    def test_returns_grid_points_only(self):
        m = fit_scaling_model([(1, 10), (2, 20), (4, 40)])
        assert min_resource_for_sla(m, [1, 2, 4], 30) == 4

    def test_monotone_in_target(self):
        rng = random.Random(3)
        m = fit_scaling_model(PLATEAU)
        last = -math.inf
        for t in sorted(rng.uniform(0, 25) for _ in range(200)):
            try:
                x = min_resource_for_sla(m, [1, 2, 3, 4], t)
            except Unreachable:
                x = math.inf
            assert x >= last
            last = x


def chain_bundle(models, grid=(1, 2, 4), dimension="cpu_cores", noise=0.0):
    doc = chain_marginal_doc(models, dimension, list(grid), noise=noise)
    return run_profiling(experiment_from_document(doc), host=HOST)


class TestChainSensitivity:
    def test_binding_node(self):
        r = chain_sensitivity(chain_bundle({"a": {"base_rate": 100, "max_threads": 8},
                                            "b": {"base_rate": 20, "max_threads": 8},
                                            "c": {"base_rate": 80, "max_threads": 8}}), "e2e", "cpu_cores")
        assert r.bottleneck == "b"
        assert r.elasticities["b"] > 0.01
        assert r.elasticities["a"] == pytest.approx(0, abs=1e-12)
        assert r.elasticities["c"] == pytest.approx(0, abs=1e-12)

    def test_insensitive_chain(self):
        models = {n: {"base_rate": 50, "cpu_bound": False} for n in "abc"}
        r = chain_sensitivity(chain_bundle(models), "e2e", "cpu_cores")
        assert r.bottleneck is None

    def test_single_node(self):
        r = chain_sensitivity(chain_bundle({"x": {"base_rate": 10, "max_threads": 4}}), "e2e", "cpu_cores")
        assert r.bottleneck == "x" and r.elasticities["x"] == pytest.approx(1.0)

    def test_tie_broken_lexicographically(self):
        models = {n: {"base_rate": 10, "max_threads": 8} for n in ("b", "a")}
        # both at 10 in reference: raising either alone does not move the min
        r = chain_sensitivity(chain_bundle(models), "e2e", "cpu_cores")
        assert r.bottleneck is None
        r = chain_sensitivity(chain_bundle({"a": {"base_rate": 10, "max_threads": 8},
                                            "b": {"base_rate": 10, "max_threads": 8},
                                            "c": {"base_rate": 100, "cpu_bound": False}}), "e2e", "cpu_cores")
        assert r.bottleneck is None

    def test_missing_marginal_sweep(self, chain_spec):
        bundle = run_profiling(chain_spec, host=HOST)
        with pytest.raises(MissingMarginalSweep, match="node db"):
            chain_sensitivity(bundle, "e2e_throughput", "cpu_time")
        with pytest.raises(ValidationError, match="nope"):
            chain_sensitivity(bundle, "nope", "cpu_time")

    def test_elasticity_is_dimensionless(self):
        assert elasticity([1, 2, 4], [10, 20, 40]) == pytest.approx(1.0)
        assert elasticity([1, 2, 4], [5, 5, 5]) == 0.0
        assert elasticity([1, 2, 4], [100, 200, 400]) == pytest.approx(elasticity([2, 4, 8], [1, 2, 4]))


class TestAnalyze:
    def test_db_and_nginx_analogues(self):
        db = run_profiling(experiment_from_document(
            single_node_doc({"base_rate": 50, "cpu_bound": False}, "cpu_cores", [1, 2, 3, 4])), host=HOST)
        ng = run_profiling(experiment_from_document(
            single_node_doc({"base_rate": 50, "max_threads": 2}, "cpu_cores", [1, 2, 3, 4])), host=HOST)
        assert {f["behavior_class"] for f in analyze_bundle(db).report["fits"]} == {"insensitive"}
        fits = analyze_bundle(ng, sla={"m": 1000}).report["fits"]
        assert {(f["kind"], f["saturation_point"]) for f in fits} == {("plateau", 2)}
        assert all(f["sla"]["allocation"] == "unreachable" for f in fits)

    def test_plots(self, whitebox_spec):
        bundle = run_profiling(whitebox_spec, host=HOST)
        analysis = analyze_bundle(bundle)
        assert analysis.plots
        for rows in analysis.plots.values():
            assert all(len(r) == 5 and r[2] <= r[1] <= r[3] for r in rows)
            assert [r[0] for r in rows] == sorted(r[0] for r in rows)
