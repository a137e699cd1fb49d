import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from dsikit import testcase
from dsikit.acceptance import random_spec
from dsikit.combinatorics import subsets_excluding
from dsikit.dependency import build_dm, jacobian_column, plan_for
from dsikit.errors import DegenerateVariance, InconsistentPrefix
from dsikit.inputs import build_input_spec, register_builtin_model
from dsikit.variance import (
    EstimatorConfig,
    conditional_variance_V,
    design_sf_variances,
    exact_sf,
    exact_V,
    exact_V_by_factor,
    gsi_total_of_dm,
    output_variance,
    sf_variances,
    stream,
)


def within(est, truth, k=3.0):
    return abs(est.value - truth) <= k * est.std_error


def test_output_variance_c7(linear, exact):
    est = output_variance(linear, testcase.input_spec("C7"), exact)
    assert est.value == pytest.approx(18.0, rel=1e-14)
    assert est.exact


def test_null_model_degenerate(exact):
    with pytest.raises(DegenerateVariance):
        output_variance(register_builtin_model("linear", [0, 0, 0]), testcase.input_spec("C4"), exact)


@pytest.mark.parametrize("antithetic", [False, True])
def test_output_variance_mc_c4(linear, antithetic):
    cfg = EstimatorConfig(n_var=50_000, mode="mc", antithetic=antithetic)
    est = output_variance(linear, testcase.input_spec("C4"), cfg)
    assert within(est, 34.0)


def test_V_conventions(linear, exact):
    spec = testcase.input_spec("C7")
    assert conditional_variance_V(linear, spec, (), exact).value == 0.0
    assert conditional_variance_V(linear, spec, (0,), exact).value == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("u", [(0,), (1,), (2,), (0, 1), (1, 2)])
def test_V_degenerate_equals_sigma(linear, exact, u):
    assert conditional_variance_V(linear, testcase.input_spec("C1"), u, exact).value == pytest.approx(50.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["linear", "additive-nonlinear"]))
def test_V_routes_agree_and_increase(seed, name):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng)
    model = register_builtin_model(name, rng.normal(size=spec.d))
    d = spec.d
    values = {}
    for u in subsets_excluding(range(d), 0):
        for v in (u, tuple(sorted(u + (0,)))):
            values[v] = exact_V(model, spec, v)
            if v:
                assert values[v] == pytest.approx(exact_V_by_factor(model, spec, v), rel=1e-9, abs=1e-12)
        assert values[u] <= values[tuple(sorted(u + (0,)))] + 1e-10


@pytest.mark.parametrize("name", ["C2", "C4", "C6", "C7"])
def test_V_double_loop_matches_exact(linear, name):
    spec = testcase.input_spec(name)
    cfg = EstimatorConfig(n_inner=300, n_outer=3000, mode="mc")
    for u in [(0,), (1, 2)]:
        assert within(conditional_variance_V(linear, spec, u, cfg), exact_V(linear, spec, u))


def test_V_double_loop_sine():
    spec = testcase.input_spec("C2")
    model = register_builtin_model("additive-nonlinear", [1.0, 0.5, -0.7])
    cfg = EstimatorConfig(n_inner=300, n_outer=3000, mode="mc")
    assert within(conditional_variance_V(model, spec, (1,), cfg), exact_V(model, spec, (1,)))


def test_sf_c7_first_input(linear):
    spec = testcase.input_spec("C7")
    fo, tot = sf_variances(linear, spec, plan_for(spec, 0), EstimatorConfig(m=50_000, mode="mc"))
    assert within(fo, 2.0) and within(tot, 2.0)


def test_sf_c4_last_position(linear, exact):
    spec = testcase.input_spec("C4")
    dm = build_dm(spec, (0, 1, 2), (0, 1, 2))
    J = jacobian_column(dm, (0, 1), 2)
    expected = (J @ linear.linear_coefficients) ** 2 * 8.0
    fo, tot = sf_variances(linear, spec, plan_for(spec, 2, (0, 1)), exact)
    assert fo.value == pytest.approx(expected, rel=1e-12)
    assert tot.value == pytest.approx(expected, rel=1e-12)
    # additive in Z_3: the conditional variance of X_3 given X_1, X_2
    assert expected == pytest.approx(8.0 * 2 / 3, rel=1e-12)


def test_sf_degenerate_innovation_is_zero(linear, exact):
    spec = testcase.input_spec("C1")
    fo, tot = sf_variances(linear, spec, plan_for(spec, 1, (0,)), exact)
    assert fo.value == 0.0 and tot.value == 0.0


@pytest.mark.parametrize("u, j", [((), 0), ((1,), 2), ((0, 2), 1)])
def test_sf_sine_mc_matches_exact(u, j):
    spec = testcase.input_spec("C8")
    model = register_builtin_model("additive-nonlinear", [1.0, 0.5, -0.7])
    plan = plan_for(spec, j, u)
    fo_x, tot_x = exact_sf(model, spec, plan)
    fo, tot = sf_variances(model, spec, plan, EstimatorConfig(m=40_000, mode="mc"))
    assert within(fo, fo_x) and within(tot, tot_x)
    assert fo_x <= tot_x + 1e-12


def test_sf_product_interaction():
    spec = build_input_spec(np.zeros(2), np.eye(2))
    model = register_builtin_model("product", [1.0, 1.0])
    fo, tot = sf_variances(model, spec, plan_for(spec, 0), EstimatorConfig(m=40_000))
    assert within(fo, 0.0) and within(tot, 1.0)


@pytest.mark.parametrize("name, per_m", [("C2", 24), ("C6", 8), ("C7", 4)])
def test_design_cost_and_accuracy(linear, name, per_m, exact):
    spec = testcase.input_spec(name)
    cfg = EstimatorConfig(m=5_000, mode="mc")
    pairs, n = design_sf_variances(linear, spec, cfg)
    assert n == per_m * cfg.m
    for (u, j), pe in pairs.items():
        fo, se_fo, tot, se_tot = pe.summary()
        truth, _ = exact_sf(linear, spec, plan_for(spec, j, u))
        assert abs(fo - truth) <= 3 * se_fo
        assert abs(tot - truth) <= 3 * se_tot


def test_design_covers_all_pairs(linear):
    spec = build_input_spec(np.zeros(5), np.array([
        [1.0, 0.3, 0.0, 0.0, 0.0],
        [0.3, 1.0, 0.2, 0.0, 0.0],
        [0.0, 0.2, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ]))
    model = register_builtin_model("linear", [1, 2, 3, 4, 5])
    pairs, n = design_sf_variances(model, spec, EstimatorConfig(m=100, mode="mc"))
    expected = {(u, j) for j in (0, 1, 2) for u in subsets_excluding((0, 1, 2), j)}
    expected |= {((), 3), ((), 4)}
    assert set(pairs) == expected
    # 14 targets over 6 orderings of the 3-block, plus A and B in each
    assert n == 14 * 100 + 6 * 2 * 100


def test_gsi_c4_closed_form():
    spec = testcase.input_spec("C4")
    dm = build_dm(spec, (0, 1, 2), (0, 1, 2))
    J = jacobian_column(dm, (0, 1), 2)
    g = gsi_total_of_dm(dm, (0, 1), 2)
    assert g.trace_var == pytest.approx(8.0, rel=1e-14)
    assert g.gsi_t * g.trace_var == pytest.approx(J @ J * 8.0, rel=1e-12)
    assert 0.0 <= g.gsi_t <= 1.0


@pytest.mark.parametrize("u, j", [((), 0), ((1,), 0), ((0, 2), 1)])
def test_gsi_mc_matches_closed_form(u, j):
    spec = testcase.input_spec("C2")
    from dsikit.combinatorics import prefix_plan

    dm = build_dm(spec, (0, 1, 2), prefix_plan((0, 1, 2), u, j))
    closed = gsi_total_of_dm(dm, u, j)
    mc = gsi_total_of_dm(dm, u, j, EstimatorConfig(m=50_000), monte_carlo=True)
    assert abs(mc.gsi_t - closed.gsi_t) <= 3 * mc.std_error + 0.02 * closed.gsi_t


def test_gsi_needs_prefix():
    dm = build_dm(testcase.input_spec("C4"), (0, 1, 2), (0, 1, 2))
    with pytest.raises(InconsistentPrefix):
        gsi_total_of_dm(dm, (2,), 1)


def test_streams_are_addressed():
    a = stream(1, "x", (0, 1)).standard_normal(4)
    assert_allclose(a, stream(1, "x", (0, 1)).standard_normal(4), rtol=0, atol=0)
    assert not np.allclose(a, stream(1, "y", (0, 1)).standard_normal(4))
    assert not np.allclose(a, stream(1, "x", (1, 0)).standard_normal(4))


def test_worker_count_does_not_change_results(linear):
    spec = testcase.input_spec("C2")
    out = []
    for w in (1, 3):
        cfg = EstimatorConfig(m=2_000, mode="mc", workers=w)
        pairs, _ = design_sf_variances(linear, spec, cfg)
        out.append({k: v.summary() for k, v in pairs.items()})
    assert out[0] == out[1]


def test_config_validation():
    with pytest.raises(ValueError):
        EstimatorConfig(m=1)
    with pytest.raises(ValueError):
        EstimatorConfig(mode="fast")
    with pytest.raises(ValueError):
        output_variance(register_builtin_model("product", [1, 1]),
                        build_input_spec(np.zeros(2), np.eye(2)), EstimatorConfig(mode="exact"))
