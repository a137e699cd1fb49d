import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from dsikit import testcase
from dsikit.acceptance import random_spec
from dsikit.dependency import dm_from_covariance, plan_for
from dsikit.errors import BlockTooLarge, DimensionTooLargeForExact, NotIndependentInput
from dsikit.indices import (
    _random_permutations,
    dsi,
    full_report,
    shapley_exact,
    shapley_sampled,
    sobol,
)
from dsikit.inputs import build_input_spec, register_builtin_model
from dsikit.variance import EstimatorConfig, exact_sf, output_variance

THIRDS = np.array([1.0, 4.0, 4.0]) / 9


def test_dsi_independent(linear, exact):
    spec = testcase.input_spec("C7")
    for j in range(3):
        ds, dst = dsi(linear, spec, j, exact)
        assert ds.value == pytest.approx(THIRDS[j], abs=1e-14)
        assert dst.value == pytest.approx(THIRDS[j], abs=1e-14)
        assert ds.exact


def test_dsi_degenerate(linear, exact):
    spec = testcase.input_spec("C1")
    for j in range(3):
        ds, dst = dsi(linear, spec, j, exact)
        assert ds.value == pytest.approx(1 / 3, abs=1e-12)
        assert dst.value == pytest.approx(1 / 3, abs=1e-12)


def test_dsi_equals_shapley_c4(linear, exact):
    spec = testcase.input_spec("C4")
    for j in range(3):
        ds, dst = dsi(linear, spec, j, exact)
        sh = shapley_exact(linear, spec, j, exact)
        assert abs(ds.value - sh.value) <= 1e-12
        assert abs(dst.value - sh.value) <= 1e-12


def test_dsi_mc_c4(linear, exact):
    spec = testcase.input_spec("C4")
    cfg = EstimatorConfig(m=20_000, mode="mc")
    for j in range(3):
        truth = dsi(linear, spec, j, exact)[0].value
        ds, dst = dsi(linear, spec, j, cfg)
        assert abs(ds.value - truth) <= 3 * ds.std_error
        assert abs(dst.value - truth) <= 3 * dst.std_error


def test_dsi_block_too_large():
    d = 21
    cov = np.full((d, d), 0.1) + 0.9 * np.eye(d)
    spec = build_input_spec(np.zeros(d), cov)
    with pytest.raises(BlockTooLarge):
        dsi(register_builtin_model("linear", np.ones(d)), spec, 0, EstimatorConfig())


def test_suffix_order_does_not_matter(linear):
    spec = testcase.input_spec("C2")
    plan = plan_for(spec, 0)
    a = type(plan)((dm_from_covariance(spec.covariance, (0, 1, 2), (0, 1, 2)),), 0, ())
    b = type(plan)((dm_from_covariance(spec.covariance, (0, 1, 2), (0, 2, 1)),), 0, ())
    assert_allclose(exact_sf(linear, spec, a), exact_sf(linear, spec, b), rtol=1e-12)
    model = register_builtin_model("additive-nonlinear", [1.0, -0.4, 0.8])
    assert_allclose(exact_sf(model, spec, a), exact_sf(model, spec, b), rtol=1e-10)


def test_shapley_c7(linear, exact):
    spec = testcase.input_spec("C7")
    assert_allclose([shapley_exact(linear, spec, j, exact).value for j in range(3)], THIRDS, atol=1e-14)


def test_shapley_c1(linear, exact):
    spec = testcase.input_spec("C1")
    assert_allclose([shapley_exact(linear, spec, j, exact).value for j in range(3)], 1 / 3, atol=1e-12)


def test_shapley_efficiency_c4(linear, exact):
    spec = testcase.input_spec("C4")
    assert abs(sum(shapley_exact(linear, spec, j, exact).value for j in range(3)) - 1) <= 1e-12


def test_shapley_too_large():
    spec = build_input_spec(np.zeros(21), np.eye(21))
    with pytest.raises(DimensionTooLargeForExact):
        shapley_exact(register_builtin_model("linear", np.ones(21)), spec, 0, EstimatorConfig())


def test_shapley_all_orderings_equals_exact(linear, exact, table_set):
    spec = testcase.input_spec(table_set)
    perms = list(itertools.permutations(range(3)))
    for j in range(3):
        a = shapley_sampled(linear, spec, j, exact, perms).value
        assert abs(a - shapley_exact(linear, spec, j, exact).value) <= 1e-12


def test_shapley_enumerates_when_cheap(linear, exact):
    spec = testcase.input_spec("C2")
    est = shapley_sampled(linear, spec, 0, exact)
    assert est.std_error == 0.0
    assert abs(est.value - shapley_exact(linear, spec, 0, exact).value) <= 1e-12


def test_shapley_sampled_500_c4(linear, exact):
    spec = testcase.input_spec("C4")
    for j in range(3):
        est = shapley_sampled(linear, spec, j, exact, enumerate_small=False)
        truth = shapley_exact(linear, spec, j, exact).value
        assert abs(est.value - truth) <= 3 * est.std_error


def test_shapley_single_input(exact):
    spec = build_input_spec([0.0], [[3.0]])
    model = register_builtin_model("additive-nonlinear", [2.0])
    assert shapley_sampled(model, spec, 0, exact).value == pytest.approx(1.0)
    assert shapley_exact(model, spec, 0, exact).value == pytest.approx(1.0)


def test_shapley_mc_sine():
    spec = testcase.input_spec("C2")
    model = register_builtin_model("additive-nonlinear", [1.0, 0.5, -0.7])
    cfg = EstimatorConfig(n_inner=300, n_outer=2000, n_var=20_000, mode="mc")
    exact = EstimatorConfig(mode="exact")
    for j in range(3):
        est = shapley_exact(model, spec, j, cfg)
        assert abs(est.value - shapley_exact(model, spec, j, exact).value) <= 3 * est.std_error


def test_sobol_c7(linear, exact):
    s, st_ = sobol(linear, testcase.input_spec("C7"), 1, exact)
    assert s.value == pytest.approx(4 / 9) and st_.value == pytest.approx(4 / 9)


def test_sobol_product_interaction():
    spec = build_input_spec(np.zeros(2), np.eye(2))
    model = register_builtin_model("product", [1.0, 1.0])
    cfg = EstimatorConfig(m=40_000, n_var=40_000)
    s, st_ = sobol(model, spec, 0, cfg)
    assert abs(s.value) <= 3 * s.std_error
    assert abs(st_.value - 1.0) <= 3 * st_.std_error


def test_sobol_rejects_dependent_input(linear, exact):
    with pytest.raises(NotIndependentInput):
        sobol(linear, testcase.input_spec("C6"), 0, exact)


def test_report_c2_bracket(linear, mc):
    report = full_report(linear, testcase.input_spec("C2"), mc)
    assert len(report.rows) == 3
    for r in report.rows:
        assert r.DS - r.Sh <= 3 * np.hypot(r.stderr_DS, r.stderr_Sh)
        assert r.Sh - r.DS_T <= 3 * np.hypot(r.stderr_DST, r.stderr_Sh)
    assert report.within_dsi_cost


def test_report_c7_sobol_columns(linear, mc):
    spec = testcase.input_spec("C7")
    report = full_report(linear, spec, mc)
    for r in report.rows:
        s, st_ = sobol(linear, spec, r.input, mc)
        assert r.S == s.value and r.S_T == st_.value
        assert abs(r.DS - r.S) <= 3 * np.hypot(r.stderr_DS, s.std_error)
        assert abs(r.DS_T - r.S_T) <= 3 * np.hypot(r.stderr_DST, st_.std_error)


def test_report_c4_linear_equality(linear, exact):
    report = full_report(linear, testcase.input_spec("C4"), exact)
    for r in report.rows:
        assert abs(r.DS - r.Sh) <= 1e-10 and abs(r.DS_T - r.Sh) <= 1e-10
        assert r.S is None
        assert r.exact


def test_report_efficiency_and_ranges(linear, mc):
    report = full_report(linear, testcase.input_spec("C8"), mc)
    se = np.sqrt(sum(r.stderr_Sh ** 2 for r in report.rows))
    assert abs(sum(r.Sh for r in report.rows) - 1) <= 3 * se + 1e-12
    for r in report.rows:
        for v, s in ((r.DS, r.stderr_DS), (r.DS_T, r.stderr_DST), (r.Sh, r.stderr_Sh)):
            assert -3 * s <= v <= 1 + 3 * s


def test_report_uses_sampled_shapley_when_cheaper(linear):
    cfg = EstimatorConfig(m=200, n_var=200, n_inner=20, n_outer=20, n_perm=2, mode="mc")
    report = full_report(linear, testcase.input_spec("C4"), cfg)
    assert report.shapley_method == "permutations"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["linear", "additive-nonlinear"]))
def test_bracketing_exact(seed, name):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng)
    model = register_builtin_model(name, rng.normal(size=spec.d))
    report = full_report(model, spec, EstimatorConfig(mode="exact"))
    for r in report.rows:
        assert r.DS <= r.Sh + 1e-10 <= r.DS_T + 2e-10
    assert abs(sum(r.Sh for r in report.rows) - 1) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_linear_equality_random(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng)
    model = register_builtin_model("linear", rng.normal(size=spec.d))
    for r in full_report(model, spec, EstimatorConfig(mode="exact")).rows:
        assert abs(r.Sh - r.DS) <= 1e-10 and abs(r.Sh - r.DS_T) <= 1e-10


@pytest.mark.parametrize("c", [-2.5, 0.1, 7.0])
@pytest.mark.parametrize("name", ["linear", "additive-nonlinear"])
def test_scale_invariance(c, name, exact):
    spec = testcase.input_spec("C9")
    model = register_builtin_model(name, [1.0, -0.5, 2.0])
    a = full_report(model, spec, exact)
    b = full_report(model.scaled(c), spec, exact)
    for ra, rb in zip(a.rows, b.rows):
        assert_allclose([rb.DS, rb.DS_T, rb.Sh], [ra.DS, ra.DS_T, ra.Sh], rtol=1e-10, atol=1e-14)
    assert output_variance(model.scaled(c), spec, exact).value == pytest.approx(
        c * c * output_variance(model, spec, exact).value)


def test_mean_invariance_linear(linear, exact):
    spec = testcase.input_spec("C2")
    shifted = build_input_spec([1.0, -2.0, 5.0], spec.covariance)
    a = full_report(linear, spec, exact)
    b = full_report(linear, shifted, exact)
    for ra, rb in zip(a.rows, b.rows):
        assert_allclose([rb.DS, rb.DS_T, rb.Sh], [ra.DS, ra.DS_T, ra.Sh], rtol=1e-12)


def test_random_permutations_deterministic():
    assert _random_permutations(4, 10, 3) == _random_permutations(4, 10, 3)
