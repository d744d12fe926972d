import warnings

import numpy as np
import pytest

from stablerps.theory import (
    Method,
    NonDivisibleWarning,
    RegressionSpec,
    compressed_features,
    draw,
    estimate_inner,
    estimate_norm,
    exact_moments,
    exact_variance,
    expected_variance,
    mc_variance,
    power_law_sigmas,
    prune_draw_from_subset,
    residual_compressed,
    residual_empirical,
    residual_full,
    variance_closed_form,
)

METHODS = list(Method)


# -- estimators --------------------------------------------------------------


def test_prune_estimator_two_subsets():
    x, y = [1.0, 2.0], [3.0, 4.0]
    vals = [estimate_inner(prune_draw_from_subset(2, 1, [s]), x, y) for s in (0, 1)]
    assert sorted(vals) == [6.0, 16.0] and np.mean(vals) == 11.0


def test_rps_estimator_m1_signs():
    x, y = np.array([1.0, 2.0]), np.array([3.0, 4.0])
    seen = {round(estimate_inner(draw("stable_rps", 2, 1, s), x, y), 12) for s in range(50)}
    assert seen == {1.0, 21.0}
    mean, _ = exact_moments("stable_rps", x, y, 1)
    assert mean == pytest.approx(11.0, abs=1e-12)


@pytest.mark.parametrize("method", METHODS)
def test_estimators_exact_at_m_equals_n(method):
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(9), rng.standard_normal(9)
    for s in range(5):
        assert estimate_inner(draw(method, 9, 9, s), x, y) == pytest.approx(x @ y, rel=1e-12)


def test_estimator_dimension_mismatch():
    d = draw("prune", 4, 2)
    with pytest.raises(ValueError):
        estimate_inner(d, np.ones(4), np.ones(3))
    with pytest.raises(ValueError):
        estimate_norm(d, np.ones(5))


def test_draws_are_seeded():
    a, b = draw("stable_rps", 12, 4, 3), draw("stable_rps", 12, 4, 3)
    assert np.array_equal(a.buckets, b.buckets) and np.array_equal(a.signs, b.signs)
    assert draw("prune", 12, 4, 3).subset.tolist() == draw("prune", 12, 4, 3).subset.tolist()
    assert len(draw("prune", 12, 4, 3).subset) == 4


# -- closed forms and enumeration -------------------------------------------


def test_norm_variance_worked_example():
    x = np.array([1.0, 1.0])
    assert variance_closed_form("prune", x, m=1) == pytest.approx(0.0)
    assert variance_closed_form("stable_rps", x, m=1) == pytest.approx(4.0)
    assert exact_variance("prune", x, x, 1) == pytest.approx(0.0, abs=1e-12)
    assert exact_variance("stable_rps", x, x, 1) == pytest.approx(4.0, abs=1e-12)


def test_single_spike_prune_variance():
    x = np.array([1.0, 0, 0, 0])
    assert variance_closed_form("prune", x, m=2) == pytest.approx(1.0)
    assert exact_variance("prune", x, x, 2) == pytest.approx(1.0)


@pytest.mark.parametrize("method", METHODS)
def test_zero_variance_at_m_equals_n(method):
    x = np.arange(1.0, 6.0)
    assert variance_closed_form(method, x, m=5) == 0.0
    assert exact_variance(method, x, x, 5) == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("n,m", [(4, 1), (4, 2), (6, 2), (6, 3), (5, 1)])
def test_enumeration_matches_closed_form(method, n, m):
    rng = np.random.default_rng(n * 10 + m)
    for _ in range(3):
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        mean, var = exact_moments(method, x, y, m)
        assert mean == pytest.approx(x @ y, abs=1e-12)
        assert var == pytest.approx(variance_closed_form(method, x, y, m), abs=1e-10)


def test_enumeration_limit():
    with pytest.raises(ValueError):
        exact_variance("prune", np.ones(7), np.ones(7), 1)


def test_non_divisible_warns():
    with pytest.warns(NonDivisibleWarning):
        variance_closed_form("prune", np.ones(5), m=2)


# -- expectations ------------------------------------------------------------


def test_expected_variance_equal_sigma():
    s = np.full(4, 1.3)
    a = expected_variance("prune", "inner", s, 2)
    b = expected_variance("stable_rps", "inner", s, 2)
    assert a == pytest.approx(4 * 1.3**4) and b == pytest.approx(a, rel=1e-12)


def test_expected_variance_power_law_separated():
    s = power_law_sigmas(8, 0.5)
    for q in ("inner", "norm"):
        assert expected_variance("prune", q, s, 2) > 1.05 * expected_variance("stable_rps", q, s, 2)


def test_expected_variance_zero_and_errors():
    s = np.array([1.0, 2.0, 3.0])
    assert expected_variance("prune", "norm", s, 3) == 0.0
    with pytest.raises(ValueError):
        expected_variance("prune", "inner", [1.0, -1.0], 1)
    with pytest.raises(ValueError):
        expected_variance("prune", "cosine", s, 1)


@pytest.mark.parametrize("method", METHODS)
def test_expected_variance_matches_average_of_closed_form(method):
    # average the per-vector variance over Gaussian data with stds sigma
    rng = np.random.default_rng(3)
    s = np.array([1.0, 0.5, 2.0, 1.5])
    xs = rng.standard_normal((40_000, 4)) * s
    ys = rng.standard_normal((40_000, 4)) * s
    inner = np.mean([variance_closed_form(method, x, y, 2) for x, y in zip(xs[:20000], ys[:20000])])
    norm = np.mean([variance_closed_form(method, x, None, 2) for x in xs])
    assert inner == pytest.approx(expected_variance(method, "inner", s, 2), rel=0.05)
    assert norm == pytest.approx(expected_variance(method, "norm", s, 2), rel=0.05)


# -- Monte Carlo -------------------------------------------------------------


@pytest.mark.parametrize("method", METHODS)
def test_mc_variance_unbiased_and_close(method):
    rng = np.random.default_rng(5)
    x, y = rng.standard_normal(12), rng.standard_normal(12)
    rep = mc_variance(method, x, y, 4, 100_000, seed=1)
    assert abs(rep.monte_carlo_mean - x @ y) < 4 * rep.standard_error
    assert abs(rep.monte_carlo_var - rep.closed_form) < 4 * rep.var_standard_error
    assert rep.standard_error > 0


def test_mc_variance_deterministic_and_zero_vector():
    x = np.arange(12.0)
    assert mc_variance("stable_rps", x, x, 3, 500, seed=9).to_dict() == mc_variance("stable_rps", x, x, 3, 500, seed=9).to_dict()
    for method in METHODS:
        assert mc_variance(method, np.zeros(12), np.ones(12), 4, 200).monte_carlo_var == 0.0
    with pytest.raises(ValueError):
        mc_variance("prune", x, x, 3, 1)


def test_mc_batch_equals_single_draws():
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(10), rng.standard_normal(10)
    from stablerps.theory import _batch_estimates, trial_seeds

    seeds = trial_seeds(4, 30)
    for method in METHODS:
        batch = _batch_estimates(method, x, y, 5, seeds)
        single = [estimate_inner(draw(method, 10, 5, int(s)), x, y) for s in seeds]
        assert np.allclose(batch, single, rtol=1e-12)


# -- regression residuals ----------------------------------------------------


RHO = (0.6, 0.48, 0.0, 0.0)


def test_residual_full_examples():
    assert residual_full(RegressionSpec((0.0,) * 4, 2)) == 1.0
    assert residual_full(RegressionSpec(RHO, 2)) == pytest.approx(0.4096)
    assert residual_full(RegressionSpec((0.999999, 0.0), 1)) == pytest.approx(0.0, abs=1e-5)


def test_residual_compressed_worked_example():
    spec = RegressionSpec(RHO, 2)
    rep = residual_compressed(spec, prune_draw_from_subset(4, 2, [0, 2]))
    assert rep.norm_estimate == pytest.approx(0.72)
    assert rep.relative_excess == pytest.approx(0.5625)
    assert rep.relative_excess == pytest.approx(rep.relative_excess_direct, abs=1e-12)
    # keeping the support of rho retains all signal
    assert residual_compressed(spec, prune_draw_from_subset(4, 2, [0, 1])).relative_excess == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("method", METHODS)
def test_residual_no_compression_equals_full(method):
    spec = RegressionSpec(RHO, 4)
    rep = residual_compressed(spec, draw(method, 4, 4, 3))
    assert rep.compressed == pytest.approx(rep.full, rel=1e-12)


def test_regression_spec_validation():
    with pytest.raises(ValueError):
        RegressionSpec((0.8, 0.8), 1)
    with pytest.raises(ValueError):
        RegressionSpec((0.1, 0.1, 0.1), 2)
    with pytest.raises(ValueError):
        RegressionSpec((0.1, 0.1), 1, sigma_x=0.0)


@pytest.mark.parametrize("method", METHODS)
def test_residual_empirical_matches(method):
    spec = RegressionSpec((0.5, -0.3, 0.2, 0.1, 0.4, 0.0, -0.2, 0.1), 4, sigma_x=1.5, sigma_y=2.0)
    d = draw(method, 8, 4, 11)
    emp = residual_empirical(spec, d, 400_000, seed=1)
    assert emp == pytest.approx(residual_compressed(spec, d).compressed, rel=0.02)


def test_residual_empirical_null_and_uncompressed():
    null = RegressionSpec((0.0,) * 4, 2, sigma_y=1.5)
    assert residual_empirical(null, draw("prune", 4, 2, 0), 200_000) == pytest.approx(2.25, rel=0.02)
    full = RegressionSpec(RHO, 4)
    assert residual_empirical(full, draw("stable_rps", 4, 4, 0), 200_000) == pytest.approx(0.4096, rel=0.02)


def test_compressed_features_rps_signs():
    d = draw("stable_rps", 6, 3, 2)
    x = np.eye(6)
    f = compressed_features(d, x)
    assert f.shape == (6, 3)
    for i in range(6):
        assert f[i, d.buckets[i]] == d.signs[i]
