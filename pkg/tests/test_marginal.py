"""Tests for population-average prediction, effective doses and the delta
method."""

import numpy as np
import pytest

from medose import (LL3, LL4, CurveParams, conditional_ed, delta_method,
                    evaluate, marginal_predict, marginal_values,
                    marginalized_ed, mc_marginal_predict)
from medose.errors import EvaluationError, MethodError, NoSolutionError
from medose.marginal import marginal_asymptotes, solve_ed_log10
from conftest import make_nlme_result


@pytest.fixture(scope="module")
def zero_g_fit():
    return make_nlme_result(LL3, (5.0, 2000.0, 0.5), np.zeros((3, 3)),
                            ("b", "d", "e"))


@pytest.fixture(scope="module")
def linear_fit():
    # random effects only on the asymptotes, which enter the mean linearly
    g = np.array([[9.0, 3.0], [3.0, 25.0]])
    return make_nlme_result(LL4, (1.5, 5.0, 100.0, 0.7), g, ("c", "d"))


class TestMarginalPredict:
    def test_zero_variance_collapses_to_conditional(self, zero_g_fit):
        params = zero_g_fit.curve_params("1")
        for dose in (0.0, 0.05, 0.5, 2.0, np.inf):
            assert marginal_predict(zero_g_fit, "1", dose) == pytest.approx(
                evaluate(LL3, params, dose), rel=1e-12)

    def test_linear_random_effects_exact_for_any_rule_size(self, linear_fit):
        params = linear_fit.curve_params("1")
        for n_points in (1, 2, 5):
            for dose in (0.0, 0.1, 0.7, 5.0):
                assert marginal_predict(linear_fit, "1", dose, n_points) == \
                    pytest.approx(evaluate(LL4, params, dose), rel=1e-12)

    def test_agrees_with_monte_carlo(self, truth_fit):
        for dose in np.geomspace(0.01, 3.0, 10):
            quad = marginal_predict(truth_fit, "1", float(dose), 9)
            mc, se = mc_marginal_predict(truth_fit, "1", float(dose),
                                         100_000, seed=41)
            assert abs(quad - mc) < 3.0 * max(se, 1e-12)

    def test_requires_random_effects(self):
        from medose import Scenario, fit_nls, generate_dataset
        nls = fit_nls(generate_dataset(Scenario(), 3, seed=0), LL3)
        with pytest.raises(MethodError):
            marginal_predict(nls, "1", 0.5)

    def test_refinement_differences_shrink(self, truth_fit):
        # convergence diagnostic over the dose grid: the worst-case gap
        # between successive rules shrinks monotonically (pointwise gaps at
        # the flattest doses oscillate at the 1e-8-relative level, which is
        # inherent to the quadrature, so the check uses the sup over doses)
        doses = np.geomspace(0.01, 3.0, 10)
        previous = None
        for n_points in (5, 7, 9, 11, 13):
            vals_n, _ = marginal_values(truth_fit, "1", doses, n_points)
            vals_next, _ = marginal_values(truth_fit, "1", doses, n_points + 2)
            gap = float(np.abs(vals_n - vals_next).max())
            if previous is not None:
                assert gap <= previous + 1e-9
            previous = gap
        assert previous < 1e-4

    def test_jensen_gap_with_inflection_random_effect(self):
        beta = (1.5, 5.0, 100.0, 0.7)
        sd_e = 0.1 * beta[3]
        fit = make_nlme_result(LL4, beta, np.diag([sd_e**2]), ("e",))
        conditional = evaluate(LL4, CurveParams(LL4, beta), beta[3])
        marginal = marginal_predict(fit, "1", beta[3], 15)
        assert abs(marginal - conditional) > 1e-3


class TestMonteCarlo:
    def test_deterministic_for_fixed_seed(self, truth_fit):
        a = mc_marginal_predict(truth_fit, "1", 0.5, 5000, seed=9)
        b = mc_marginal_predict(truth_fit, "1", 0.5, 5000, seed=9)
        assert a == b

    def test_zero_variance(self, zero_g_fit):
        est, se = mc_marginal_predict(zero_g_fit, "1", 0.5, 1000, seed=1)
        params = zero_g_fit.curve_params("1")
        assert est == pytest.approx(evaluate(LL3, params, 0.5), rel=1e-12)
        assert se == 0.0

    def test_linear_case_within_noise_of_conditional(self, linear_fit):
        params = linear_fit.curve_params("1")
        est, se = mc_marginal_predict(linear_fit, "1", 0.7, 20_000, seed=3)
        assert abs(est - evaluate(LL4, params, 0.7)) < 3.0 * se


class TestMarginalizedEd:
    def test_zero_variance_matches_closed_form(self, zero_g_fit):
        params = zero_g_fit.curve_params("1")
        for alpha in (0.1, 0.5, 0.9):
            ed = marginalized_ed(zero_g_fit, "1", alpha)
            assert ed == pytest.approx(conditional_ed(LL3, params, alpha),
                                       rel=1e-8)

    def test_linear_random_effects_match_closed_form(self, linear_fit):
        params = linear_fit.curve_params("1")
        for alpha in (0.1, 0.25, 0.5, 0.75, 0.9):
            ed = marginalized_ed(linear_fit, "1", alpha)
            assert ed == pytest.approx(conditional_ed(LL4, params, alpha),
                                       rel=1e-6)

    def test_reproduces_alpha_when_plugged_back(self, truth_fit):
        for alpha in (0.1, 0.5, 0.9):
            ed = marginalized_ed(truth_fit, "1", alpha, 9)
            f_zero, f_inf = marginal_asymptotes(truth_fit, "1", 9)
            f_ed = marginal_predict(truth_fit, "1", ed, 9)
            achieved = (f_ed - f_zero) / (f_inf - f_zero)
            assert achieved == pytest.approx(alpha, abs=1e-8)

    def test_bracket_failure_reports(self):
        def flat(dose):
            return 1.5    # never crosses the half-way target of 1.0

        with pytest.raises(NoSolutionError):
            solve_ed_log10(flat, 2.0, 0.0, 0.5, 0.0)


class TestDeltaMethod:
    def test_coordinate_projection_exact(self, truth_fit):
        vcov = np.array([[0.04, 0.01, 0.0],
                         [0.01, 2500.0, -0.5],
                         [0.0, -0.5, 0.0009]])
        fit = make_nlme_result(LL3, truth_fit.beta_hat, truth_fit.g_hat,
                               ("b", "d", "e"), vcov=vcov)
        for k in range(3):
            est = delta_method(fit, lambda beta, k=k: float(beta[k]))
            assert est.std_error == pytest.approx(np.sqrt(vcov[k, k]),
                                                  rel=1e-9)

    def test_linear_functional(self, truth_fit):
        vcov = np.diag([0.04, 2500.0, 0.0009])
        fit = make_nlme_result(LL3, truth_fit.beta_hat, truth_fit.g_hat,
                               ("b", "d", "e"), vcov=vcov)
        a = np.array([0.3, -0.002, 4.0])
        est = delta_method(fit, lambda beta: float(a @ beta))
        assert est.std_error == pytest.approx(
            float(np.sqrt(a @ vcov @ a)), abs=1e-10)
        assert est.gradient == pytest.approx(a, rel=1e-6)

    def test_variance_identity(self, truth_fit):
        est = delta_method(truth_fit,
                           lambda beta: float(beta[0] * np.log(beta[1])))
        reproduced = float(est.gradient @ truth_fit.vcov_beta @ est.gradient)
        assert est.std_error**2 == pytest.approx(reproduced, abs=1e-10)

    def test_nonfinite_stencil_names_coordinate(self, truth_fit):
        def bad(beta):
            if beta[2] > 0.5:
                return float("nan")
            return 1.0

        with pytest.raises(EvaluationError, match="e"):
            delta_method(truth_fit, bad)
