"""Tests for the log-logistic model family."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from medose import (LL3, LL4, LL5, CurveParams, asymptotes, conditional_ed,
                    evaluate, family_from_name, gradient_params, self_start)
from medose.errors import (DegenerateDataError, DomainError,
                           InvalidParameterError)
from medose.fitting import fit_nls
from medose.data import from_rows
from medose.models import eval_values


def params_strategy(family):
    positive = st.floats(0.05, 50.0)
    signed_b = st.floats(0.2, 8.0).flatmap(
        lambda v: st.sampled_from([v, -v]))
    asym = st.floats(0.2, 5.0)
    level = st.floats(-100.0, 100.0)

    def build(vals):
        by_name = {"b": vals[0], "c": vals[1], "d": vals[2],
                   "e": vals[3], "f": vals[4]}
        return CurveParams(family, tuple(by_name[n]
                                         for n in family.parameter_names))

    return st.tuples(signed_b, level, level, positive, asym).map(build)


class TestFamilies:
    def test_parameter_names(self):
        assert LL3.parameter_names == ("b", "d", "e")
        assert LL4.parameter_names == ("b", "c", "d", "e")
        assert LL5.parameter_names == ("b", "c", "d", "e", "f")
        assert (LL3.parameter_count, LL4.parameter_count,
                LL5.parameter_count) == (3, 4, 5)

    def test_lookup(self):
        assert family_from_name("ll4") is LL4
        with pytest.raises(DomainError):
            family_from_name("weibull")

    def test_invalid_params(self):
        with pytest.raises(InvalidParameterError):
            CurveParams(LL4, (1.0, 0.0, 1.0, -1.0))     # e <= 0
        with pytest.raises(InvalidParameterError):
            CurveParams(LL4, (0.0, 0.0, 1.0, 1.0))      # b == 0
        with pytest.raises(InvalidParameterError):
            CurveParams(LL5, (1.0, 0.0, 1.0, 1.0, 0.0))  # f <= 0
        with pytest.raises(InvalidParameterError):
            CurveParams(LL4, (1.0, float("nan"), 1.0, 1.0))
        with pytest.raises(InvalidParameterError):
            CurveParams(LL4, (1.0, 0.0, 1.0))            # wrong length


class TestEvaluate:
    def test_midpoint_at_inflection(self):
        p = CurveParams(LL4, (1.0, 0.0, 1.0, 1.0))
        assert evaluate(LL4, p, 1.0) == pytest.approx(0.5, abs=1e-15)

    def test_ll5_with_unit_asymmetry_equals_ll4(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            b = rng.uniform(0.2, 5) * rng.choice([-1, 1])
            c, d = rng.uniform(-10, 10, 2)
            e = rng.uniform(0.05, 20)
            dose = rng.uniform(0, 50)
            v4 = evaluate(LL4, CurveParams(LL4, (b, c, d, e)), dose)
            v5 = evaluate(LL5, CurveParams(LL5, (b, c, d, e, 1.0)), dose)
            assert v5 == pytest.approx(v4, rel=1e-14, abs=1e-14)

    def test_ll4_with_zero_floor_equals_ll3(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            b = rng.uniform(0.2, 5) * rng.choice([-1, 1])
            d = rng.uniform(-10, 10)
            e = rng.uniform(0.05, 20)
            dose = rng.uniform(0, 50)
            v4 = evaluate(LL4, CurveParams(LL4, (b, 0.0, d, e)), dose)
            v3 = evaluate(LL3, CurveParams(LL3, (b, d, e)), dose)
            assert v3 == pytest.approx(v4, rel=1e-14, abs=1e-14)

    def test_dose_zero_is_upper_asymptote_for_positive_b(self):
        p = CurveParams(LL4, (2.0, 1.0, 3.0, 0.5))
        assert evaluate(LL4, p, 0.0) == pytest.approx(3.0, abs=1e-15)

    def test_dose_zero_is_lower_asymptote_for_negative_b(self):
        p = CurveParams(LL4, (-2.0, 1.0, 3.0, 0.5))
        assert evaluate(LL4, p, 0.0) == pytest.approx(1.0, abs=1e-15)

    def test_negative_dose_rejected(self):
        p = CurveParams(LL4, (1.0, 0.0, 1.0, 1.0))
        with pytest.raises(DomainError):
            evaluate(LL4, p, -0.5)

    def test_vectorized(self):
        p = CurveParams(LL4, (1.0, 0.0, 1.0, 1.0))
        out = evaluate(LL4, p, np.array([0.0, 1.0, np.inf]))
        assert out.shape == (3,)
        assert out[0] == pytest.approx(1.0)
        assert out[1] == pytest.approx(0.5)
        assert out[2] == pytest.approx(0.0)

    @settings(max_examples=60, deadline=None)
    @given(params=params_strategy(LL5))
    def test_monotone_between_asymptotes(self, params):
        doses = np.geomspace(1e-4 * params.e, 1e4 * params.e, 200)
        vals = evaluate(LL5, params, doses)
        diffs = np.diff(vals)
        assert np.all(diffs <= 1e-9) or np.all(diffs >= -1e-9)
        lo = min(params.c, params.d) - 1e-9
        hi = max(params.c, params.d) + 1e-9
        assert np.all((vals >= lo) & (vals <= hi))


class TestAsymptotes:
    def test_ll4_positive_b(self):
        assert asymptotes(LL4, CurveParams(LL4, (1, 0, 1, 1))) == (1.0, 0.0)

    def test_table1_scale(self):
        assert asymptotes(LL3, CurveParams(LL3, (5, 2000, 0.5))) == (2000.0, 0.0)

    def test_sign_flip_swaps_limits(self):
        assert asymptotes(LL4, CurveParams(LL4, (-1, 0, 1, 1))) == (0.0, 1.0)


class TestConditionalEd:
    def test_ed50_equals_inflection(self):
        p = CurveParams(LL4, (1.0, 0.0, 1.0, 2.0))
        assert conditional_ed(LL4, p, 0.5) == pytest.approx(2.0, rel=1e-14)

    def test_closed_form_ed90(self):
        p = CurveParams(LL4, (2.0, 0.0, 1.0, 0.5))
        assert conditional_ed(LL4, p, 0.9) == pytest.approx(1.5, rel=1e-14)

    def test_ll5_closed_form(self):
        p = CurveParams(LL5, (1.0, 0.0, 1.0, 1.0, 2.0))
        assert conditional_ed(LL5, p, 0.75) == pytest.approx(1.0, rel=1e-14)

    def test_alpha_domain(self):
        p = CurveParams(LL4, (1.0, 0.0, 1.0, 1.0))
        for alpha in (0.0, 1.0, -0.2, 1.3):
            with pytest.raises(DomainError):
                conditional_ed(LL4, p, alpha)

    @settings(max_examples=80, deadline=None)
    @given(params=params_strategy(LL5),
           alpha=st.floats(0.01, 0.99))
    def test_inverse_regression_round_trip(self, params, alpha):
        if abs(params.d - params.c) < 1e-6:
            return
        ed = conditional_ed(LL5, params, alpha)
        f_zero, f_inf = asymptotes(LL5, params)
        achieved = (evaluate(LL5, params, ed) - f_zero) / (f_inf - f_zero)
        assert achieved == pytest.approx(alpha, abs=1e-12)

    def test_strictly_increasing_in_alpha(self):
        p = CurveParams(LL4, (2.0, 0.0, 1.0, 0.5))
        eds = [conditional_ed(LL4, p, a) for a in np.linspace(0.05, 0.95, 15)]
        assert np.all(np.diff(eds) > 0)


class TestGradient:
    def test_upper_asymptote_weight_at_inflection(self):
        p = CurveParams(LL4, (1.0, 0.0, 1.0, 1.0))
        grad = gradient_params(LL4, p, 1.0)
        k = LL4.parameter_names.index("d")
        assert grad[k] == pytest.approx(0.5, abs=1e-8)

    def test_dose_zero_limit_weights(self):
        p = CurveParams(LL4, (2.0, 1.0, 3.0, 0.5))
        grad = gradient_params(LL4, p, 0.0)
        assert grad[LL4.parameter_names.index("c")] == pytest.approx(0.0, abs=1e-10)
        assert grad[LL4.parameter_names.index("d")] == pytest.approx(1.0, abs=1e-10)

    def test_matches_coarse_finite_difference_oracle(self):
        rng = np.random.default_rng(12)
        h0 = np.cbrt(np.finfo(float).eps)
        for family in (LL3, LL4, LL5):
            for _ in range(20):
                by_name = {"b": rng.uniform(0.5, 4) * rng.choice([-1, 1]),
                           "c": rng.uniform(-5, 5), "d": rng.uniform(6, 15),
                           "e": rng.uniform(0.2, 5), "f": rng.uniform(0.3, 3)}
                vals = tuple(by_name[n] for n in family.parameter_names)
                params = CurveParams(family, vals)
                dose = rng.uniform(0.05, 10)
                grad = gradient_params(family, params, dose)
                base = np.array(vals)
                for k in range(family.parameter_count):
                    h = 10 * h0 * max(1.0, abs(base[k]))
                    hi, lo = base.copy(), base.copy()
                    hi[k] += h
                    lo[k] -= h
                    oracle = (eval_values(family, dose, hi)
                              - eval_values(family, dose, lo)) / (2 * h)
                    scale = max(1.0, abs(oracle))
                    assert grad[k] == pytest.approx(float(oracle),
                                                    abs=1e-5 * scale)


class TestSelfStart:
    def test_refinement_recovers_noiseless_truth(self):
        truth = CurveParams(LL4, (1.0, 0.0, 1.0, 1.0))
        doses = np.geomspace(0.01, 3.0, 10)
        responses = evaluate(LL4, truth, doses)
        rows = [(float(x), float(y), "a", "1") for x, y in zip(doses, responses)]
        fit = fit_nls(from_rows(rows), LL4)
        assert np.allclose(fit.beta_hat, truth.as_array(), atol=1e-6)

    def test_constant_responses_degenerate(self):
        doses = np.geomspace(0.01, 3.0, 10)
        with pytest.raises(DegenerateDataError):
            self_start(LL4, doses, np.full(10, 5.0))

    def test_too_few_distinct_doses(self):
        with pytest.raises(DegenerateDataError):
            self_start(LL4, np.array([1.0, 1.0, 2.0, 2.0, 3.0]),
                       np.array([5.0, 5.1, 3.0, 3.2, 1.0]))

    def test_decreasing_data_sign_convention(self):
        rng = np.random.default_rng(3)
        truth = CurveParams(LL4, (1.6, 2.0, 9.0, 0.8))
        doses = np.repeat(np.geomspace(0.01, 20.0, 8), 3)
        responses = evaluate(LL4, truth, doses) + rng.normal(0, 0.15, doses.size)
        start = self_start(LL4, doses, responses)
        assert start.d >= start.c
        assert start.b > 0
