"""Tests for the NLS and GNLS estimators and the fit-result plumbing."""

import io

import numpy as np
import pytest

from medose import (LL3, LL4, CurveParams, FixedEffectsSpec, Scenario,
                    curve_params, evaluate, fit_gnls, fit_nls,
                    generate_dataset, loglik_gnls, loglik_nls)
from medose.data import from_rows
from medose.errors import DegenerateDataError, UnknownCurveError
from medose.fitting import FitResult, build_layout
from medose.models import eval_values


def noiseless_ll4(truth=(1.0, 0.0, 1.0, 1.0), n=10, lo=0.01, hi=3.0,
                  cluster="a", curve="1"):
    params = CurveParams(LL4, truth)
    doses = np.geomspace(lo, hi, n)
    responses = evaluate(LL4, params, doses)
    return from_rows([(float(x), float(y), cluster, curve)
                      for x, y in zip(doses, responses)])


class TestNls:
    def test_noiseless_round_trip(self):
        fit = fit_nls(noiseless_ll4(), LL4)
        assert fit.converged
        assert np.allclose(fit.beta_hat, [1.0, 0.0, 1.0, 1.0], atol=1e-6)
        assert fit.sigma_hat < 1e-7

    def test_loglik_matches_standalone_evaluator(self):
        sc = Scenario()
        ds = generate_dataset(sc, 4, seed=2)
        fit = fit_nls(ds, LL3)
        independent = loglik_nls(ds, LL3, FixedEffectsSpec(), fit.beta_hat,
                                 fit.sigma_hat)
        assert fit.loglik == pytest.approx(independent, abs=1e-8)

    def test_vcov_symmetric_nonnegative_diagonal(self):
        ds = generate_dataset(Scenario(), 4, seed=8)
        fit = fit_nls(ds, LL3)
        assert np.abs(fit.vcov_beta - fit.vcov_beta.T).max() < 1e-12
        assert np.all(np.diag(fit.vcov_beta) >= 0)

    def test_separate_curves_equal_independent_fits(self):
        doses = np.geomspace(0.01, 3.0, 10)
        rows = []
        truths = {"x": (1.0, 0.0, 1.0, 0.5), "y": (2.0, 0.2, 2.0, 1.2)}
        for curve, truth in truths.items():
            mu = evaluate(LL4, CurveParams(LL4, truth), doses)
            rows += [(float(x), float(v), "a", curve) for x, v in zip(doses, mu)]
        ds = from_rows(rows)
        joint = fit_nls(ds, LL4, FixedEffectsSpec.all_separate(LL4))
        layout = joint.layout
        for curve in ("x", "y"):
            sub = ds.subset(ds.curve_index[curve])
            alone = fit_nls(sub, LL4)
            assert np.allclose(layout.params_for(joint.beta_hat, curve).as_array(),
                               alone.beta_hat, rtol=1e-6, atol=1e-8)

    def test_constant_responses_degenerate(self):
        ds = from_rows([(float(x), 5.0, "a", "1")
                        for x in np.geomspace(0.01, 3, 8)])
        with pytest.raises(DegenerateDataError):
            fit_nls(ds, LL4)


class TestGnls:
    def test_uncorrelated_data_recovers_zero_rho(self):
        sc = Scenario(random_sd={"b": 0.0, "d": 0.0, "e": 0.0})
        ds = generate_dataset(sc, 10, seed=4)
        fit = fit_gnls(ds, LL3)
        nls = fit_nls(ds, LL3)
        assert fit.converged
        assert abs(fit.rho_hat) < 0.15
        assert np.allclose(fit.beta_hat, nls.beta_hat, rtol=0.02)

    def test_profile_at_zero_matches_independent_gaussian_loglik(self):
        ds = generate_dataset(Scenario(), 5, seed=9)
        fit = fit_nls(ds, LL3)
        same = loglik_gnls(ds, LL3, FixedEffectsSpec(), fit.beta_hat,
                           fit.sigma_hat, rho=0.0)
        assert same == pytest.approx(fit.loglik, abs=1e-8)

    def test_loglik_matches_standalone_evaluator(self):
        ds = generate_dataset(Scenario(), 6, seed=21)
        fit = fit_gnls(ds, LL3)
        independent = loglik_gnls(ds, LL3, FixedEffectsSpec(), fit.beta_hat,
                                  fit.sigma_hat, fit.rho_hat)
        assert fit.loglik == pytest.approx(independent, abs=1e-8)

    def test_cluster_effect_induces_positive_rho(self):
        # additive upper-asymptote random effect; oracle correlation from a
        # large Monte Carlo sample of the induced marginal covariance
        sc = Scenario(random_sd={"d": 500.0}, correlation="diagonal")
        doses = sc.dose_levels()
        gen = np.random.Generator(np.random.Philox(key=123))
        d_draws = 2000.0 + 500.0 * gen.standard_normal((100_000, 1))
        gshape = eval_values(LL3, doses, np.array([5.0, 1.0, 0.5]))
        y = d_draws * gshape + 100.0 * gen.standard_normal((100_000, doses.size))
        centered = y - y.mean(axis=0)
        cov = centered.T @ centered / (y.shape[0] - 1)
        off = cov[~np.eye(doses.size, dtype=bool)]
        rho_oracle = off.mean() / np.diag(cov).mean()

        rhos = []
        for rep in range(50):
            ds = generate_dataset(sc, 20, seed=1000 + rep)
            rhos.append(fit_gnls(ds, LL3).rho_hat)
        median_rho = float(np.median(rhos))
        assert median_rho > 0.05
        assert abs(median_rho - rho_oracle) <= 0.1

    def test_needs_a_multi_observation_cluster(self):
        rows = [(float(x), float(-x), f"c{i}", "1")
                for i, x in enumerate(np.geomspace(0.01, 3, 8))]
        with pytest.raises(DegenerateDataError):
            fit_gnls(from_rows(rows), LL3)

    def test_reports_single_correlation(self):
        ds = generate_dataset(Scenario(), 5, seed=3)
        fit = fit_gnls(ds, LL3)
        assert fit.rho_hat is not None
        assert fit.omega_hat is None
        assert -1.0 / 9.0 < fit.rho_hat < 1.0


class TestCurveParams:
    def test_single_curve_ordering(self):
        ds = generate_dataset(Scenario(), 4, seed=5)
        fit = fit_nls(ds, LL3)
        cp = curve_params(fit, "1")
        assert cp.values == tuple(fit.beta_hat)
        assert cp.family is LL3

    def test_shared_curves_identical(self):
        ds = noiseless_ll4()
        rows = list((o.dose, o.response, o.cluster_id, "t2")
                    for o in ds.observations)
        both = from_rows([(o.dose, o.response, o.cluster_id, o.curve_id)
                          for o in ds.observations] + rows)
        fit = fit_nls(both, LL4)
        assert curve_params(fit, "1").values == curve_params(fit, "t2").values

    def test_two_treatment_eight_parameters(self):
        rng = np.random.default_rng(7)
        doses = np.geomspace(0.02, 20.0, 8)
        rows = []
        for curve, truth in (("bentazon", (1.2, 0.5, 10.0, 1.4)),
                             ("diuron", (1.0, 0.3, 9.0, 0.2))):
            mu = evaluate(LL4, CurveParams(LL4, truth), doses)
            y = mu + rng.normal(0, 0.05, doses.size)
            rows += [(float(x), float(v), "a1", curve)
                     for x, v in zip(doses, y)]
        fit = fit_nls(from_rows(rows), LL4, FixedEffectsSpec.all_separate(LL4))
        assert len(fit.beta_hat) == 8
        pa = curve_params(fit, "bentazon").as_array()
        pb = curve_params(fit, "diuron").as_array()
        assert not np.allclose(pa, pb)

    def test_unknown_curve(self):
        fit = fit_nls(noiseless_ll4(), LL4)
        with pytest.raises(UnknownCurveError):
            curve_params(fit, "nope")


class TestSerialization:
    def test_json_round_trip(self, tmp_path):
        ds = generate_dataset(Scenario(), 5, seed=6)
        fit = fit_gnls(ds, LL3)
        path = tmp_path / "fit.json"
        fit.save(str(path))
        back = FitResult.load(str(path))
        assert back.estimator == "GNLS"
        assert back.family is LL3
        assert np.array_equal(back.beta_hat, fit.beta_hat)
        assert np.array_equal(back.vcov_beta, fit.vcov_beta)
        assert back.rho_hat == fit.rho_hat
        assert back.sigma_hat == fit.sigma_hat
        assert back.loglik == fit.loglik
        assert back.curve_ids == fit.curve_ids
        assert back.dose_range == fit.dose_range

    def test_stream_round_trip(self):
        fit = fit_nls(noiseless_ll4(), LL4)
        buf = io.StringIO()
        fit.save(buf)
        buf.seek(0)
        back = FitResult.load(buf)
        assert np.array_equal(back.beta_hat, fit.beta_hat)
        assert back.omega_hat is None


class TestLayout:
    def test_names_and_log_scale(self):
        layout = build_layout(LL4, FixedEffectsSpec({"e": "separate"}),
                              ("a", "b"))
        assert layout.names == ("b", "c", "d", "e:a", "e:b")
        assert layout.log_scale.tolist() == [False, False, False, True, True]
        theta = layout.to_optimizer(np.array([1.0, 0.0, 2.0, 0.5, 4.0]))
        assert theta[3] == pytest.approx(np.log(0.5))
        back = layout.from_optimizer(theta)
        assert back == pytest.approx([1.0, 0.0, 2.0, 0.5, 4.0])
