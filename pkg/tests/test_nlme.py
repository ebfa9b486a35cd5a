"""Tests for the Laplace-approximate mixed-effects estimator."""

import numpy as np
import pytest

from medose import (LL3, LL4, CurveParams, FixedEffectsSpec, RandomEffectsSpec,
                    Scenario, evaluate, fit_nls, generate_dataset, loglik_nls,
                    loglik_nlme)
from medose.data import from_rows
from medose.errors import DegenerateDataError, DomainError
from medose.fitting import FitResult
from medose.nlme import fit_nlme


def cloned_cluster_dataset(m=5, seed=0, sigma=0.3):
    """Identical clusters (noise included): zero between-cluster variability."""
    rng = np.random.default_rng(seed)
    doses = np.geomspace(0.01, 3.0, 10)
    mu = evaluate(LL4, CurveParams(LL4, (1.0, 0.0, 10.0, 0.7)), doses)
    y = mu + rng.normal(0, sigma, doses.size)
    rows = []
    for c in range(m):
        rows += [(float(x), float(v), f"c{c}", "1") for x, v in zip(doses, y)]
    return from_rows(rows)


class TestDegenerate:
    def test_identical_clusters_collapse_to_nls(self):
        ds = cloned_cluster_dataset()
        fit = fit_nlme(ds, LL4, FixedEffectsSpec(),
                       RandomEffectsSpec(("b", "d", "e"), "diagonal"))
        nls = fit_nls(ds, LL4)
        beta_scale = np.abs(nls.beta_hat)
        assert np.all(np.diag(fit.g_hat)
                      < 1e-3 * np.maximum(beta_scale[[0, 2, 3]], 1.0))
        assert np.allclose(fit.beta_hat, nls.beta_hat,
                           atol=1e-4 * np.maximum(beta_scale, 1.0))

    def test_zero_covariance_reproduces_nls_objective(self):
        ds = generate_dataset(Scenario(), 5, seed=13)
        nls = fit_nls(ds, LL3)
        spec = RandomEffectsSpec(("b", "d", "e"), "unstructured")
        pinned = loglik_nlme(ds, LL3, FixedEffectsSpec(), spec, nls.beta_hat,
                             np.zeros((3, 3)), nls.sigma_hat)
        direct = loglik_nls(ds, LL3, FixedEffectsSpec(), nls.beta_hat,
                            nls.sigma_hat)
        assert pinned == pytest.approx(direct, abs=1e-10)

    def test_needs_two_clusters(self):
        ds = cloned_cluster_dataset(m=1)
        with pytest.raises(DegenerateDataError):
            fit_nlme(ds, LL4, FixedEffectsSpec(),
                     RandomEffectsSpec(("d",), "diagonal"))

    def test_requires_random_spec(self):
        ds = cloned_cluster_dataset()
        with pytest.raises(DomainError):
            fit_nlme(ds, LL4, FixedEffectsSpec(), None)


class TestEstimation:
    def test_loglik_matches_standalone_evaluator(self, small_nlme_fit,
                                                 small_dataset):
        fit = small_nlme_fit
        assert fit.converged
        independent = loglik_nlme(small_dataset, LL3, FixedEffectsSpec(),
                                  fit.random_spec, fit.beta_hat,
                                  fit.omega_hat, fit.sigma_hat)
        assert fit.loglik == pytest.approx(independent, abs=1e-8)

    def test_smoke_recovery_single_replicate(self, small_nlme_fit):
        fit = small_nlme_fit
        # loose single-replicate sanity at m=6; the replicated recovery
        # check lives in the acceptance suite
        assert 2.0 < fit.beta_hat[0] < 9.0
        assert 1200.0 < fit.beta_hat[1] < 2800.0
        assert 0.3 < fit.beta_hat[2] < 0.8
        assert 40.0 < fit.sigma_hat < 250.0

    def test_vcov_symmetric_nonnegative(self, small_nlme_fit):
        vcov = small_nlme_fit.vcov_beta
        assert np.abs(vcov - vcov.T).max() < 1e-12
        assert np.all(np.diag(vcov) >= 0)

    def test_eblups_shape_and_shrinkage(self, small_nlme_fit, small_dataset):
        fit = small_nlme_fit
        assert fit.ranef_modes.shape == (6, 3)
        assert set(fit.cluster_ids) == set(small_dataset.cluster_ids)
        sds = np.sqrt(np.diag(fit.g_hat))
        for j, sd in enumerate(sds):
            if sd > 1e-6:
                assert np.abs(fit.ranef_modes[:, j]).max() < 6.0 * sd

    def test_collapsing_component_reported_not_pruned(self):
        # strong identification (many clusters, small residual noise) so the
        # truly-zero components are sharply resolved at the boundary
        sc = Scenario(random_sd={"b": 0.0, "d": 500.0, "e": 0.0},
                      correlation="diagonal", residual_sd=25.0)
        ds = generate_dataset(sc, 25, seed=31)
        fit = fit_nlme(ds, LL3, FixedEffectsSpec(),
                       RandomEffectsSpec(("b", "d", "e"), "diagonal"))
        assert fit.converged
        sds = np.sqrt(np.diag(fit.g_hat))
        assert sds[1] > 100.0                    # the real component survives
        assert sds[0] < 0.1 * abs(fit.beta_hat[0])
        assert sds[2] < 0.1 * abs(fit.beta_hat[2])

    def test_serialization_round_trip(self, small_nlme_fit, tmp_path):
        path = tmp_path / "nlme.json"
        small_nlme_fit.save(str(path))
        back = FitResult.load(str(path))
        assert back.estimator == "NLME"
        assert back.random_spec == small_nlme_fit.random_spec
        assert np.array_equal(back.omega_hat, small_nlme_fit.omega_hat)
        assert np.array_equal(back.ranef_modes, small_nlme_fit.ranef_modes)
        assert back.cluster_curves == small_nlme_fit.cluster_curves

    def test_adaptive_quadrature_refinement_close_to_laplace(self):
        sc = Scenario(random_sd={"d": 500.0}, correlation="diagonal")
        ds = generate_dataset(sc, 6, seed=17)
        spec = RandomEffectsSpec(("d",), "diagonal")
        lap = fit_nlme(ds, LL3, FixedEffectsSpec(), spec)
        agq = fit_nlme(ds, LL3, FixedEffectsSpec(), spec, agq_points=7)
        assert agq.converged
        # the random effect is linear in the mean, so the integral is close
        # to Gaussian and the refinement barely moves the estimates
        assert np.allclose(agq.beta_hat, lap.beta_hat, rtol=5e-3)

    def test_adaptive_quadrature_dimension_guard(self):
        ds = generate_dataset(Scenario(), 4, seed=1)
        with pytest.raises(DomainError):
            fit_nlme(ds, LL3, FixedEffectsSpec(),
                     RandomEffectsSpec(("b", "d", "e"), "diagonal"),
                     agq_points=5)
