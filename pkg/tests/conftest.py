import numpy as np
import pytest

from medose import (LL3, FixedEffectsSpec, RandomEffectsSpec, Scenario,
                    generate_dataset)
from medose.fitting import FitResult, build_layout
from medose.nlme import fit_nlme
from medose.quadrature import covariance_root


def make_nlme_result(family, beta, g_matrix, random_names, sigma=100.0,
                     vcov=None, curve_ids=("1",), fixed_spec=None,
                     structure="unstructured"):
    """Hand-built mixed-fit result for exercising the marginalization
    machinery at known parameters."""
    fixed_spec = fixed_spec or FixedEffectsSpec()
    layout = build_layout(family, fixed_spec, curve_ids)
    beta = np.asarray(beta, dtype=float)
    p = beta.size
    return FitResult(
        estimator="NLME", family=family, fixed_spec=fixed_spec,
        random_spec=RandomEffectsSpec(tuple(random_names), structure),
        beta_hat=beta,
        vcov_beta=np.eye(p) * 1e-4 if vcov is None else np.asarray(vcov, float),
        omega_hat=covariance_root(np.asarray(g_matrix, dtype=float)),
        sigma_hat=sigma, rho_hat=None, loglik=0.0, converged=True,
        iterations=1, beta_names=layout.names, curve_ids=layout.curve_ids)


@pytest.fixture(scope="session")
def table1_scenario():
    return Scenario()


@pytest.fixture(scope="session")
def truth_fit(table1_scenario):
    """Mixed-fit result pinned at the simulation scenario's true values."""
    sc = table1_scenario
    return make_nlme_result(sc.family, sc.beta(), sc.g_matrix(),
                            sc.random_parameters)


@pytest.fixture(scope="session")
def small_dataset(table1_scenario):
    return generate_dataset(table1_scenario, 6, seed=11)


@pytest.fixture(scope="session")
def small_nlme_fit(small_dataset):
    return fit_nlme(small_dataset, LL3, FixedEffectsSpec(),
                    RandomEffectsSpec(("b", "d", "e"), "unstructured"))
