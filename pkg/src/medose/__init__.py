"""Mixed-effects dose-response modelling with marginalized inference.

Fits hierarchical log-logistic models to clustered dose-response data and
derives population-average predictions, effective doses and relative
potencies by Gauss-Hermite quadrature over the estimated random-effects
distribution, with delta-method standard errors.  NLS and
compound-symmetry GNLS comparators and a replicated simulation harness
are included.
"""

__version__ = "0.1.0"

from .data import Dataset, DatasetSummary, Observation, from_rows, load_csv, summarize, write_csv
from .errors import MedoseError
from .fitting import (FitResult, FixedEffectsSpec, RandomEffectsSpec,
                      curve_params, fit_gnls, fit_nls, loglik_gnls, loglik_nls)
from .inference import (EDTable, RelativePotency, ed_estimate, ed_table,
                        predict_curves, relative_potency,
                        relative_potency_table, wald_ci)
from .marginal import (DerivedEstimate, delta_method, marginal_predict,
                       marginal_values, marginalized_ed, mc_marginal_predict)
from .models import (LL3, LL4, LL5, CurveParams, ModelFamily, asymptotes,
                     conditional_ed, evaluate, family_from_name,
                     gradient_params, self_start)
from .nlme import fit_nlme, loglik_nlme
from .quadrature import QuadratureGrid, build_grid, gauss_hermite_1d, transform_nodes
from .simulate import (Scenario, StudySummary, generate_dataset, mc_true_ed,
                       mc_truth, parse_scenario_config, run_study,
                       summary_to_csv)

__all__ = [
    "__version__",
    "Dataset", "DatasetSummary", "Observation", "from_rows", "load_csv",
    "summarize", "write_csv",
    "MedoseError",
    "FitResult", "FixedEffectsSpec", "RandomEffectsSpec", "curve_params",
    "fit_gnls", "fit_nls", "fit_nlme", "loglik_gnls", "loglik_nls",
    "loglik_nlme",
    "EDTable", "RelativePotency", "ed_estimate", "ed_table", "predict_curves",
    "relative_potency", "relative_potency_table", "wald_ci",
    "DerivedEstimate", "delta_method", "marginal_predict", "marginal_values",
    "marginalized_ed", "mc_marginal_predict",
    "LL3", "LL4", "LL5", "CurveParams", "ModelFamily", "asymptotes",
    "conditional_ed", "evaluate", "family_from_name", "gradient_params",
    "self_start",
    "QuadratureGrid", "build_grid", "gauss_hermite_1d", "transform_nodes",
    "Scenario", "StudySummary", "generate_dataset", "mc_true_ed", "mc_truth",
    "parse_scenario_config", "run_study", "summary_to_csv",
]
