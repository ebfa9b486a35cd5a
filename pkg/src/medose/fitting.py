"""Model specification, fit results, and the NLS / GNLS estimators.

Three estimators share one specification layer:

* NLS ignores clustering entirely (independent homoscedastic errors).
* GNLS keeps a marginal mean curve but models within-cluster correlation
  through a compound-symmetry residual structure.
* NLME (in :mod:`medose.nlme`) puts normal random effects on chosen
  parameters and maximizes a Laplace-approximate marginal likelihood.

All three produce a :class:`FitResult` that serializes to JSON, so derived
inference can run on stored fits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from . import models
from .data import Dataset
from .errors import (DegenerateDataError, DomainError, RankDeficiencyError,
                     UnknownCurveError)
from .models import CurveParams, ModelFamily, family_from_name

SHARED = "shared"
SEPARATE = "separate"

_FD_STEP = float(np.cbrt(np.finfo(float).eps))


@dataclass(frozen=True)
class FixedEffectsSpec:
    """Per-parameter sharing map across curves.

    Parameters marked ``separate`` get one fixed-effect coefficient per
    curve (dummy coding); parameters marked ``shared`` (the default for
    anything unlisted) get a single coefficient common to all curves.
    """

    sharing: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, mode in self.sharing.items():
            if mode not in (SHARED, SEPARATE):
                raise DomainError(
                    f"sharing for {name!r} must be '{SHARED}' or '{SEPARATE}', "
                    f"got {mode!r}")

    def mode(self, name: str) -> str:
        return self.sharing.get(name, SHARED)

    @classmethod
    def all_separate(cls, family: ModelFamily) -> "FixedEffectsSpec":
        return cls({name: SEPARATE for name in family.parameter_names})


@dataclass(frozen=True)
class RandomEffectsSpec:
    """Which model parameters carry cluster random effects, and the
    covariance structure of those effects."""

    random_parameters: tuple[str, ...]
    covariance_structure: str = "unstructured"

    def __post_init__(self) -> None:
        if not self.random_parameters:
            raise DomainError("random_parameters must be non-empty")
        if self.covariance_structure not in ("diagonal", "unstructured"):
            raise DomainError("covariance_structure must be 'diagonal' or "
                              f"'unstructured', got {self.covariance_structure!r}")

    @property
    def dimension(self) -> int:
        return len(self.random_parameters)

    def n_covariance_params(self) -> int:
        r = self.dimension
        return r if self.covariance_structure == "diagonal" else r * (r + 1) // 2


@dataclass(frozen=True)
class BetaLayout:
    """Mapping between the flat fixed-effects vector and per-curve
    parameter vectors."""

    family: ModelFamily
    curve_ids: tuple[str, ...]
    names: tuple[str, ...]          # one entry per beta coefficient
    index: np.ndarray               # (n_curves, q) positions into beta
    log_scale: np.ndarray           # (p,) True where optimized as log(beta)

    @property
    def dimension(self) -> int:
        return len(self.names)

    def curve_matrix(self, beta: np.ndarray) -> np.ndarray:
        """Per-curve natural parameters, shape (..., n_curves, q)."""
        beta = np.asarray(beta, dtype=float)
        return beta[..., self.index]

    def params_for(self, beta: np.ndarray, curve_id: str) -> CurveParams:
        if curve_id not in self.curve_ids:
            raise UnknownCurveError(curve_id)
        row = self.index[self.curve_ids.index(curve_id)]
        vals = np.asarray(beta, dtype=float)[row]
        return CurveParams(self.family, tuple(vals))

    def to_optimizer(self, beta: np.ndarray) -> np.ndarray:
        theta = np.array(beta, dtype=float)
        theta[self.log_scale] = np.log(theta[self.log_scale])
        return theta

    def from_optimizer(self, theta: np.ndarray) -> np.ndarray:
        beta = np.array(theta, dtype=float)
        beta[self.log_scale] = np.exp(beta[self.log_scale])
        return beta


def build_layout(family: ModelFamily, fixed_spec: FixedEffectsSpec,
                 curve_ids: Sequence[str]) -> BetaLayout:
    curve_ids = tuple(curve_ids)
    names: list[str] = []
    index = np.zeros((len(curve_ids), family.parameter_count), dtype=int)
    log_scale: list[bool] = []
    for k, pname in enumerate(family.parameter_names):
        if fixed_spec.mode(pname) == SHARED:
            pos = len(names)
            names.append(pname)
            log_scale.append(pname in models.POSITIVE_PARAMS)
            index[:, k] = pos
        else:
            for ci, cid in enumerate(curve_ids):
                pos = len(names)
                names.append(f"{pname}:{cid}")
                log_scale.append(pname in models.POSITIVE_PARAMS)
                index[ci, k] = pos
    return BetaLayout(family=family, curve_ids=curve_ids, names=tuple(names),
                      index=index, log_scale=np.array(log_scale, dtype=bool))


@dataclass(eq=False)
class FitResult:
    """Common result record for all estimators.

    ``omega_hat`` is the lower Cholesky factor of the estimated
    random-effects covariance (NLME only); ``rho_hat`` the within-cluster
    correlation (GNLS only).  Extra bookkeeping fields (curve and cluster
    identifiers, EBLUP modes, dose range) allow derived inference to run
    from a stored fit without the original data.
    """

    estimator: str
    family: ModelFamily
    fixed_spec: FixedEffectsSpec
    random_spec: RandomEffectsSpec | None
    beta_hat: np.ndarray
    vcov_beta: np.ndarray
    omega_hat: np.ndarray | None
    sigma_hat: float
    rho_hat: float | None
    loglik: float
    converged: bool
    iterations: int
    beta_names: tuple[str, ...]
    curve_ids: tuple[str, ...]
    cluster_ids: tuple[str, ...] = ()
    ranef_modes: np.ndarray | None = None
    cluster_curves: dict[str, tuple[str, ...]] = field(default_factory=dict)
    n_obs: int = 0
    dose_range: tuple[float, float] = (0.0, 0.0)
    zero_dose_present: bool = False
    fit_warnings: tuple[str, ...] = ()

    @property
    def layout(self) -> BetaLayout:
        return build_layout(self.family, self.fixed_spec, self.curve_ids)

    @property
    def g_hat(self) -> np.ndarray | None:
        if self.omega_hat is None:
            return None
        return self.omega_hat @ self.omega_hat.T

    def curve_params(self, curve_id: str) -> CurveParams:
        return self.layout.params_for(self.beta_hat, curve_id)

    def ranef_for(self, cluster_id: str) -> np.ndarray:
        if self.ranef_modes is None:
            raise DomainError("fit has no random effects")
        if cluster_id not in self.cluster_ids:
            raise UnknownCurveError(cluster_id)
        return self.ranef_modes[self.cluster_ids.index(cluster_id)]

    def to_json_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "family": self.family.variant,
            "fixed_spec": {name: self.fixed_spec.mode(name)
                           for name in self.family.parameter_names},
            "random_spec": None if self.random_spec is None else {
                "random_parameters": list(self.random_spec.random_parameters),
                "covariance_structure": self.random_spec.covariance_structure,
            },
            "beta_hat": self.beta_hat.tolist(),
            "vcov_beta": self.vcov_beta.tolist(),
            "omega_hat": None if self.omega_hat is None else self.omega_hat.tolist(),
            "sigma_hat": self.sigma_hat,
            "rho_hat": self.rho_hat,
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "beta_names": list(self.beta_names),
            "curve_ids": list(self.curve_ids),
            "cluster_ids": list(self.cluster_ids),
            "ranef_modes": None if self.ranef_modes is None else self.ranef_modes.tolist(),
            "cluster_curves": {k: list(v) for k, v in self.cluster_curves.items()},
            "n_obs": self.n_obs,
            "dose_range": list(self.dose_range),
            "zero_dose_present": self.zero_dose_present,
            "fit_warnings": list(self.fit_warnings),
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    def save(self, target: str | IO[str]) -> None:
        if hasattr(target, "write"):
            target.write(self.to_json())  # type: ignore[union-attr]
            return
        with open(target, "w", encoding="utf-8") as handle:
            handle.write(self.to_json())

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FitResult":
        family = family_from_name(doc["family"])
        rs = doc.get("random_spec")
        random_spec = None if rs is None else RandomEffectsSpec(
            tuple(rs["random_parameters"]), rs["covariance_structure"])
        omega = doc.get("omega_hat")
        ranef = doc.get("ranef_modes")
        return cls(
            estimator=doc["estimator"],
            family=family,
            fixed_spec=FixedEffectsSpec(dict(doc["fixed_spec"])),
            random_spec=random_spec,
            beta_hat=np.array(doc["beta_hat"], dtype=float),
            vcov_beta=np.array(doc["vcov_beta"], dtype=float),
            omega_hat=None if omega is None else np.array(omega, dtype=float),
            sigma_hat=float(doc["sigma_hat"]),
            rho_hat=None if doc.get("rho_hat") is None else float(doc["rho_hat"]),
            loglik=float(doc["loglik"]),
            converged=bool(doc["converged"]),
            iterations=int(doc["iterations"]),
            beta_names=tuple(doc["beta_names"]),
            curve_ids=tuple(doc["curve_ids"]),
            cluster_ids=tuple(doc.get("cluster_ids", ())),
            ranef_modes=None if ranef is None else np.array(ranef, dtype=float),
            cluster_curves={k: tuple(v)
                            for k, v in doc.get("cluster_curves", {}).items()},
            n_obs=int(doc.get("n_obs", 0)),
            dose_range=tuple(doc.get("dose_range", (0.0, 0.0))),
            zero_dose_present=bool(doc.get("zero_dose_present", False)),
            fit_warnings=tuple(doc.get("fit_warnings", ())),
        )

    @classmethod
    def load(cls, source: str | IO[str]) -> "FitResult":
        if hasattr(source, "read"):
            return cls.from_json_dict(json.load(source))  # type: ignore[arg-type]
        with open(source, "r", encoding="utf-8") as handle:
            return cls.from_json_dict(json.load(handle))


def curve_params(fit: FitResult, curve_id: str) -> CurveParams:
    """Assemble the natural parameter vector for one curve of a fit."""
    return fit.curve_params(curve_id)


# ---------------------------------------------------------------------------
# Shared problem preparation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Problem:
    dataset: Dataset
    family: ModelFamily
    fixed_spec: FixedEffectsSpec
    layout: BetaLayout
    doses: np.ndarray               # (n,)
    responses: np.ndarray           # (n,)
    curve_codes: np.ndarray         # (n,) index into layout.curve_ids
    cluster_codes: np.ndarray       # (n,) index into cluster_ids
    cluster_ids: tuple[str, ...]
    cluster_sizes: np.ndarray       # (m,)

    @property
    def n_obs(self) -> int:
        return self.doses.size

    def mean_values(self, beta: np.ndarray) -> np.ndarray:
        per_curve = self.layout.curve_matrix(beta)          # (K, q)
        per_obs = per_curve[self.curve_codes]               # (n, q)
        return models.eval_values(self.family, self.doses, per_obs)

    def dose_metadata(self) -> tuple[tuple[float, float], bool]:
        pos = self.doses[self.doses > 0]
        zero_present = bool(np.any(self.doses == 0))
        if pos.size == 0:
            return (0.0, 0.0), zero_present
        return (float(pos.min()), float(pos.max())), zero_present


def _prepare(dataset: Dataset, family: ModelFamily,
             fixed_spec: FixedEffectsSpec) -> _Problem:
    curve_ids = tuple(dataset.curve_ids)
    cluster_ids = tuple(dataset.cluster_ids)
    layout = build_layout(family, fixed_spec, curve_ids)
    doses = np.array(dataset.doses(), dtype=float)
    responses = np.array(dataset.responses(), dtype=float)
    curve_pos = {cid: k for k, cid in enumerate(curve_ids)}
    cluster_pos = {cid: k for k, cid in enumerate(cluster_ids)}
    curve_codes = np.array([curve_pos[o.curve_id] for o in dataset.observations])
    cluster_codes = np.array([cluster_pos[o.cluster_id]
                              for o in dataset.observations])
    cluster_sizes = np.bincount(cluster_codes, minlength=len(cluster_ids))

    n_separate = sum(1 for name in family.parameter_names
                     if fixed_spec.mode(name) == SEPARATE)
    if np.unique(doses).size < family.parameter_count:
        raise DegenerateDataError(
            f"need at least {family.parameter_count} distinct dose levels")
    for cid in curve_ids:
        cdoses = doses[curve_codes == curve_pos[cid]]
        if np.unique(cdoses).size < max(2, n_separate):
            raise DegenerateDataError(
                f"curve {cid!r} has too few distinct dose levels")
    if doses.size <= layout.dimension:
        raise DegenerateDataError("more fixed-effect parameters than observations")
    return _Problem(dataset=dataset, family=family, fixed_spec=fixed_spec,
                    layout=layout, doses=doses, responses=responses,
                    curve_codes=curve_codes, cluster_codes=cluster_codes,
                    cluster_ids=cluster_ids, cluster_sizes=cluster_sizes)


def _starting_beta(problem: _Problem) -> np.ndarray:
    """Self-start per curve, averaging the guesses for shared parameters."""
    layout = problem.layout
    family = problem.family
    guesses = np.zeros((len(layout.curve_ids), family.parameter_count))
    for ci, cid in enumerate(layout.curve_ids):
        sel = problem.curve_codes == ci
        start = models.self_start(family, problem.doses[sel],
                                  problem.responses[sel])
        guesses[ci] = start.as_array()
    beta = np.zeros(layout.dimension)
    counts = np.zeros(layout.dimension)
    for ci in range(len(layout.curve_ids)):
        for k in range(family.parameter_count):
            beta[layout.index[ci, k]] += guesses[ci, k]
            counts[layout.index[ci, k]] += 1.0
    return beta / counts


def _mean_jacobian(problem: _Problem, beta: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of the mean vector in the natural
    parameters, one column per fixed-effect coefficient."""
    layout = problem.layout
    p = layout.dimension
    jac = np.empty((problem.n_obs, p))
    for k in range(p):
        h = _FD_STEP * max(1.0, abs(beta[k]))
        hi, lo = beta.copy(), beta.copy()
        if layout.log_scale[k] and beta[k] - h <= 0.0:
            hi[k] += h
            jac[:, k] = (problem.mean_values(hi) - problem.mean_values(lo)) / h
        else:
            hi[k] += h
            lo[k] -= h
            jac[:, k] = (problem.mean_values(hi) - problem.mean_values(lo)) / (2 * h)
    return jac


def _gaussian_loglik(resid: np.ndarray, sigma: float) -> float:
    n = resid.size
    return float(-0.5 * n * math.log(2.0 * math.pi * sigma**2)
                 - 0.5 * float(resid @ resid) / sigma**2)


def loglik_nls(dataset: Dataset, family: ModelFamily,
               fixed_spec: FixedEffectsSpec, beta: np.ndarray,
               sigma: float) -> float:
    """Independent log-likelihood evaluator for the NLS model."""
    problem = _prepare(dataset, family, fixed_spec)
    resid = problem.responses - problem.mean_values(np.asarray(beta, dtype=float))
    total = 0.0
    for r in resid:
        total += -0.5 * math.log(2.0 * math.pi * sigma**2) - 0.5 * (r / sigma) ** 2
    return total


def loglik_gnls(dataset: Dataset, family: ModelFamily,
                fixed_spec: FixedEffectsSpec, beta: np.ndarray,
                sigma: float, rho: float) -> float:
    """Independent log-likelihood evaluator for the compound-symmetry model.

    Builds each cluster's covariance matrix explicitly and sums the exact
    multivariate normal log-densities; deliberately avoids the closed-form
    whitening used by the fitting path.
    """
    problem = _prepare(dataset, family, fixed_spec)
    resid = problem.responses - problem.mean_values(np.asarray(beta, dtype=float))
    total = 0.0
    for ci in range(len(problem.cluster_ids)):
        r = resid[problem.cluster_codes == ci]
        n_i = r.size
        cov = sigma**2 * ((1.0 - rho) * np.eye(n_i) + rho * np.ones((n_i, n_i)))
        sign, logdet = np.linalg.slogdet(cov)
        if sign <= 0:
            raise DomainError(f"compound-symmetry covariance not PD at rho={rho}")
        total += -0.5 * (n_i * math.log(2.0 * math.pi) + logdet
                         + float(r @ np.linalg.solve(cov, r)))
    return total


# ---------------------------------------------------------------------------
# NLS
# ---------------------------------------------------------------------------

def fit_nls(dataset: Dataset, family: ModelFamily,
            fixed_spec: FixedEffectsSpec | None = None,
            max_iterations: int = 200) -> FitResult:
    """Ordinary nonlinear least squares, ignoring the cluster structure.

    Minimizes the residual sum of squares by Levenberg-Marquardt from
    self-start values, with the inflection and asymmetry parameters
    handled on the log scale.  The covariance of the estimates is
    ``sigma^2 (J'J)^-1`` with ``sigma^2 = RSS / (n - p)``.
    """
    fixed_spec = fixed_spec or FixedEffectsSpec()
    problem = _prepare(dataset, family, fixed_spec)
    layout = problem.layout
    beta0 = _starting_beta(problem)

    def residual(theta: np.ndarray) -> np.ndarray:
        return problem.responses - problem.mean_values(layout.from_optimizer(theta))

    result = least_squares(residual, layout.to_optimizer(beta0), method="lm",
                           ftol=1e-10, gtol=1e-8, xtol=1e-12,
                           max_nfev=max_iterations * (layout.dimension + 1))
    beta_hat = layout.from_optimizer(result.x)
    resid = residual(result.x)
    rss = float(resid @ resid)
    dof = problem.n_obs - layout.dimension
    sigma_hat = math.sqrt(rss / dof)

    jac = _mean_jacobian(problem, beta_hat)
    jtj = jac.T @ jac
    try:
        vcov = sigma_hat**2 * np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(
            "Jacobian is rank deficient at the optimum") from None
    if not np.all(np.isfinite(vcov)):
        raise RankDeficiencyError("Jacobian is rank deficient at the optimum")
    vcov = 0.5 * (vcov + vcov.T)

    dose_range, zero_present = problem.dose_metadata()
    return FitResult(
        estimator="NLS", family=family, fixed_spec=fixed_spec, random_spec=None,
        beta_hat=beta_hat, vcov_beta=vcov, omega_hat=None,
        sigma_hat=max(sigma_hat, 1e-300), rho_hat=None,
        loglik=_gaussian_loglik(resid, max(sigma_hat, 1e-300)),
        converged=result.status > 0, iterations=int(result.nfev),
        beta_names=layout.names, curve_ids=layout.curve_ids,
        cluster_ids=problem.cluster_ids,
        n_obs=problem.n_obs, dose_range=dose_range,
        zero_dose_present=zero_present)


# ---------------------------------------------------------------------------
# GNLS (compound symmetry)
# ---------------------------------------------------------------------------

def _cs_whiten(resid: np.ndarray, rho: float, cluster_codes: np.ndarray,
               cluster_sizes: np.ndarray) -> np.ndarray:
    """Multiply per-cluster residuals by the inverse square root of the
    compound-symmetry correlation matrix (closed form via the one/mean
    eigenstructure)."""
    counts = cluster_sizes.astype(float)
    sums = np.bincount(cluster_codes, weights=resid, minlength=counts.size)
    means = sums / counts
    centered = resid - means[cluster_codes]
    scale_mean = np.sqrt(1.0 - rho + rho * counts)
    return centered / math.sqrt(1.0 - rho) + (means / scale_mean)[cluster_codes]


def _cs_logdet_correlation(rho: float, cluster_sizes: np.ndarray) -> float:
    sizes = cluster_sizes.astype(float)
    return float(np.sum((sizes - 1.0) * math.log(1.0 - rho)
                        + np.log(1.0 - rho + rho * sizes)))


def fit_gnls(dataset: Dataset, family: ModelFamily,
             fixed_spec: FixedEffectsSpec | None = None,
             max_iterations: int = 200) -> FitResult:
    """Generalized nonlinear least squares with compound-symmetry residuals.

    Each cluster's residual covariance is
    ``sigma^2 [(1 - rho) I + rho J]``.  For fixed rho the whitened problem
    is solved by Levenberg-Marquardt; the within-cluster correlation is
    then found by a bounded scalar search of the profiled log-likelihood
    on the atanh scale.  Dispersion is estimated by maximum likelihood.
    """
    fixed_spec = fixed_spec or FixedEffectsSpec()
    problem = _prepare(dataset, family, fixed_spec)
    layout = problem.layout
    n = problem.n_obs
    nmax = int(problem.cluster_sizes.max())
    if nmax < 2:
        raise DegenerateDataError(
            "compound symmetry needs at least one cluster with 2+ observations")
    rho_lo = -1.0 / (nmax - 1.0)
    eps_edge = 1e-6 * (1.0 - rho_lo)
    t_bounds = (math.atanh(rho_lo + eps_edge), math.atanh(1.0 - 1e-8))

    start_fit = fit_nls(dataset, family, fixed_spec,
                        max_iterations=max_iterations)
    theta_state = {"theta": layout.to_optimizer(start_fit.beta_hat), "evals": 0}

    def solve_beta(rho: float):
        def wres(theta: np.ndarray) -> np.ndarray:
            resid = problem.responses - problem.mean_values(
                layout.from_optimizer(theta))
            return _cs_whiten(resid, rho, problem.cluster_codes,
                              problem.cluster_sizes)

        res = least_squares(wres, theta_state["theta"], method="lm",
                            ftol=1e-10, gtol=1e-8, xtol=1e-12,
                            max_nfev=max_iterations * (layout.dimension + 1))
        theta_state["theta"] = res.x
        theta_state["evals"] += 1
        return res

    def profile_negloglik(t: float) -> float:
        rho = math.tanh(t)
        res = solve_beta(rho)
        rss_w = 2.0 * res.cost
        sigma2 = rss_w / n
        ll = (-0.5 * n * (math.log(2.0 * math.pi * sigma2) + 1.0)
              - 0.5 * _cs_logdet_correlation(rho, problem.cluster_sizes))
        return -ll

    scan = minimize_scalar(profile_negloglik, bounds=t_bounds,
                           method="bounded", options={"xatol": 1e-8})
    rho_hat = math.tanh(float(scan.x))
    final = solve_beta(rho_hat)
    beta_hat = layout.from_optimizer(final.x)
    rss_w = 2.0 * final.cost
    sigma_hat = math.sqrt(rss_w / n)

    resid = problem.responses - problem.mean_values(beta_hat)
    jac = _mean_jacobian(problem, beta_hat)
    jac_w = np.column_stack([
        _cs_whiten(jac[:, k], rho_hat, problem.cluster_codes,
                   problem.cluster_sizes)
        for k in range(layout.dimension)])
    try:
        vcov = sigma_hat**2 * np.linalg.inv(jac_w.T @ jac_w)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(
            "whitened Jacobian is rank deficient at the optimum") from None
    vcov = 0.5 * (vcov + vcov.T)

    warnings: list[str] = []
    if rho_hat - rho_lo < 1e-3 * (1.0 - rho_lo) or 1.0 - rho_hat < 1e-3:
        warnings.append("rho_at_boundary")

    wres_final = _cs_whiten(resid, rho_hat, problem.cluster_codes,
                            problem.cluster_sizes)
    loglik = (-0.5 * n * math.log(2.0 * math.pi * sigma_hat**2)
              - 0.5 * _cs_logdet_correlation(rho_hat, problem.cluster_sizes)
              - 0.5 * float(wres_final @ wres_final) / sigma_hat**2)

    dose_range, zero_present = problem.dose_metadata()
    return FitResult(
        estimator="GNLS", family=family, fixed_spec=fixed_spec, random_spec=None,
        beta_hat=beta_hat, vcov_beta=vcov, omega_hat=None,
        sigma_hat=sigma_hat, rho_hat=rho_hat, loglik=loglik,
        converged=bool(scan.success and final.status > 0),
        iterations=int(theta_state["evals"]),
        beta_names=layout.names, curve_ids=layout.curve_ids,
        cluster_ids=problem.cluster_ids,
        n_obs=n, dose_range=dose_range, zero_dose_present=zero_present,
        fit_warnings=tuple(warnings))
