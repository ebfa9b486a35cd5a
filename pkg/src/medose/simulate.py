"""Simulation harness: scenario generation, Monte Carlo ground truth for
marginal effective doses, and replicated estimator comparisons.

The default scenario is a three-parameter log-logistic curve with cluster
random effects on all three parameters (steepness 5 with SD 0.5, upper
asymptote 2000 with SD 500, inflection 0.5 with SD 0.1), residual SD 100,
and 10 dose levels log-spaced over [0.01, 3].  The random-effects
correlation is either a fixed unstructured matrix or the identity.

All randomness flows through counter-based Philox streams: one stream per
cluster for the random effects, one per cluster for the residual noise,
and per-replicate seeds derived by seed-sequence splitting, so results
are bitwise reproducible for a given master seed regardless of worker
count or scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

import numpy as np

from . import models
from .data import Dataset, from_rows
from .errors import DomainError
from .fitting import FitResult, FixedEffectsSpec, RandomEffectsSpec, fit_gnls, fit_nls
from .inference import ed_estimate, _emit_csv, _fmt
from .marginal import CLAMP_REL_FLOOR, solve_ed_log10
from .models import CurveParams, LL3, ModelFamily, family_from_name
from .nlme import fit_nlme
from .quadrature import covariance_root

#: Random-effects correlation of the default scenario (order b, d, e).
UNSTRUCTURED_CORRELATION = (
    (1.0, -0.9, 0.8),
    (-0.9, 1.0, -0.5),
    (0.8, -0.5, 1.0),
)

#: Relative floor for generated per-cluster parameters that must stay positive.
GENERATION_REL_FLOOR = 1e-6

STUDY_COLUMNS = ("m", "estimator", "method", "alpha", "median_deviation",
                 "median_se", "n_converged", "n_failed")

ESTIMATOR_METHODS: dict[str, tuple[str, ...]] = {
    "nls": ("marginal",),
    "gnls": ("marginal",),
    "nlme": ("conditional", "marginalized"),
    "nlme_mis": ("conditional", "marginalized"),
}

#: Generated parameters clamped to a positive floor (steepness and the
#: asymptotes on the data scale may go negative freely; the inflection
#: point and asymmetry cannot).
_GENERATION_CLAMPED = ("d", "e", "f")


@dataclass(frozen=True)
class Scenario:
    """Ground truth for one simulation configuration."""

    family: ModelFamily = LL3
    fixed_effects: dict[str, float] = field(
        default_factory=lambda: {"b": 5.0, "d": 2000.0, "e": 0.5})
    random_sd: dict[str, float] = field(
        default_factory=lambda: {"b": 0.5, "d": 500.0, "e": 0.1})
    correlation: str = "unstructured"
    correlation_matrix: tuple[tuple[float, ...], ...] | None = None
    residual_sd: float = 100.0
    dose_min: float = 0.01
    dose_max: float = 3.0
    n_doses: int = 10
    obs_per_dose: int = 1

    def __post_init__(self) -> None:
        missing = set(self.family.parameter_names) - set(self.fixed_effects)
        if missing:
            raise DomainError(f"fixed_effects missing {sorted(missing)}")
        unknown = set(self.random_sd) - set(self.family.parameter_names)
        if unknown:
            raise DomainError(f"random_sd names {sorted(unknown)} are not "
                              f"{self.family.variant} parameters")
        if any(sd < 0 for sd in self.random_sd.values()):
            raise DomainError("random-effect standard deviations must be >= 0")
        if self.correlation not in ("unstructured", "diagonal"):
            raise DomainError("correlation must be 'unstructured' or 'diagonal'")
        if self.residual_sd < 0:
            raise DomainError("residual_sd must be >= 0")
        if not (0 < self.dose_min <= self.dose_max):
            raise DomainError("need 0 < dose_min <= dose_max")
        if self.n_doses < 2 or self.obs_per_dose < 1:
            raise DomainError("need n_doses >= 2 and obs_per_dose >= 1")

    @property
    def random_parameters(self) -> tuple[str, ...]:
        return tuple(name for name in self.family.parameter_names
                     if name in self.random_sd)

    def beta(self) -> np.ndarray:
        return np.array([self.fixed_effects[name]
                         for name in self.family.parameter_names])

    def random_columns(self) -> np.ndarray:
        return np.array([self.family.index_of(name)
                         for name in self.random_parameters])

    def correlation_mat(self) -> np.ndarray:
        r = len(self.random_parameters)
        if self.correlation == "diagonal":
            return np.eye(r)
        if self.correlation_matrix is not None:
            corr = np.array(self.correlation_matrix, dtype=float)
        elif r == 3:
            corr = np.array(UNSTRUCTURED_CORRELATION)
        else:
            raise DomainError("an explicit correlation_matrix is required for "
                              f"unstructured correlation with {r} random effects")
        if corr.shape != (r, r):
            raise DomainError(f"correlation matrix must be {r}x{r}")
        return corr

    def g_matrix(self) -> np.ndarray:
        sds = np.array([self.random_sd[name] for name in self.random_parameters])
        return self.correlation_mat() * np.outer(sds, sds)

    def omega(self) -> np.ndarray:
        return covariance_root(self.g_matrix())

    def dose_levels(self) -> np.ndarray:
        return np.geomspace(self.dose_min, self.dose_max, self.n_doses)

    def scale_random_sd(self, name: str, factor: float) -> "Scenario":
        if name not in self.random_sd:
            raise DomainError(f"no random effect on {name!r} to rescale")
        sds = dict(self.random_sd)
        sds[name] = sds[name] * factor
        return replace(self, random_sd=sds)


def parse_scenario_config(source: str | IO[str]) -> Scenario:
    """Read a scenario from a plain-text key=value file.

    Recognized keys: ``family``, the fixed-effect values by parameter name
    (``b``, ``c``, ``d``, ``e``, ``f``), random-effect standard deviations
    as ``sd_<name>``, ``correlation`` (unstructured or diagonal),
    ``residual_sd``, ``dose_min``, ``dose_max``, ``n_doses`` and
    ``obs_per_dose``.  Blank lines and ``#`` comments are ignored;
    unspecified keys keep the default scenario's values.
    """
    if hasattr(source, "read"):
        text = source.read()  # type: ignore[union-attr]
    else:
        with open(source, "r", encoding="utf-8") as handle:
            text = handle.read()
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"scenario config line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key.lower()] = value

    base = Scenario()
    family = base.family
    if "family" in entries:
        family = family_from_name(entries.pop("family"))
    fixed = {k: v for k, v in base.fixed_effects.items()
             if k in family.parameter_names}
    sds = {k: v for k, v in base.random_sd.items()
           if k in family.parameter_names}
    kwargs: dict = {}
    for key, value in entries.items():
        if key in family.parameter_names:
            fixed[key] = float(value)
        elif key.startswith("sd_") and key[3:] in family.parameter_names:
            sds[key[3:]] = float(value)
        elif key == "correlation":
            kwargs["correlation"] = value
        elif key in ("residual_sd", "dose_min", "dose_max"):
            kwargs[key] = float(value)
        elif key in ("n_doses", "obs_per_dose"):
            kwargs[key] = int(value)
        else:
            raise DomainError(f"unknown scenario config key {key!r}")
    return Scenario(family=family, fixed_effects=fixed, random_sd=sds, **kwargs)


# ---------------------------------------------------------------------------
# Data generation
# ---------------------------------------------------------------------------

def generate_with_info(scenario: Scenario, m: int,
                       seed: int) -> tuple[Dataset, int]:
    """Generate a dataset plus the count of floored cluster parameters."""
    if m < 2:
        raise DomainError(f"need at least 2 clusters, got {m}")
    family = scenario.family
    beta = scenario.beta()
    omega = scenario.omega()
    rand_cols = scenario.random_columns()
    levels = np.repeat(scenario.dose_levels(), scenario.obs_per_dose)
    root = np.random.Philox(key=int(seed))
    rows = []
    clamped = 0
    for i in range(m):
        gen_re = np.random.Generator(root.jumped(2 * i))
        gen_eps = np.random.Generator(root.jumped(2 * i + 1))
        z = gen_re.standard_normal(len(rand_cols))
        params = beta.copy()
        params[rand_cols] += omega @ z
        for k, name in enumerate(family.parameter_names):
            if name in _GENERATION_CLAMPED:
                floor = GENERATION_REL_FLOOR * abs(beta[k])
                if params[k] < floor:
                    params[k] = floor
                    clamped += 1
        mu = models.eval_values(family, levels, params)
        y = mu + scenario.residual_sd * gen_eps.standard_normal(levels.size)
        cid = f"c{i + 1:03d}"
        rows.extend((float(x), float(v), cid, "1") for x, v in zip(levels, y))
    return from_rows(rows), clamped


def generate_dataset(scenario: Scenario, m: int, seed: int) -> Dataset:
    """Simulate ``m`` clusters from the scenario, deterministically in
    ``seed`` (one Philox stream per cluster and per noise block)."""
    dataset, _ = generate_with_info(scenario, m, seed)
    return dataset


# ---------------------------------------------------------------------------
# Monte Carlo ground truth
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class McMarginalCurve:
    """A Monte Carlo representation of the population-average curve at the
    true parameters; the sample is drawn once and reused (common random
    numbers), so root finding against it is well defined."""

    family: ModelFamily
    params: np.ndarray          # (n_samples, q)

    def values(self, dose: float) -> np.ndarray:
        return models.eval_values(self.family, float(dose), self.params)

    def fbar(self, dose: float) -> float:
        return float(self.values(dose).mean())

    def fbar_se(self, dose: float) -> float:
        vals = self.values(dose)
        return float(vals.std(ddof=1) / math.sqrt(vals.size))

    def limits(self) -> tuple[float, float]:
        b, c, d, e, f = self.family.expand(self.params)
        c = np.broadcast_to(c, b.shape)
        d = np.broadcast_to(d, b.shape)
        at_zero = np.where(b > 0, d, c)
        at_inf = np.where(b > 0, c, d)
        return float(at_zero.mean()), float(at_inf.mean())


def mc_truth(scenario: Scenario, n_samples: int, seed: int) -> McMarginalCurve:
    """Sample the population of curves at the true parameters."""
    gen = np.random.Generator(np.random.Philox(key=int(seed)))
    beta = scenario.beta()
    omega = scenario.omega()
    rand_cols = scenario.random_columns()
    z = gen.standard_normal((n_samples, len(rand_cols)))
    params = np.tile(beta, (n_samples, 1))
    params[:, rand_cols] += z @ omega.T
    for k, name in enumerate(scenario.family.parameter_names):
        if name in models.POSITIVE_PARAMS:
            floor = CLAMP_REL_FLOOR * beta[k]
            params[:, k] = np.maximum(params[:, k], floor)
    return McMarginalCurve(family=scenario.family, params=params)


def mc_true_ed(scenario: Scenario, alpha: float, n_samples: int = 100_000,
               seed: int = 0) -> float:
    """Monte Carlo reference value for the marginal effective dose.

    Uses common random numbers across the bisection steps of the inverse
    problem, with the same log-dose solver as the quadrature path.
    """
    if n_samples < 1000:
        raise DomainError("Monte Carlo truth needs at least 1000 samples")
    curve = mc_truth(scenario, n_samples, seed)
    f_zero, f_inf = curve.limits()
    cond = models.conditional_ed(
        scenario.family,
        CurveParams(scenario.family, tuple(scenario.beta())), alpha)
    t = solve_ed_log10(curve.fbar, f_zero, f_inf, alpha, math.log10(cond))
    return 10.0**t


# ---------------------------------------------------------------------------
# Replicated study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicateRecord:
    m: int
    replicate: int
    estimator: str
    method: str
    alpha: float
    estimate: float
    std_error: float
    deviation: float
    ok: bool


@dataclass(frozen=True)
class StudyCell:
    m: int
    estimator: str
    method: str
    alpha: float
    median_deviation: float
    median_se: float
    n_converged: int
    n_failed: int


@dataclass(frozen=True)
class StudySummary:
    cells: tuple[StudyCell, ...]
    records: tuple[ReplicateRecord, ...]
    true_eds: dict[float, float]
    n_points: int
    seed: int
    total_clamped: int


def _replicate_seed(seed: int, m: int, replicate: int) -> int:
    return int(np.random.SeedSequence([seed, m, replicate]).generate_state(1)[0])


def _truth_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, 7_777_777, index]).generate_state(1)[0])


def _fit_for(token: str, scenario: Scenario, dataset: Dataset) -> FitResult:
    family = scenario.family
    if token == "nls":
        return fit_nls(dataset, family, FixedEffectsSpec())
    if token == "gnls":
        return fit_gnls(dataset, family, FixedEffectsSpec())
    structure = "unstructured" if scenario.correlation == "unstructured" else "diagonal"
    if token == "nlme_mis":
        structure = "diagonal" if structure == "unstructured" else "unstructured"
    spec = RandomEffectsSpec(scenario.random_parameters, structure)
    return fit_nlme(dataset, family, FixedEffectsSpec(), spec)


def _run_replicate(task: tuple) -> tuple[list[ReplicateRecord], int]:
    (scenario, m, rep, rep_seed, alphas, estimators, n_points, true_eds) = task
    dataset, clamped = generate_with_info(scenario, m, rep_seed)
    records: list[ReplicateRecord] = []
    for token in estimators:
        fit = None
        try:
            fit = _fit_for(token, scenario, dataset)
            fit_ok = fit.converged
        except Exception:
            fit_ok = False
        curve = fit.curve_ids[0] if fit is not None else "1"
        for method in ESTIMATOR_METHODS[token]:
            for alpha in alphas:
                rec = ReplicateRecord(m=m, replicate=rep, estimator=token,
                                      method=method, alpha=alpha,
                                      estimate=float("nan"),
                                      std_error=float("nan"),
                                      deviation=float("nan"), ok=False)
                if fit_ok:
                    try:
                        est = ed_estimate(fit, curve, alpha, method, n_points)
                        rec = ReplicateRecord(
                            m=m, replicate=rep, estimator=token, method=method,
                            alpha=alpha, estimate=est.value,
                            std_error=est.std_error,
                            deviation=est.value - true_eds[alpha], ok=True)
                    except Exception:
                        pass
                records.append(rec)
    return records, clamped


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit argument, then MEDOSE_THREADS, then all cores."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("MEDOSE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_study(scenario: Scenario, m_list: Sequence[int], replicates: int,
              alphas: Sequence[float] = (0.1, 0.5, 0.9),
              estimators: Sequence[str] = ("nlme", "gnls", "nls"),
              n_points: int = 9, seed: int = 0,
              n_truth_samples: int = 100_000,
              workers: int | None = None) -> StudySummary:
    """Replicated comparison of estimators against the Monte Carlo truth.

    Every replicate draws its own derived seed, fits the requested
    estimators (``nlme_mis`` deliberately misspecifies the random-effects
    covariance structure), computes effective doses for each estimator's
    methods, and records the deviation from the Monte Carlo reference.
    Failures are recorded, never raised.  Replicates run in parallel when
    ``workers`` (or MEDOSE_THREADS) exceeds 1; results are reduced in
    replicate order so the summary does not depend on scheduling.
    """
    if replicates < 1:
        raise DomainError("need at least one replicate")
    for token in estimators:
        if token not in ESTIMATOR_METHODS:
            raise DomainError(f"unknown estimator {token!r}; expected one of "
                              f"{sorted(ESTIMATOR_METHODS)}")
    alphas = tuple(alphas)
    true_eds = {alpha: mc_true_ed(scenario, alpha, n_truth_samples,
                                  _truth_seed(seed, k))
                for k, alpha in enumerate(alphas)}
    tasks = [(scenario, m, rep, _replicate_seed(seed, m, rep), alphas,
              tuple(estimators), n_points, true_eds)
             for m in m_list for rep in range(replicates)]
    n_workers = resolve_workers(workers)
    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outputs = list(pool.map(_run_replicate, tasks, chunksize=4))
    else:
        outputs = [_run_replicate(task) for task in tasks]

    records: list[ReplicateRecord] = []
    total_clamped = 0
    for recs, clamped in outputs:
        records.extend(recs)
        total_clamped += clamped

    cells: list[StudyCell] = []
    for m in m_list:
        for token in estimators:
            for method in ESTIMATOR_METHODS[token]:
                for alpha in alphas:
                    group = [r for r in records
                             if r.m == m and r.estimator == token
                             and r.method == method and r.alpha == alpha]
                    good = [r for r in group if r.ok]
                    cells.append(StudyCell(
                        m=m, estimator=token, method=method, alpha=alpha,
                        median_deviation=(float(np.median([r.deviation for r in good]))
                                          if good else float("nan")),
                        median_se=(float(np.median([r.std_error for r in good]))
                                   if good else float("nan")),
                        n_converged=len(good),
                        n_failed=len(group) - len(good)))
    return StudySummary(cells=tuple(cells), records=tuple(records),
                        true_eds=true_eds, n_points=n_points, seed=seed,
                        total_clamped=total_clamped)


def summary_to_csv(summary: StudySummary,
                   target: str | IO[str] | None = None) -> str | None:
    """Long-format study summary with a fixed column order."""
    rows = [(c.m, c.estimator, c.method, _fmt(c.alpha),
             _fmt(c.median_deviation), _fmt(c.median_se),
             c.n_converged, c.n_failed) for c in summary.cells]
    return _emit_csv(STUDY_COLUMNS, rows, target)
