"""User-facing derived quantities: effective-dose tables, relative
potencies with Wald limits, and fitted-curve exports.

Three inferential flavours are distinguished throughout:

* ``conditional``: closed-form quantities from the fitted parameters with
  the random effects set to zero (or simply the fitted parameters for a
  model without random effects).
* ``marginalized``: quantities from the quadrature population-average
  curve of a mixed fit.
* ``marginal``: quantities from the fitted parameters of a model that has
  no random effects (NLS, or GNLS with residual correlation only).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import IO, Iterable, Sequence

import numpy as np

from . import models
from .errors import DivisionHazardError, DomainError, MethodError
from .fitting import FitResult
from .marginal import (DEFAULT_QUAD_POINTS, DerivedEstimate, delta_method,
                       marginal_values, marginalized_ed)

CONDITIONAL = "conditional"
MARGINALIZED = "marginalized"
MARGINAL = "marginal"
_METHODS = (CONDITIONAL, MARGINALIZED, MARGINAL)

ED_TABLE_COLUMNS = ("curve_id", "alpha_pct", "method", "estimate", "std_error")
RP_COLUMNS = ("numerator_curve", "denominator_curve", "alpha", "estimate",
              "std_error", "ci_lower", "ci_upper", "level")
PREDICT_COLUMNS = ("dose", "label", "value")


def z_quantile(prob: float) -> float:
    """Standard normal quantile via the stdlib's rational approximation."""
    if not 0.0 < prob < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {prob}")
    return NormalDist().inv_cdf(prob)


def wald_ci(estimate: float, std_error: float,
            level: float = 0.95) -> tuple[float, float]:
    """Symmetric normal-theory interval on the untransformed scale."""
    if std_error < 0:
        raise DomainError("std_error must be nonnegative")
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    z = z_quantile(0.5 * (1.0 + level))
    return (estimate - z * std_error, estimate + z * std_error)


def _check_method(fit: FitResult, method: str) -> None:
    if method not in _METHODS:
        raise MethodError(f"unknown method {method!r}; expected one of {_METHODS}")
    if method == MARGINALIZED and fit.estimator != "NLME":
        raise MethodError("marginalized inference requires a mixed-effects "
                          f"(NLME) fit, got {fit.estimator}")
    if method == MARGINAL and fit.estimator not in ("NLS", "GNLS"):
        raise MethodError("marginal inference requires an NLS or GNLS fit, "
                          f"got {fit.estimator}")


def _ed_functional(fit: FitResult, curve_id: str, alpha: float, method: str,
                   n_points: int):
    layout = fit.layout
    if method == MARGINALIZED:
        def fn(beta: np.ndarray) -> float:
            return marginalized_ed(fit, curve_id, alpha, n_points, beta=beta)
    else:
        def fn(beta: np.ndarray) -> float:
            params = layout.params_for(beta, curve_id)
            return models.conditional_ed(fit.family, params, alpha)
    return fn


def ed_estimate(fit: FitResult, curve_id: str, alpha: float, method: str,
                n_points: int = DEFAULT_QUAD_POINTS) -> DerivedEstimate:
    """One effective dose with its delta-method standard error."""
    _check_method(fit, method)
    fn = _ed_functional(fit, curve_id, alpha, method, n_points)
    return delta_method(fit, fn, method=method)


@dataclass(frozen=True)
class EDRow:
    curve_id: str
    alpha_pct: float
    method: str
    estimate: float
    std_error: float


@dataclass(frozen=True)
class EDTable:
    rows: tuple[EDRow, ...]

    def to_csv(self, target: str | IO[str] | None = None) -> str | None:
        return _emit_csv(ED_TABLE_COLUMNS,
                         [(r.curve_id, _fmt(r.alpha_pct), r.method,
                           _fmt(r.estimate), _fmt(r.std_error))
                          for r in self.rows], target)

    def to_json_dict(self) -> list[dict]:
        return [{"curve_id": r.curve_id, "alpha_pct": r.alpha_pct,
                 "method": r.method, "estimate": r.estimate,
                 "std_error": r.std_error} for r in self.rows]


def ed_table(fit: FitResult, alphas: Sequence[float], method: str,
             n_points: int = DEFAULT_QUAD_POINTS) -> EDTable:
    """Effective doses for every curve at the requested response shifts.

    ``alphas`` are fractions in (0, 1); the emitted table reports them as
    percents, one row per (curve, alpha), sorted by curve then alpha.
    """
    _check_method(fit, method)
    rows = []
    for curve_id in fit.curve_ids:
        for alpha in sorted(alphas):
            est = ed_estimate(fit, curve_id, alpha, method, n_points)
            rows.append(EDRow(curve_id=curve_id, alpha_pct=100.0 * alpha,
                              method=method, estimate=est.value,
                              std_error=est.std_error))
    return EDTable(tuple(rows))


@dataclass(frozen=True)
class RelativePotency:
    numerator_curve: str
    denominator_curve: str
    alpha: float
    estimate: float
    std_error: float
    ci_lower: float
    ci_upper: float
    level: float

    def row(self) -> tuple:
        return (self.numerator_curve, self.denominator_curve, _fmt(self.alpha),
                _fmt(self.estimate), _fmt(self.std_error), _fmt(self.ci_lower),
                _fmt(self.ci_upper), _fmt(self.level))

    def to_json_dict(self) -> dict:
        return {"numerator_curve": self.numerator_curve,
                "denominator_curve": self.denominator_curve,
                "alpha": self.alpha, "estimate": self.estimate,
                "std_error": self.std_error, "ci_lower": self.ci_lower,
                "ci_upper": self.ci_upper, "level": self.level}


def relative_potency(fit: FitResult, curve_a: str, curve_b: str, alpha: float,
                     method: str = CONDITIONAL,
                     n_points: int = DEFAULT_QUAD_POINTS,
                     level: float = 0.95,
                     log_scale: bool = False) -> RelativePotency:
    """Ratio of two curves' effective doses at the same response shift.

    The default interval is untransformed Wald (lower limits may be
    negative); ``log_scale=True`` switches to a log-scale Wald interval,
    which keeps the limits positive.
    """
    _check_method(fit, method)
    for cid in (curve_a, curve_b):
        if cid not in fit.curve_ids:
            raise MethodError(f"curve {cid!r} not present in fit")
    fn_a = _ed_functional(fit, curve_a, alpha, method, n_points)
    fn_b = _ed_functional(fit, curve_b, alpha, method, n_points)

    def ratio(beta: np.ndarray) -> float:
        ed_b = fn_b(beta)
        ed_a = fn_a(beta)
        if ed_b == 0.0 or not math.isfinite(ed_a / ed_b):
            raise DivisionHazardError(
                f"effective dose of denominator curve {curve_b!r} is "
                "numerically zero")
        return ed_a / ed_b

    est = delta_method(fit, ratio, method=method)
    if log_scale:
        if est.value <= 0:
            raise DomainError("log-scale interval needs a positive ratio")
        z = z_quantile(0.5 * (1.0 + level))
        rel = est.std_error / est.value
        lower = est.value * math.exp(-z * rel)
        upper = est.value * math.exp(z * rel)
    else:
        lower, upper = wald_ci(est.value, est.std_error, level)
    return RelativePotency(numerator_curve=curve_a, denominator_curve=curve_b,
                           alpha=alpha, estimate=est.value,
                           std_error=est.std_error, ci_lower=lower,
                           ci_upper=upper, level=level)


def relative_potency_table(fit: FitResult, curve_a: str, curve_b: str,
                           alphas: Sequence[float], method: str = CONDITIONAL,
                           n_points: int = DEFAULT_QUAD_POINTS,
                           level: float = 0.95,
                           log_scale: bool = False) -> list[RelativePotency]:
    return [relative_potency(fit, curve_a, curve_b, alpha, method, n_points,
                             level, log_scale) for alpha in sorted(alphas)]


def rp_to_csv(rows: Iterable[RelativePotency],
              target: str | IO[str] | None = None) -> str | None:
    return _emit_csv(RP_COLUMNS, [r.row() for r in rows], target)


# ---------------------------------------------------------------------------
# Fitted-curve exports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PredictionRow:
    dose: float
    label: str
    value: float


def predict_curves(fit: FitResult, curve_id: str, dose_grid: Sequence[float],
                   which: Sequence[str] = (CONDITIONAL,),
                   n_points: int = DEFAULT_QUAD_POINTS) -> list[PredictionRow]:
    """Long-format table of fitted curves over a dose grid.

    ``which`` may contain ``conditional``, ``marginalized`` and
    ``cluster_specific``; the latter two require a mixed fit.  Cluster
    curves insert each cluster's estimated random effects and are emitted
    only for clusters that contain observations of the requested curve.
    """
    doses = np.asarray(list(dose_grid), dtype=float)
    if doses.size == 0:
        raise DomainError("dose grid must be nonempty")
    if np.any(doses < 0):
        raise DomainError("doses must be nonnegative")
    valid = {CONDITIONAL, MARGINALIZED, "cluster_specific"}
    unknown = set(which) - valid
    if unknown:
        raise MethodError(f"unknown curve kinds {sorted(unknown)}; "
                          f"expected a subset of {sorted(valid)}")
    if curve_id not in fit.curve_ids:
        raise MethodError(f"curve {curve_id!r} not present in fit")

    rows: list[PredictionRow] = []
    if CONDITIONAL in which:
        params = fit.curve_params(curve_id)
        vals = models.eval_values(fit.family, doses, params.as_array())
        rows.extend(PredictionRow(float(x), CONDITIONAL, float(v))
                    for x, v in zip(doses, vals))
    if MARGINALIZED in which:
        if fit.estimator != "NLME":
            raise MethodError("marginalized curves require an NLME fit")
        vals, _ = marginal_values(fit, curve_id, doses, n_points)
        rows.extend(PredictionRow(float(x), MARGINALIZED, float(v))
                    for x, v in zip(doses, vals))
    if "cluster_specific" in which:
        if fit.estimator != "NLME" or fit.ranef_modes is None:
            raise MethodError("cluster-specific curves require an NLME fit")
        base = fit.curve_params(curve_id).as_array()
        family = fit.family
        rand_cols = [family.index_of(name)
                     for name in fit.random_spec.random_parameters]
        for ci, cid in enumerate(fit.cluster_ids):
            curves_here = fit.cluster_curves.get(cid)
            if curves_here is not None and curve_id not in curves_here:
                continue
            params = base.copy()
            params[rand_cols] += fit.ranef_modes[ci]
            for k, name in enumerate(family.parameter_names):
                if name in models.POSITIVE_PARAMS and k in rand_cols:
                    params[k] = max(params[k], 1e-12 * base[k])
            vals = models.eval_values(family, doses, params)
            rows.extend(PredictionRow(float(x), f"cluster:{cid}", float(v))
                        for x, v in zip(doses, vals))
    return rows


def predictions_to_csv(rows: Iterable[PredictionRow],
                       target: str | IO[str] | None = None) -> str | None:
    return _emit_csv(PREDICT_COLUMNS,
                     [(_fmt(r.dose), r.label, _fmt(r.value)) for r in rows],
                     target)


# ---------------------------------------------------------------------------
# Small emission helpers
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _emit_csv(columns: Sequence[str], rows: Iterable[tuple],
              target: str | IO[str] | None) -> str | None:
    def write(stream: IO[str]) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(row)

    if target is None:
        buf = io.StringIO()
        write(buf)
        return buf.getvalue()
    if hasattr(target, "write"):
        write(target)  # type: ignore[arg-type]
        return None
    with open(target, "w", encoding="utf-8", newline="") as handle:
        write(handle)
    return None
