"""Log-logistic dose-response model family (LL3/LL4/LL5).

The five-parameter curve is

    f(x) = c + (d - c) / (1 + exp(b * (log(x) - log(e))))**f

with ``b`` the steepness, ``c`` and ``d`` the lower and upper asymptotes,
``e`` the inflection-point dose and ``f`` an asymmetry exponent.  The
four-parameter variant fixes ``f = 1``; the three-parameter variant
additionally fixes ``c = 0``.  ``b > 0`` encodes a response that decreases
with dose, which is the convention used throughout this package.

Dose 0 and dose infinity are evaluated as analytic limits, never through
``log(0)`` or a large finite dose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, DomainError, InvalidParameterError

_FAMILY_PARAMS: dict[str, tuple[str, ...]] = {
    "LL3": ("b", "d", "e"),
    "LL4": ("b", "c", "d", "e"),
    "LL5": ("b", "c", "d", "e", "f"),
}

#: Parameters that must stay strictly positive.
POSITIVE_PARAMS = ("e", "f")


@dataclass(frozen=True)
class ModelFamily:
    """A member of the log-logistic family, identified by its free parameters.

    Parameters fixed by the variant (``c = 0`` for LL3, ``f = 1`` for LL3 and
    LL4) are not part of ``parameter_names`` and are filled in automatically
    when a curve is evaluated.
    """

    variant: str
    parameter_names: tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        if self.variant not in _FAMILY_PARAMS:
            raise DomainError(f"unknown model family {self.variant!r}; "
                              f"expected one of {sorted(_FAMILY_PARAMS)}")
        object.__setattr__(self, "parameter_names", _FAMILY_PARAMS[self.variant])

    @property
    def parameter_count(self) -> int:
        return len(self.parameter_names)

    def index_of(self, name: str) -> int:
        try:
            return self.parameter_names.index(name)
        except ValueError:
            raise DomainError(
                f"{self.variant} has no parameter {name!r}") from None

    def expand(self, values: np.ndarray) -> tuple[np.ndarray, ...]:
        """Split an array of shape (..., q) into full (b, c, d, e, f) columns.

        Fixed parameters are returned as scalars (0.0 for c, 1.0 for f).
        """
        values = np.asarray(values, dtype=float)
        cols = {name: values[..., k] for k, name in enumerate(self.parameter_names)}
        return (cols["b"],
                cols.get("c", np.float64(0.0)),
                cols["d"],
                cols["e"],
                cols.get("f", np.float64(1.0)))


LL3 = ModelFamily("LL3")
LL4 = ModelFamily("LL4")
LL5 = ModelFamily("LL5")

_FAMILIES = {"LL3": LL3, "LL4": LL4, "LL5": LL5}


def family_from_name(name: str) -> ModelFamily:
    """Look up a family by its variant name (case-insensitive)."""
    key = name.strip().upper()
    if key not in _FAMILIES:
        raise DomainError(f"unknown model family {name!r}; "
                          f"expected one of {sorted(_FAMILIES)}")
    return _FAMILIES[key]


@dataclass(frozen=True)
class CurveParams:
    """Validated parameter vector for one curve of a given family.

    Invariants enforced at construction: all values finite, ``e > 0``,
    ``f > 0`` where present, ``b != 0``.
    """

    family: ModelFamily
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        if len(vals) != self.family.parameter_count:
            raise InvalidParameterError(
                f"{self.family.variant} needs {self.family.parameter_count} "
                f"parameters, got {len(vals)}")
        object.__setattr__(self, "values", vals)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidParameterError(f"non-finite parameter in {vals}")
        named = dict(zip(self.family.parameter_names, vals))
        if named["b"] == 0.0:
            raise InvalidParameterError("steepness b must be nonzero")
        for name in POSITIVE_PARAMS:
            if name in named and named[name] <= 0.0:
                raise InvalidParameterError(f"{name} must be strictly positive, "
                                            f"got {named[name]}")

    def __getitem__(self, name: str) -> float:
        return self.values[self.family.index_of(name)]

    @property
    def b(self) -> float:
        return self["b"]

    @property
    def c(self) -> float:
        return self["c"] if "c" in self.family.parameter_names else 0.0

    @property
    def d(self) -> float:
        return self["d"]

    @property
    def e(self) -> float:
        return self["e"]

    @property
    def f(self) -> float:
        return self["f"] if "f" in self.family.parameter_names else 1.0

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)


def _ll5_response(dose, b, c, d, e, f):
    """Vectorized curve core; all arguments broadcast against each other.

    Dose 0 and ``inf`` fall out of IEEE limit arithmetic (log(0) = -inf,
    exp overflow = inf), so no finite stand-in dose is ever evaluated.
    """
    dose = np.asarray(dose, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        t = b * (np.log(dose) - np.log(e))
        return c + (d - c) / (1.0 + np.exp(t)) ** f


def eval_values(family: ModelFamily, dose, values) -> np.ndarray:
    """Evaluate the curve for raw parameter arrays of shape (..., q).

    Broadcasting workhorse for the fitting and marginalization machinery;
    performs no validation.
    """
    b, c, d, e, f = family.expand(values)
    return _ll5_response(dose, b, c, d, e, f)


def evaluate(family: ModelFamily, params: CurveParams, dose) -> float | np.ndarray:
    """Mean response at one or more doses.

    Parameters
    ----------
    family, params:
        The model family and a validated parameter vector for it.
    dose:
        Scalar or array of doses, each >= 0 (``np.inf`` allowed).

    Returns
    -------
    float or ndarray matching the shape of ``dose``.  At dose 0 the analytic
    limit is returned (the upper asymptote ``d`` for ``b > 0``, ``c`` for
    ``b < 0``); at ``inf`` the opposite limit.
    """
    dose_arr = np.asarray(dose, dtype=float)
    if np.any(np.isnan(dose_arr)) or np.any(dose_arr < 0):
        raise DomainError("dose must be nonnegative")
    out = _ll5_response(dose_arr, params.b, params.c, params.d, params.e, params.f)
    if np.ndim(dose) == 0:
        return float(out)
    return out


def asymptotes(family: ModelFamily, params: CurveParams) -> tuple[float, float]:
    """Analytic limits (f(0), f(inf)) of the curve.

    For ``b > 0`` this is (d, c); for ``b < 0`` the pair is swapped.
    """
    if params.b > 0:
        return (params.d, params.c)
    return (params.c, params.d)


def conditional_ed(family: ModelFamily, params: CurveParams, alpha: float) -> float:
    """Closed-form effective dose for a single curve.

    Solves  alpha = (f(ED) - f(0)) / (f(inf) - f(0))  exactly.  For ``b > 0``
    (decreasing response) the solution is ``e * ((1-alpha)**(-1/f) - 1)**(1/b)``;
    for ``b < 0`` the roles of alpha and 1 - alpha swap so that the same
    displacement-between-limits definition holds.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie strictly in (0, 1), got {alpha}")
    b, e, f = params.b, params.e, params.f
    astar = (1.0 - alpha) if b > 0 else alpha
    return float(e * (astar ** (-1.0 / f) - 1.0) ** (1.0 / b))


def gradient_params(family: ModelFamily, params: CurveParams, dose) -> np.ndarray:
    """Central-difference gradient of the response with respect to each
    model parameter, with relative step ``cbrt(eps) * max(1, |beta_k|)``.

    Falls back to a forward difference for a positivity-constrained
    parameter whose backward stencil point would be invalid.
    """
    base = params.as_array()
    h0 = float(np.cbrt(np.finfo(float).eps))
    grad = np.empty(family.parameter_count)
    for k, name in enumerate(family.parameter_names):
        h = h0 * max(1.0, abs(base[k]))
        lo, hi = base.copy(), base.copy()
        hi[k] += h
        if name in POSITIVE_PARAMS and base[k] - h <= 0.0:
            f_hi = eval_values(family, dose, hi)
            f_lo = eval_values(family, dose, base)
            grad[k] = float(f_hi - f_lo) / h
        else:
            lo[k] -= h
            f_hi = eval_values(family, dose, hi)
            f_lo = eval_values(family, dose, lo)
            grad[k] = float(f_hi - f_lo) / (2.0 * h)
    return grad


def self_start(family: ModelFamily, doses, responses) -> CurveParams:
    """Starting values from the data, for subsequent refinement.

    The asymptote guesses come from the extreme dose-group means (with the
    lower one pinned to 0 for LL3); the steepness and inflection guesses
    come from a linear regression of the logit-transformed scaled response
    on log dose over the positive doses.  The asymmetry guess is always 1.
    """
    doses = np.asarray(doses, dtype=float)
    responses = np.asarray(responses, dtype=float)
    if doses.shape != responses.shape or doses.ndim != 1:
        raise DomainError("doses and responses must be 1-D arrays of equal length")
    levels = np.unique(doses)
    if levels.size < family.parameter_count:
        raise DegenerateDataError(
            f"need at least {family.parameter_count} distinct dose levels, "
            f"got {levels.size}")
    if np.ptp(responses) == 0.0:
        raise DegenerateDataError("responses are constant; curve not identifiable")

    group_means = np.array([responses[doses == lv].mean() for lv in levels])
    if family.variant == "LL3":
        c0 = 0.0
    else:
        c0 = float(group_means.min())
    d0 = float(group_means.max())
    if d0 - c0 <= 0.0:
        raise DegenerateDataError("response range collapses after grouping")

    pos = doses > 0
    if np.unique(doses[pos]).size < 2:
        raise DegenerateDataError("need at least two distinct positive doses")
    scaled = np.clip((responses[pos] - c0) / (d0 - c0), 0.01, 0.99)
    z = np.log(scaled / (1.0 - scaled))
    slope, intercept = np.polyfit(np.log(doses[pos]), z, 1)
    if not np.isfinite(slope) or abs(slope) < 1e-12:
        raise DegenerateDataError("no dose trend; steepness not identifiable")
    b0 = -float(slope)
    e0 = float(np.exp(intercept / b0))
    if not np.isfinite(e0) or e0 <= 0.0:
        raise DegenerateDataError("inflection-point guess is not positive")

    guesses = {"b": b0, "c": c0, "d": d0, "e": e0, "f": 1.0}
    return CurveParams(family, tuple(guesses[name] for name in family.parameter_names))
