"""Population-average predictions and derived quantities from mixed fits.

The marginal mean curve averages the conditional curve over the estimated
random-effects distribution.  The average is computed by tensor-product
Gauss-Hermite quadrature on the standardized scale, with the nodes pushed
through the Cholesky factor of the estimated covariance; a Monte Carlo
version with a counter-based generator (Philox) serves as a slower,
simulation-based alternative and as an independent cross-check.

Marginalized effective doses invert the population-average curve between
its dose-0 and dose-infinity limits; standard errors for any derived
scalar come from the delta method with a numerical gradient over the
fixed effects, holding the estimated variance components fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models
from .errors import (DomainError, EvaluationError, MethodError,
                     NoSolutionError)
from .fitting import FitResult
from .quadrature import build_grid, transform_nodes

DEFAULT_QUAD_POINTS = 9

#: Relative floor applied to positivity-constrained parameters when a
#: transformed node (or Monte Carlo draw) would push them nonpositive.
CLAMP_REL_FLOOR = 1e-12

_FD_STEP = float(np.cbrt(np.finfo(float).eps))

_ED_BRACKET_DECADES = 8.0
_ED_TOL_LOG10 = 1e-10


@dataclass(frozen=True)
class DerivedEstimate:
    """A derived scalar with its delta-method uncertainty.

    ``std_error**2`` equals ``gradient' vcov gradient`` by construction;
    ``method`` records the inferential flavour (conditional, marginalized
    or marginal).
    """

    value: float
    std_error: float
    gradient: np.ndarray
    method: str


def _require_random(fit: FitResult) -> None:
    if fit.random_spec is None or fit.omega_hat is None:
        raise MethodError(
            "fit has no random effects; use conditional prediction from the "
            "fitted parameters instead")


def _offset_params(fit: FitResult, curve_id: str, offsets: np.ndarray,
                   beta: np.ndarray | None) -> tuple[np.ndarray, int]:
    """Per-node natural parameter matrix for one curve, with the
    positivity floor applied; returns (params (N, q), clamp_count)."""
    layout = fit.layout
    beta_vec = fit.beta_hat if beta is None else np.asarray(beta, dtype=float)
    base = layout.params_for(beta_vec, curve_id).as_array()
    family = fit.family
    rand_cols = np.array([family.index_of(name)
                          for name in fit.random_spec.random_parameters])
    params = np.tile(base, (offsets.shape[0], 1))
    params[:, rand_cols] += offsets
    clamped = 0
    for k, name in enumerate(family.parameter_names):
        if name in models.POSITIVE_PARAMS and k in rand_cols:
            floor = CLAMP_REL_FLOOR * base[k]
            below = params[:, k] < floor
            clamped += int(below.sum())
            params[below, k] = floor
    return params, clamped


def _quad_nodes(fit: FitResult, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    grid = build_grid(n_points, fit.random_spec.dimension)
    xi = transform_nodes(grid, fit.g_hat)
    return xi, grid.weights


def marginal_values(fit: FitResult, curve_id: str, doses,
                    n_points: int = DEFAULT_QUAD_POINTS,
                    beta: np.ndarray | None = None
                    ) -> tuple[np.ndarray, int]:
    """Population-average curve at an array of doses.

    Returns the predictions together with the number of quadrature nodes
    whose positivity-constrained parameters had to be clamped.
    """
    _require_random(fit)
    if n_points < 1:
        raise DomainError("need at least one quadrature point")
    xi, weights = _quad_nodes(fit, n_points)
    params, clamped = _offset_params(fit, curve_id, xi, beta)
    doses = np.atleast_1d(np.asarray(doses, dtype=float))
    vals = models.eval_values(fit.family, doses[:, None], params[None, :, :])
    return vals @ weights, clamped


def marginal_predict(fit: FitResult, curve_id: str, dose,
                     n_points: int = DEFAULT_QUAD_POINTS,
                     beta: np.ndarray | None = None) -> float:
    """Population-average prediction at a single dose (0 and inf allowed)."""
    values, _ = marginal_values(fit, curve_id, [dose], n_points, beta)
    return float(values[0])


def _node_asymptotes(family, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-node analytic limits (value at dose 0, value at dose inf)."""
    b, c, d, e, f = family.expand(params)
    c = np.broadcast_to(c, b.shape)
    d = np.broadcast_to(d, b.shape)
    at_zero = np.where(b > 0, d, c)
    at_inf = np.where(b > 0, c, d)
    return at_zero, at_inf


def marginal_asymptotes(fit: FitResult, curve_id: str,
                        n_points: int = DEFAULT_QUAD_POINTS,
                        beta: np.ndarray | None = None) -> tuple[float, float]:
    """Quadrature averages of the per-node curve limits (never a
    large-dose numeric evaluation)."""
    _require_random(fit)
    xi, weights = _quad_nodes(fit, n_points)
    params, _ = _offset_params(fit, curve_id, xi, beta)
    at_zero, at_inf = _node_asymptotes(fit.family, params)
    return float(at_zero @ weights), float(at_inf @ weights)


def mc_marginal_predict(fit: FitResult, curve_id: str, dose,
                        n_samples: int = 100_000, seed: int = 0
                        ) -> tuple[float, float]:
    """Monte Carlo population-average prediction.

    Draws random effects as Omega z with z from a Philox counter-based
    generator keyed by ``seed``; the same seed always reproduces the same
    output bit for bit.  Returns (estimate, Monte Carlo standard error).
    """
    _require_random(fit)
    if n_samples < 2:
        raise DomainError("need at least two Monte Carlo samples")
    gen = np.random.Generator(np.random.Philox(key=seed))
    z = gen.standard_normal((n_samples, fit.random_spec.dimension))
    offsets = z @ fit.omega_hat.T
    params, _ = _offset_params(fit, curve_id, offsets, None)
    vals = models.eval_values(fit.family, float(dose), params)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_samples))
    return est, se


def solve_ed_log10(fbar, f_zero: float, f_inf: float, alpha: float,
                   t_start: float) -> float:
    """Solve  fbar(10^t) = f_zero + alpha (f_inf - f_zero)  for t.

    Brackets outward from ``t_start`` by doubling steps up to
    +/- 8 decades, then bisects to a log10-dose tolerance of 1e-10.
    ``fbar`` must be monotone in dose.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie strictly in (0, 1), got {alpha}")
    span = f_inf - f_zero
    if span == 0.0 or not math.isfinite(span):
        raise DomainError("curve limits coincide; effective dose undefined")
    target = f_zero + alpha * span

    def g(t: float) -> float:
        return fbar(10.0**t) - target

    lo = hi = t_start
    g_lo = g_hi = g(t_start)
    step = 0.125
    while g_lo * g_hi > 0.0:
        if step > _ED_BRACKET_DECADES:
            raise NoSolutionError(
                "could not bracket the effective dose within 8 decades of "
                "the conditional starting point")
        lo = t_start - step
        hi = t_start + step
        g_lo, g_hi = g(lo), g(hi)
        step *= 2.0
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    while hi - lo > _ED_TOL_LOG10:
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if g_mid == 0.0:
            return mid
        if (g_mid > 0.0) == (g_lo > 0.0):
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    return 0.5 * (lo + hi)


def marginalized_ed(fit: FitResult, curve_id: str, alpha: float,
                    n_points: int = DEFAULT_QUAD_POINTS,
                    beta: np.ndarray | None = None) -> float:
    """Effective dose of the population-average curve.

    The dose-0 and dose-infinity reference levels are quadrature sums of
    the per-node analytic asymptotes; the root search runs in log10 dose,
    started from the closed-form conditional effective dose.
    """
    _require_random(fit)
    beta_vec = fit.beta_hat if beta is None else np.asarray(beta, dtype=float)
    cond_params = fit.layout.params_for(beta_vec, curve_id)
    cond_ed = models.conditional_ed(fit.family, cond_params, alpha)
    f_zero, f_inf = marginal_asymptotes(fit, curve_id, n_points, beta)

    xi, weights = _quad_nodes(fit, n_points)
    params, _ = _offset_params(fit, curve_id, xi, beta)

    def fbar(dose: float) -> float:
        return float(models.eval_values(fit.family, dose, params) @ weights)

    t = solve_ed_log10(fbar, f_zero, f_inf, alpha, math.log10(cond_ed))
    return 10.0**t


def delta_method(fit: FitResult, derived, at: np.ndarray | None = None,
                 method: str = "conditional") -> DerivedEstimate:
    """First-order uncertainty propagation for a scalar functional of the
    fixed effects.

    ``derived`` maps a fixed-effects vector to a float; its gradient is
    taken by central differences with step ``cbrt(eps) * max(1, |beta_k|)``
    (one-sided for a positivity-constrained coordinate whose backward
    point would be invalid).  Variance components are treated as known
    constants.
    """
    beta0 = np.array(fit.beta_hat if at is None else at, dtype=float)
    value = float(derived(beta0))
    if not math.isfinite(value):
        raise EvaluationError("derived functional is non-finite at the estimate")
    log_scale = fit.layout.log_scale
    p = beta0.size
    grad = np.empty(p)
    for k in range(p):
        h = _FD_STEP * max(1.0, abs(beta0[k]))
        hi, lo = beta0.copy(), beta0.copy()
        if log_scale[k] and beta0[k] - h <= 0.0:
            hi[k] += h
            f_hi, f_lo = float(derived(hi)), value
            width = h
        else:
            hi[k] += h
            lo[k] -= h
            f_hi, f_lo = float(derived(hi)), float(derived(lo))
            width = 2.0 * h
        if not (math.isfinite(f_hi) and math.isfinite(f_lo)):
            raise EvaluationError(
                f"derived functional is non-finite when perturbing "
                f"coordinate {k} ({fit.beta_names[k]})")
        grad[k] = (f_hi - f_lo) / width
    variance = float(grad @ fit.vcov_beta @ grad)
    std_error = math.sqrt(max(variance, 0.0))
    return DerivedEstimate(value=value, std_error=std_error, gradient=grad,
                           method=method)
