"""Nonlinear mixed-effects estimation by Laplace-approximate maximum
likelihood.

Model: within cluster i the response is f(x, beta_i) + noise with
independent N(0, sigma^2) errors, and beta_i adds a cluster random effect
b_i ~ N(0, G) to the named parameters of the fixed-effect curve.  The
marginal likelihood integrates the random effects out; the integral is
approximated by Laplace's method around the per-cluster posterior mode
(optionally sharpened by adaptive Gauss-Hermite quadrature for one or two
random effects).

Internals are batched across clusters: per-cluster arrays are padded to a
common length and masked, so one optimizer step costs a handful of numpy
calls regardless of the number of clusters.  The random effects are
optimized on the standardized scale u (b = Omega u), which stays
well-conditioned as variance components collapse to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from . import models
from .data import Dataset
from .errors import DegenerateDataError, DomainError
from .fitting import (FitResult, FixedEffectsSpec, RandomEffectsSpec,
                      _Problem, _prepare, fit_nls)
from .models import ModelFamily
from .quadrature import build_grid

# Newton-step size below which a cluster mode counts as found; sits above
# the noise floor of the finite-difference inner gradient.
_INNER_STEP_TOL = 1e-7
_INNER_MAXIT = 50
_OUTER_MAXIT = 500
_LOGSD_LO, _LOGSD_HI = -16.0, 20.0
_HESS_STEP = float(np.finfo(float).eps ** 0.25)


@dataclass
class _NlmeProblem:
    base: _Problem
    random_spec: RandomEffectsSpec
    rand_cols: np.ndarray       # (r,) indices into the family parameter order
    doses: np.ndarray           # (m, nmax) padded
    resp: np.ndarray            # (m, nmax) padded
    mask: np.ndarray            # (m, nmax) 1.0 for real observations
    curve_code: np.ndarray      # (m, nmax) curve index per slot
    sizes: np.ndarray           # (m,) true cluster sizes

    @property
    def n_clusters(self) -> int:
        return self.doses.shape[0]

    @property
    def r(self) -> int:
        return self.rand_cols.size


def _build_nlme_problem(problem: _Problem,
                        random_spec: RandomEffectsSpec) -> _NlmeProblem:
    family = problem.family
    for name in random_spec.random_parameters:
        if name not in family.parameter_names:
            raise DomainError(
                f"random effect on {name!r} is not a {family.variant} parameter")
    rand_cols = np.array([family.index_of(name)
                          for name in random_spec.random_parameters])
    m = len(problem.cluster_ids)
    if m < 2:
        raise DegenerateDataError("mixed-effects fit needs at least 2 clusters")
    nmax = int(problem.cluster_sizes.max())
    doses = np.ones((m, nmax))
    resp = np.zeros((m, nmax))
    mask = np.zeros((m, nmax))
    curve_code = np.zeros((m, nmax), dtype=int)
    for ci in range(m):
        rows = np.nonzero(problem.cluster_codes == ci)[0]
        k = rows.size
        doses[ci, :k] = problem.doses[rows]
        resp[ci, :k] = problem.responses[rows]
        mask[ci, :k] = 1.0
        curve_code[ci, :k] = problem.curve_codes[rows]
    return _NlmeProblem(base=problem, random_spec=random_spec,
                        rand_cols=rand_cols, doses=doses, resp=resp,
                        mask=mask, curve_code=curve_code,
                        sizes=problem.cluster_sizes.copy())


def _base_params(nlp: _NlmeProblem, beta: np.ndarray) -> np.ndarray:
    """Natural parameters per observation slot, shape (m, nmax, q)."""
    per_curve = nlp.base.layout.curve_matrix(beta)    # (K, q)
    return per_curve[nlp.curve_code]


def _eval_offsets(nlp: _NlmeProblem, base: np.ndarray,
                  b_mat: np.ndarray) -> np.ndarray:
    """Curve values with random-effect offsets.

    ``base`` has shape (m, nmax, q); ``b_mat`` broadcasts to
    (..., m, r) and the result has shape (..., m, nmax).
    """
    params = np.broadcast_to(
        base, b_mat.shape[:-1] + base.shape[-2:]).copy()
    params[..., nlp.rand_cols] += b_mat[..., None, :]
    return models.eval_values(nlp.base.family, nlp.doses, params)


def _penalized_sq(nlp: _NlmeProblem, base: np.ndarray, omega: np.ndarray,
                  sigma2: float, u_mat: np.ndarray) -> np.ndarray:
    """Inner objective h(u) = ||masked residual||^2 / (2 sigma^2) + ||u||^2 / 2
    per cluster; shape broadcasts with the leading dims of ``u_mat``."""
    b_mat = u_mat @ omega.T
    fvals = _eval_offsets(nlp, base, b_mat)
    resid = nlp.mask * (nlp.resp - fvals)
    return (np.sum(resid * resid, axis=-1) / (2.0 * sigma2)
            + 0.5 * np.sum(u_mat * u_mat, axis=-1))


def _residual_and_jacobian(nlp: _NlmeProblem, base: np.ndarray,
                           omega: np.ndarray, u_mat: np.ndarray):
    """Masked residuals plus the central-difference Jacobian d f / d u.

    Stacks the 2r+1 required evaluations into a single vectorized call.
    Returns (resid (m, n), jac (m, n, r)).
    """
    m, r = u_mat.shape
    steps = _FD_STEP_U * np.maximum(1.0, np.abs(u_mat))     # (m, r)
    stack = np.broadcast_to(u_mat, (2 * r + 1, m, r)).copy()
    for j in range(r):
        stack[1 + 2 * j, :, j] += steps[:, j]
        stack[2 + 2 * j, :, j] -= steps[:, j]
    fvals = _eval_offsets(nlp, base, stack @ omega.T)        # (2r+1, m, n)
    resid = nlp.mask * (nlp.resp - fvals[0])
    jac = np.empty((m, nlp.doses.shape[1], r))
    for j in range(r):
        jac[:, :, j] = (fvals[1 + 2 * j] - fvals[2 + 2 * j]) / (2.0 * steps[:, j])[:, None]
    jac *= nlp.mask[:, :, None]
    return resid, jac


_FD_STEP_U = float(np.cbrt(np.finfo(float).eps))


def _inner_modes(nlp: _NlmeProblem, base: np.ndarray, omega: np.ndarray,
                 sigma2: float, u_start: np.ndarray):
    """Find all per-cluster posterior modes by Gauss-Newton with
    backtracking.

    Convergence is declared per cluster when the full Newton step becomes
    negligible (scale-free, unlike a raw gradient norm).  Returns
    (u_hat, h_hat, gn_hessian, all_converged); the Gauss-Newton Hessian is
    J'J / sigma^2 + I in the standardized coordinates and has eigenvalues
    >= 1, so the undamped step is always defined.
    """
    m, r = u_start.shape
    eye = np.eye(r)
    u = u_start.copy()
    h = _penalized_sq(nlp, base, omega, sigma2, u)
    bad = ~np.isfinite(h)
    if bad.any():
        u[bad] = 0.0
        h = _penalized_sq(nlp, base, omega, sigma2, u)
    ok = np.zeros(m, dtype=bool)
    gn = np.broadcast_to(eye, (m, r, r)).copy()
    for _ in range(_INNER_MAXIT):
        resid, jac = _residual_and_jacobian(nlp, base, omega, u)
        grad = -np.einsum("mnr,mn->mr", jac, resid) / sigma2 + u
        gn = np.einsum("mnr,mns->mrs", jac, jac) / sigma2 + eye
        finite = (np.isfinite(grad).all(axis=1) & np.isfinite(gn).all(axis=(1, 2)))
        delta = np.zeros_like(grad)
        if finite.any():
            # tiny relative ridge keeps the solve factorizable when J'J/sigma^2
            # dwarfs the +I at extreme variance proposals
            sub = gn[finite]
            tau = 1e-12 * np.abs(sub).max(axis=(1, 2))
            sub = sub + tau[:, None, None] * eye
            delta[finite] = np.linalg.solve(sub, -grad[finite][..., None])[..., 0]
        ok = finite & (np.abs(delta).max(axis=1) < _INNER_STEP_TOL)
        if ok.all():
            break
        step = np.where(ok, 0.0, 1.0)
        moved = np.zeros(m, dtype=bool)
        for _ in range(25):
            active = (step > 0.0) & ~moved
            if not active.any():
                break
            u_try = u + step[:, None] * delta * active[:, None]
            h_try = _penalized_sq(nlp, base, omega, sigma2, u_try)
            improved = active & np.isfinite(h_try) & (h_try <= h + 1e-12)
            u = np.where(improved[:, None], u_try, u)
            h = np.where(improved, h_try, h)
            moved |= improved
            step = np.where(active & ~improved, 0.5 * step, step)
            if step[active & ~improved].size and step[active & ~improved].max() < 1e-8:
                break
        if not moved.any():
            break
    h = _penalized_sq(nlp, base, omega, sigma2, u)
    return u, h, gn, bool(ok.all())


def _marginal_loglik(nlp: _NlmeProblem, beta: np.ndarray, omega: np.ndarray,
                     sigma: float, u_state: np.ndarray,
                     agq_points: int = 1) -> tuple[float, np.ndarray, bool]:
    """Laplace (or adaptive Gauss-Hermite) marginal log-likelihood.

    ``u_state`` supplies inner starting values and receives the new modes.
    """
    sigma2 = sigma * sigma
    base = _base_params(nlp, beta)
    u_hat, h_hat, gn, inner_ok = _inner_modes(nlp, base, omega, sigma2, u_state)
    if not (np.all(np.isfinite(h_hat)) and np.all(np.isfinite(gn))):
        return -np.inf, u_hat, False
    sign, logdet = np.linalg.slogdet(gn)
    if not np.all(sign > 0):
        return -np.inf, u_hat, False
    const = -0.5 * nlp.sizes * math.log(2.0 * math.pi * sigma2)
    if agq_points <= 1:
        ll = float(np.sum(const - h_hat - 0.5 * logdet))
        return ll, u_hat, inner_ok
    grid = build_grid(agq_points, nlp.r)
    psi = grid.nodes                                   # (r, K)
    half_sq = 0.5 * np.sum(psi * psi, axis=0)          # (K,)
    chol = np.linalg.cholesky(gn)                      # (m, r, r)
    shift = np.linalg.solve(np.transpose(chol, (0, 2, 1)),
                            np.broadcast_to(psi, (nlp.n_clusters,) + psi.shape))
    u_nodes = np.transpose(shift, (2, 0, 1)) + u_hat[None]       # (K, m, r)
    h_nodes = _penalized_sq(nlp, base, omega, sigma2, u_nodes)   # (K, m)
    log_terms = (np.log(grid.weights) + half_sq)[:, None] - h_nodes
    ll = float(np.sum(const - 0.5 * logdet + logsumexp(log_terms, axis=0)))
    return ll, u_hat, inner_ok


def _omega_from_params(params: np.ndarray, spec: RandomEffectsSpec) -> np.ndarray:
    r = spec.dimension
    omega = np.zeros((r, r))
    if spec.covariance_structure == "diagonal":
        omega[np.arange(r), np.arange(r)] = np.exp(params)
        return omega
    k = 0
    for i in range(r):
        for j in range(i + 1):
            omega[i, j] = math.exp(params[k]) if i == j else params[k]
            k += 1
    return omega


def _params_from_omega(omega: np.ndarray, spec: RandomEffectsSpec) -> np.ndarray:
    r = spec.dimension
    diag = np.clip(np.diag(omega), math.exp(_LOGSD_LO), None)
    if spec.covariance_structure == "diagonal":
        return np.log(diag)
    out = []
    for i in range(r):
        for j in range(i + 1):
            out.append(math.log(diag[i]) if i == j else float(omega[i, j]))
    return np.array(out)


def _starting_covariance(dataset: Dataset, family: ModelFamily,
                         problem: _Problem, random_spec: RandomEffectsSpec,
                         beta0: np.ndarray) -> tuple[np.ndarray, float | None]:
    """Diagonal starting factor from the spread of per-cluster NLS fits,
    falling back to 10% of the fixed effect when any cluster fails.

    The spread is measured robustly (scaled median absolute deviation) and
    capped relative to the fixed effect, so a single wild cluster fit
    cannot derail the start.  Also returns a pooled within-cluster
    residual SD when available.
    """
    layout = problem.layout
    rand_cols = [family.index_of(name) for name in random_spec.random_parameters]
    per_cluster: list[np.ndarray] = []
    resid_vars: list[float] = []
    try:
        for cid in problem.cluster_ids:
            sub = dataset.subset(dataset.cluster_index[cid])
            sub_fit = fit_nls(sub, family, FixedEffectsSpec())
            per_cluster.append(sub_fit.beta_hat)
            resid_vars.append(sub_fit.sigma_hat**2)
    except Exception:
        per_cluster = []
        resid_vars = []
    mean_abs = np.abs(layout.curve_matrix(beta0)).mean(axis=0)   # (q,)
    scale = np.where(mean_abs[rand_cols] > 0, mean_abs[rand_cols], 1.0)
    fallback = 0.1 * scale
    if len(per_cluster) == len(problem.cluster_ids) and len(per_cluster) >= 2:
        stacked = np.vstack(per_cluster)[:, rand_cols]
        mad = np.median(np.abs(stacked - np.median(stacked, axis=0)), axis=0)
        sds = 1.4826 * mad
        sds = np.where(np.isfinite(sds) & (sds > 0), sds, fallback)
        sds = np.clip(sds, 1e-3 * scale, scale)
    else:
        sds = fallback
    sigma_within = math.sqrt(float(np.mean(resid_vars))) if resid_vars else None
    return np.diag(sds), sigma_within


def fit_nlme(dataset: Dataset, family: ModelFamily,
             fixed_spec: FixedEffectsSpec | None = None,
             random_spec: RandomEffectsSpec | None = None,
             agq_points: int = 1,
             max_iterations: int = _OUTER_MAXIT) -> FitResult:
    """Maximize the Laplace-approximate marginal likelihood.

    The outer quasi-Newton search runs over the fixed effects (inflection
    and asymmetry on the log scale), the log-Cholesky factor of the
    random-effects covariance, and log sigma, all rescaled to unit order.
    Setting ``agq_points > 1`` (one or two random effects only) refines the
    Laplace integral with adaptive Gauss-Hermite quadrature.

    A collapsing variance component is reported as a standard deviation
    close to zero rather than an error; refitting with a smaller random
    structure is left to the caller.
    """
    fixed_spec = fixed_spec or FixedEffectsSpec()
    if random_spec is None:
        raise DomainError("fit_nlme requires a RandomEffectsSpec")
    if agq_points > 1 and random_spec.dimension > 2:
        raise DomainError("adaptive quadrature refinement supports at most "
                          "two random effects")
    problem = _prepare(dataset, family, fixed_spec)
    nlp = _build_nlme_problem(problem, random_spec)
    layout = problem.layout
    m, r = nlp.n_clusters, nlp.r

    nls_fit = fit_nls(dataset, family, fixed_spec)
    beta0 = nls_fit.beta_hat
    omega0, sigma_within = _starting_covariance(dataset, family, problem,
                                                random_spec, beta0)
    sigma0 = min(max(sigma_within or nls_fit.sigma_hat,
                     math.exp(_LOGSD_LO + 1)),
                 math.exp(_LOGSD_HI - 1))

    theta0 = np.concatenate([
        layout.to_optimizer(beta0),
        _params_from_omega(omega0, random_spec),
        [math.log(sigma0)],
    ])
    p_t = layout.dimension
    n_ch = random_spec.n_covariance_params()
    scales = np.maximum(1.0, np.abs(theta0))

    chol_diag_pos = []
    chol_row_offdiag: list[list[int]] = [[] for _ in range(r)]
    if random_spec.covariance_structure == "diagonal":
        chol_diag_pos = list(range(p_t, p_t + r))
    else:
        k = p_t
        for i in range(r):
            for j in range(i + 1):
                if i == j:
                    chol_diag_pos.append(k)
                else:
                    chol_row_offdiag[i].append(k)
                k += 1
    bounds: list[tuple[float | None, float | None]] = [(None, None)] * theta0.size
    for k in chol_diag_pos:
        bounds[k] = (_LOGSD_LO / scales[k], _LOGSD_HI / scales[k])
    bounds[-1] = (_LOGSD_LO / scales[-1], _LOGSD_HI / scales[-1])
    for k in chol_diag_pos + [theta0.size - 1]:
        theta0[k] = np.clip(theta0[k], _LOGSD_LO + 1e-6, _LOGSD_HI - 1e-6)

    # inner warm-start policy: the exploratory phase tracks the most recent
    # evaluation (cheap), the polish phase anchors at the incumbent best so
    # that finite-difference probes see a mutually consistent objective and
    # mode-tracking hysteresis cannot fake a local optimum
    u_state = {"u": np.zeros((m, r)), "best": np.inf, "anchored": False}

    def unpack(x: np.ndarray):
        theta = x * scales
        beta = layout.from_optimizer(theta[:p_t])
        omega = _omega_from_params(theta[p_t:p_t + n_ch], random_spec)
        sigma = math.exp(theta[-1])
        return beta, omega, sigma

    def negloglik(x: np.ndarray) -> float:
        beta, omega, sigma = unpack(x)
        ll, u_hat, _ = _marginal_loglik(nlp, beta, omega, sigma,
                                        u_state["u"], agq_points)
        if not np.isfinite(ll):
            return 1e300
        value = -ll
        if u_state["anchored"]:
            if value < u_state["best"]:
                u_state["best"] = value
                u_state["u"] = u_hat
        else:
            u_state["u"] = u_hat
        return value

    def optimize(x_init: np.ndarray):
        return minimize(negloglik, x_init, method="L-BFGS-B", bounds=bounds,
                        options={"maxiter": max_iterations, "ftol": 1e-11,
                                 "gtol": 1e-7,
                                 "maxfun": max_iterations * (theta0.size + 3)})

    x0 = theta0 / scales
    res = optimize(x0)
    if not res.success or res.nit == 0:
        # retry from a shrunken covariance start; keeps occasional wild
        # per-cluster spreads from stalling the line search at step one
        x_alt = x0.copy()
        for k in chol_diag_pos:
            x_alt[k] = max((theta0[k] - math.log(4.0)) / scales[k],
                           _LOGSD_LO / scales[k])
        u_state["u"] = np.zeros((m, r))
        res_alt = optimize(x_alt)
        if (res_alt.success and not res.success) or res_alt.fun < res.fun - 1e-9:
            res = res_alt
    # anchored polish with fresh restarts; escapes false flats left behind
    # by a stale quasi-Newton curvature model or warm-start hysteresis
    u_state["anchored"] = True
    total_nit = res.nit
    for _ in range(3):
        u_state["best"] = np.inf
        u_state["u"] = np.zeros((m, r))
        res_next = optimize(res.x)
        total_nit += res_next.nit
        improved = res_next.fun < res.fun - 1e-7 * max(1.0, abs(res.fun))
        if res_next.fun <= res.fun:
            res = res_next
        if not improved:
            break

    def cold_value(x: np.ndarray) -> float:
        beta, omega, sigma = unpack(x)
        ll, _, _ = _marginal_loglik(nlp, beta, omega, sigma,
                                    np.zeros((m, r)), agq_points)
        return -ll if np.isfinite(ll) else 1e300

    # boundary preference: where the likelihood is flat down to a zero
    # variance component, adopt the exact collapse (the flat region
    # otherwise leaves an arbitrary small variance behind)
    x_best = res.x.copy()
    f_best = cold_value(x_best)
    flat_tol = 1e-7 * max(1.0, abs(f_best))
    collapsed = False
    for j, k in enumerate(chol_diag_pos):
        if x_best[k] * scales[k] <= _LOGSD_LO + 1e-6:
            continue
        x_try = x_best.copy()
        x_try[k] = _LOGSD_LO / scales[k]
        for pos in chol_row_offdiag[j]:
            x_try[pos] = 0.0
        f_try = cold_value(x_try)
        if f_try <= f_best + flat_tol:
            x_best, f_best, collapsed = x_try, f_try, True
    if collapsed:
        u_state["best"] = np.inf
        u_state["u"] = np.zeros((m, r))
        res_post = optimize(x_best)
        total_nit += res_post.nit
        f_post = cold_value(res_post.x)
        if f_post <= f_best:
            x_best, f_best = res_post.x, f_post

    beta_hat, omega_hat, sigma_hat = unpack(x_best)
    # canonical cold-start evaluation at the optimum: the reported loglik,
    # modes and downstream Hessians must not depend on the optimizer's
    # warm-start trajectory
    loglik, u_hat, inner_ok = _marginal_loglik(nlp, beta_hat, omega_hat,
                                               sigma_hat,
                                               np.zeros((m, r)), agq_points)
    u_state["u"] = u_hat

    grad_scale = max(1.0, abs(loglik))
    grad_ok = bool(np.max(np.abs(res.jac)) < 1e-4 * grad_scale)
    converged = bool((res.success or grad_ok) and inner_ok
                     and np.isfinite(loglik))
    iterations = int(total_nit)

    warnings: list[str] = []
    sd_floor = math.exp(_LOGSD_LO + 0.5)
    if np.any(np.diag(omega_hat) <= sd_floor):
        warnings.append("variance_component_near_zero")

    vcov, info_warning = _beta_vcov(nlp, beta_hat, omega_hat, sigma_hat,
                                    u_state, agq_points)
    if info_warning:
        warnings.append(info_warning)

    eblups = u_hat @ omega_hat.T
    cluster_curves = {
        cid: tuple(sorted({dataset.observations[i].curve_id
                           for i in dataset.cluster_index[cid]}))
        for cid in problem.cluster_ids
    }
    dose_range, zero_present = problem.dose_metadata()
    return FitResult(
        estimator="NLME", family=family, fixed_spec=fixed_spec,
        random_spec=random_spec, beta_hat=beta_hat, vcov_beta=vcov,
        omega_hat=omega_hat, sigma_hat=sigma_hat, rho_hat=None,
        loglik=float(loglik), converged=converged, iterations=iterations,
        beta_names=layout.names, curve_ids=layout.curve_ids,
        cluster_ids=problem.cluster_ids, ranef_modes=eblups,
        cluster_curves=cluster_curves, n_obs=problem.n_obs,
        dose_range=dose_range, zero_dose_present=zero_present,
        fit_warnings=tuple(warnings))


def _beta_vcov(nlp: _NlmeProblem, beta_hat: np.ndarray, omega: np.ndarray,
               sigma: float, u_state: dict, agq_points: int):
    """Covariance of the fixed effects from the inverted beta block of the
    observed information, holding the variance components fixed."""
    p = beta_hat.size
    log_scale = nlp.base.layout.log_scale

    def ll_at(beta: np.ndarray) -> float:
        val, u_hat, _ = _marginal_loglik(nlp, beta, omega, sigma,
                                         u_state["u"], agq_points)
        return val

    steps = np.array([_HESS_STEP * max(1.0, abs(beta_hat[k])) for k in range(p)])
    for k in range(p):
        if log_scale[k] and beta_hat[k] - 2 * steps[k] <= 0:
            steps[k] = beta_hat[k] / 4.0
    ll0 = ll_at(beta_hat)
    hess = np.empty((p, p))
    for j in range(p):
        ej = np.zeros(p)
        ej[j] = steps[j]
        hess[j, j] = (ll_at(beta_hat + ej) - 2.0 * ll0
                      + ll_at(beta_hat - ej)) / steps[j] ** 2
        for k in range(j):
            ek = np.zeros(p)
            ek[k] = steps[k]
            val = (ll_at(beta_hat + ej + ek) - ll_at(beta_hat + ej - ek)
                   - ll_at(beta_hat - ej + ek) + ll_at(beta_hat - ej - ek))
            hess[j, k] = hess[k, j] = val / (4.0 * steps[j] * steps[k])
    info = -0.5 * (hess + hess.T)
    warning = None
    try:
        vcov = np.linalg.inv(info)
        if np.any(np.diag(vcov) < 0):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh(info)
        floor = max(1e-10, 1e-10 * float(eigvals.max()))
        eigvals = np.clip(eigvals, floor, None)
        vcov = eigvecs @ np.diag(1.0 / eigvals) @ eigvecs.T
        warning = "information_not_positive_definite"
    return 0.5 * (vcov + vcov.T), warning


def loglik_nlme(dataset: Dataset, family: ModelFamily,
                fixed_spec: FixedEffectsSpec | None,
                random_spec: RandomEffectsSpec, beta: np.ndarray,
                omega: np.ndarray, sigma: float,
                agq_points: int = 1) -> float:
    """Independent marginal log-likelihood evaluator (cold inner start)."""
    fixed_spec = fixed_spec or FixedEffectsSpec()
    problem = _prepare(dataset, family, fixed_spec)
    nlp = _build_nlme_problem(problem, random_spec)
    u0 = np.zeros((nlp.n_clusters, nlp.r))
    ll, _, _ = _marginal_loglik(nlp, np.asarray(beta, dtype=float),
                                np.asarray(omega, dtype=float), sigma, u0,
                                agq_points)
    return ll
