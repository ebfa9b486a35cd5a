"""Command-line front end.

Subcommands: ``fit`` (estimate and store a model), ``ed`` (effective-dose
tables), ``rp`` (relative potencies), ``predict`` (fitted-curve export),
``simulate`` (the replicated estimator-comparison study).

Exit codes: 0 success, 1 configuration error, 2 data error,
3 non-convergence (the result is still written), 4 numeric failure.
Diagnostic messages go to stderr; results go to --out or stdout.  CSV
results written to a path get a ``<path>.meta.json`` sidecar recording
the artifact version, quadrature points, seed and timestamp; JSON results
embed the same block under a ``metadata`` key.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .data import load_csv
from .errors import (DegenerateDataError, DivisionHazardError, DomainError,
                     EvaluationError, MedoseError, MethodError, NoSolutionError,
                     ParseError, RankDeficiencyError, ResourceLimitError,
                     SchemaError, UnknownCurveError, ValidationError)
from .fitting import FitResult, FixedEffectsSpec, RandomEffectsSpec, fit_gnls, fit_nls
from .inference import (ed_table, predict_curves, predictions_to_csv,
                        relative_potency_table, rp_to_csv)
from .models import family_from_name
from .nlme import fit_nlme
from .simulate import (Scenario, parse_scenario_config, resolve_workers,
                       run_study, summary_to_csv)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NOT_CONVERGED = 3
EXIT_NUMERIC = 4


class CliConfigError(MedoseError, ValueError):
    """Invalid command line or option combination."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: A003 - argparse API
        raise CliConfigError(message)


def _split_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _parse_alphas(text: str) -> list[float]:
    """Percent levels like '10,25,50' to fractions in (0, 1)."""
    out = []
    for item in _split_list(text):
        value = float(item) / 100.0
        if not 0.0 < value < 1.0:
            raise CliConfigError(f"alpha percent {item} outside (0, 100)")
        out.append(value)
    if not out:
        raise CliConfigError("no alpha levels given")
    return out


def _metadata(args: argparse.Namespace, estimator: str | None = None) -> dict:
    return {
        "artifact_version": __version__,
        "command": args.command,
        "quad_points": getattr(args, "quad_points", None),
        "seed": getattr(args, "seed", None),
        "estimator": estimator,
        "rng": "philox",
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def _emit(text: str, out_path: str | None, metadata: dict) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        with open(out_path + ".meta.json", "w", encoding="utf-8") as handle:
            json.dump(metadata, handle, indent=2)
            handle.write("\n")
    else:
        sys.stdout.write(text)
        print(json.dumps({"metadata": metadata}), file=sys.stderr)


def _emit_json(payload: dict | list, out_path: str | None, metadata: dict) -> None:
    document = {"metadata": metadata}
    if isinstance(payload, dict):
        document = {**payload, "metadata": metadata}
    else:
        document["rows"] = payload
    text = json.dumps(document, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _add_model_flags(sub: argparse.ArgumentParser, require_data: bool) -> None:
    sub.add_argument("--data", required=require_data, help="input CSV path")
    sub.add_argument("--model", choices=["LL3", "LL4", "LL5"],
                     help="log-logistic family")
    sub.add_argument("--estimator", choices=["nls", "gnls", "nlme"],
                     help="fitting back end")
    sub.add_argument("--separate", default="",
                     help="comma list of parameters fitted per curve, or 'all'")
    sub.add_argument("--random", default="",
                     help="comma list of parameters with cluster random effects")
    sub.add_argument("--re-cov", choices=["diag", "un"], default="un",
                     help="random-effects covariance structure")
    sub.add_argument("--agq", type=int, default=1,
                     help="adaptive quadrature points for the NLME integral")


def _fit_from_args(args: argparse.Namespace) -> FitResult:
    if not args.model or not args.estimator:
        raise CliConfigError("--model and --estimator are required when "
                             "fitting from data")
    family = family_from_name(args.model)
    random_names = tuple(_split_list(args.random))
    if random_names and args.estimator != "nlme":
        raise CliConfigError("--random requires --estimator nlme")
    if args.estimator == "nlme" and not random_names:
        raise CliConfigError("--estimator nlme requires --random")
    separate = _split_list(args.separate)
    if separate == ["all"]:
        separate = list(family.parameter_names)
    for name in separate + list(random_names):
        if name not in family.parameter_names:
            raise CliConfigError(
                f"{name!r} is not a {family.variant} parameter")
    fixed_spec = FixedEffectsSpec({name: "separate" for name in separate})
    dataset = load_csv(args.data)
    if args.estimator == "nls":
        return fit_nls(dataset, family, fixed_spec)
    if args.estimator == "gnls":
        return fit_gnls(dataset, family, fixed_spec)
    structure = "unstructured" if args.re_cov == "un" else "diagonal"
    return fit_nlme(dataset, family, fixed_spec,
                    RandomEffectsSpec(random_names, structure),
                    agq_points=args.agq)


def _load_or_fit(args: argparse.Namespace) -> FitResult:
    if getattr(args, "fit", None):
        return FitResult.load(args.fit)
    if not getattr(args, "data", None):
        raise CliConfigError("provide --fit FIT.json or --data with model flags")
    return _fit_from_args(args)


def _fit_summary_lines(fit: FitResult) -> list[str]:
    lines = [f"estimator: {fit.estimator}  family: {fit.family.variant}",
             f"loglik: {fit.loglik:.6f}  converged: {fit.converged}  "
             f"iterations: {fit.iterations}"]
    ses = np.sqrt(np.clip(np.diag(fit.vcov_beta), 0.0, None))
    for name, value, se in zip(fit.beta_names, fit.beta_hat, ses):
        lines.append(f"  {name:<12s} {value: .6g}  (se {se:.4g})")
    lines.append(f"residual sd: {fit.sigma_hat:.6g}")
    if fit.rho_hat is not None:
        lines.append(f"within-cluster correlation: {fit.rho_hat:.4f}")
    if fit.omega_hat is not None:
        sds = np.sqrt(np.diag(fit.g_hat))
        names = fit.random_spec.random_parameters
        pairs = ", ".join(f"{n}={s:.6g}" for n, s in zip(names, sds))
        lines.append(f"random-effect sds: {pairs}")
    for note in fit.fit_warnings:
        lines.append(f"note: {note}")
    return lines


def cmd_fit(args: argparse.Namespace) -> int:
    fit = _fit_from_args(args)
    payload = fit.to_json_dict()
    _emit_json(payload, args.out, _metadata(args, fit.estimator))
    for line in _fit_summary_lines(fit):
        print(line, file=sys.stderr)
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def cmd_ed(args: argparse.Namespace) -> int:
    fit = _load_or_fit(args)
    alphas = _parse_alphas(args.alphas)
    table = ed_table(fit, alphas, args.method, args.quad_points)
    metadata = _metadata(args, fit.estimator)
    if args.format == "json":
        _emit_json(table.to_json_dict(), args.out, metadata)
    else:
        _emit(table.to_csv(), args.out, metadata)
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def cmd_rp(args: argparse.Namespace) -> int:
    fit = _load_or_fit(args)
    if len(fit.curve_ids) < 2:
        raise CliConfigError("relative potency needs a fit with two curves")
    if args.curves:
        pair = _split_list(args.curves)
        if len(pair) != 2:
            raise CliConfigError("--curves expects 'numerator,denominator'")
        curve_a, curve_b = pair
    else:
        curve_a, curve_b = fit.curve_ids[0], fit.curve_ids[1]
    alphas = _parse_alphas(args.alphas)
    rows = relative_potency_table(fit, curve_a, curve_b, alphas, args.method,
                                  args.quad_points, args.level, args.log_scale)
    metadata = _metadata(args, fit.estimator)
    if args.format == "json":
        _emit_json([r.to_json_dict() for r in rows], args.out, metadata)
    else:
        _emit(rp_to_csv(rows), args.out, metadata)
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def cmd_predict(args: argparse.Namespace) -> int:
    fit = _load_or_fit(args)
    if args.curve:
        curve_id = args.curve
    elif len(fit.curve_ids) == 1:
        curve_id = fit.curve_ids[0]
    else:
        raise CliConfigError("--curve is required for a multi-curve fit")
    which = []
    for token in _split_list(args.which):
        mapped = {"conditional": "conditional", "marginalized": "marginalized",
                  "cluster": "cluster_specific",
                  "cluster_specific": "cluster_specific"}.get(token)
        if mapped is None:
            raise CliConfigError(f"unknown curve kind {token!r}")
        which.append(mapped)
    if args.doses:
        grid = [float(x) for x in _split_list(args.doses)]
    else:
        lo, hi = fit.dose_range
        if not (lo > 0 and hi >= lo):
            raise CliConfigError("stored fit has no usable dose range; "
                                 "pass --doses explicitly")
        grid = list(np.geomspace(lo, hi, args.grid_points))
        if fit.zero_dose_present:
            grid = [0.0] + grid
    rows = predict_curves(fit, curve_id, grid, which, args.quad_points)
    metadata = _metadata(args, fit.estimator)
    if args.format == "json":
        _emit_json([{"dose": r.dose, "label": r.label, "value": r.value}
                    for r in rows], args.out, metadata)
    else:
        _emit(predictions_to_csv(rows), args.out, metadata)
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = (parse_scenario_config(args.scenario) if args.scenario
                else Scenario())
    if args.correlation:
        scenario = Scenario(family=scenario.family,
                            fixed_effects=scenario.fixed_effects,
                            random_sd=scenario.random_sd,
                            correlation=args.correlation,
                            correlation_matrix=scenario.correlation_matrix,
                            residual_sd=scenario.residual_sd,
                            dose_min=scenario.dose_min,
                            dose_max=scenario.dose_max,
                            n_doses=scenario.n_doses,
                            obs_per_dose=scenario.obs_per_dose)
    if args.sigma_e_scale != 1.0:
        scenario = scenario.scale_random_sd("e", args.sigma_e_scale)
    m_list = [int(x) for x in _split_list(args.m)]
    estimators = _split_list(args.estimators)
    alphas = _parse_alphas(args.alphas)
    workers = resolve_workers(args.workers)
    print(f"simulate: m={m_list} replicates={args.replicates} "
          f"estimators={estimators} workers={workers} seed={args.seed}",
          file=sys.stderr)
    summary = run_study(scenario, m_list, args.replicates, alphas, estimators,
                        args.quad_points, args.seed,
                        n_truth_samples=args.truth_samples, workers=workers)
    if summary.total_clamped:
        print(f"note: {summary.total_clamped} generated cluster parameters "
              "were floored to stay positive", file=sys.stderr)
    _emit(summary_to_csv(summary), args.out, _metadata(args))
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="medose",
                     description="Mixed-effects dose-response modelling with "
                                 "marginalized effective doses")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", parents=[], help="fit a model and emit JSON")
    _add_model_flags(p_fit, require_data=True)
    p_fit.add_argument("--out", help="output path for the fit JSON")
    p_fit.set_defaults(func=cmd_fit)

    for name, func, extra in (("ed", cmd_ed, "effective-dose table"),
                              ("rp", cmd_rp, "relative potencies"),
                              ("predict", cmd_predict, "fitted-curve export")):
        p = sub.add_parser(name, help=extra)
        p.add_argument("--fit", help="stored fit JSON (alternative to --data)")
        _add_model_flags(p, require_data=False)
        p.add_argument("--quad-points", type=int, default=9)
        p.add_argument("--format", choices=["csv", "json"], default="csv")
        p.add_argument("--out")
        p.add_argument("--seed", type=int, default=None)
        if name in ("ed", "rp"):
            p.add_argument("--alphas", default="10,25,50,75,90",
                           help="percent response levels")
            p.add_argument("--method",
                           choices=["conditional", "marginalized", "marginal"],
                           default="conditional")
        if name == "rp":
            p.add_argument("--curves", default="",
                           help="numerator,denominator curve ids")
            p.add_argument("--level", type=float, default=0.95)
            p.add_argument("--log-scale", action="store_true",
                           help="log-scale Wald interval for the ratio")
        if name == "predict":
            p.add_argument("--curve", default="")
            p.add_argument("--which", default="conditional",
                           help="conditional,marginalized,cluster")
            p.add_argument("--grid-points", type=int, default=100)
            p.add_argument("--doses", default="",
                           help="explicit comma list of doses")
        p.set_defaults(func=func)

    p_sim = sub.add_parser("simulate", help="replicated estimator comparison")
    p_sim.add_argument("--scenario", help="key=value scenario config file")
    p_sim.add_argument("--m", default="2,5,10,20",
                       help="comma list of cluster counts")
    p_sim.add_argument("--replicates", type=int, default=200)
    p_sim.add_argument("--alphas", default="10,50,90")
    p_sim.add_argument("--estimators", default="nlme,gnls,nls")
    p_sim.add_argument("--correlation", choices=["unstructured", "diagonal"],
                       default=None, help="override the scenario correlation")
    p_sim.add_argument("--sigma-e-scale", type=float, default=1.0,
                       help="multiply the inflection-point random SD")
    p_sim.add_argument("--quad-points", type=int, default=9)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--truth-samples", type=int, default=100_000)
    p_sim.add_argument("--workers", type=int, default=None)
    p_sim.add_argument("--out")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliConfigError, MethodError, DomainError, UnknownCurveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_DATA
    except (SchemaError, ParseError, ValidationError,
            DegenerateDataError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RankDeficiencyError, NoSolutionError, EvaluationError,
            DivisionHazardError, ResourceLimitError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
