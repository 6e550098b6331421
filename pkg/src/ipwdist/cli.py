"""Command-line interface.

Exit codes: 0 success, 1 invalid input or configuration, 2 internal error.
Test decisions are part of the JSON payload, never the exit code.
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
from pathlib import Path

from . import __version__
from .data import Arm, DataError, Schema, emit_csv, ingest_csv, validate
from .ecdf import ate, estimate_cdf, naive_mean_diff, qte, quantile
from .propensity import DEFAULT_DELTA, DEFAULT_RIDGE, fit_propensity, select_basis_cv
from .simulation import SCENARIOS, MonteCarloConfig, ScenarioSpec, generate, get_scenario, run_monte_carlo
from .subsampling import confidence_band, default_m, dominance_test
from .wilcoxon import test_equality_normal, test_equality_subsampling, theta01

PROBS = (0.25, 0.5, 0.75)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2, which is reserved
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--y-col", default="y")
    p.add_argument("--t-col", default="t")
    p.add_argument("--x-cols", default="x", help="comma-separated covariate columns")
    p.add_argument("--degrees", type=_int_list, default=[0, 1, 2, 3], help="candidate sieve degrees")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)


def _add_common(p: argparse.ArgumentParser, subsampling: bool = True) -> None:
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None, help="master seed; drawn and printed if absent")
    p.add_argument("--out", default=None, help="output directory (JSON is also printed)")
    if subsampling:
        p.add_argument("--m", type=int, default=None, help="subsample size (default ceil(n^0.7))")
        p.add_argument("--M", type=int, default=1000, help="number of subsamples")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--no-refit", action="store_true", help="reuse the full-sample propensity in subsamples")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ipwdist", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="point estimates: theta01, ATE, QTE, ECDFs")
    _add_data_flags(p)
    _add_common(p, subsampling=False)

    p = sub.add_parser("test", help="Wilcoxon equality tests or the dominance test")
    _add_data_flags(p)
    _add_common(p)
    p.add_argument("--which", required=True, choices=["wilcoxon-normal", "wilcoxon-subsample", "dominance"])

    p = sub.add_parser("band", help="uniform confidence band for one or both arm CDFs")
    _add_data_flags(p)
    _add_common(p)
    p.add_argument("--arm", default="both", choices=["treated", "control", "both"])

    p = sub.add_parser("simulate", help="Monte Carlo study on a built-in scenario")
    p.add_argument("--scenario", required=True, help=f"one of {sorted(SCENARIOS)} (or i / ii)")
    p.add_argument("--replications", "-N", type=int, default=200)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--degrees", type=_int_list, default=[0, 1, 2, 3])
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--full-scale", action="store_true", help="N=1000 replications with M=1000 subsamples")
    p.add_argument("--no-subsampling", action="store_true", help="point estimates and normal CIs only")
    p.add_argument("--out", default=None)

    p = sub.add_parser("generate", help="write one scenario sample as CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="CSV path")
    return parser


def _seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbelow(2**32)
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise UsageError(f"--alpha must lie in (0, 1), got {alpha}")


def _load(args):
    schema = Schema(y=args.y_col, t=args.t_col, x=tuple(c.strip() for c in args.x_cols.split(",") if c.strip()))
    sample = ingest_csv(args.input, schema)
    report = validate(sample)
    if report.n_treated == 0 or report.n_control == 0:
        raise DataError("; ".join(report.flags))
    basis = select_basis_cv(sample, args.degrees, min(args.folds, sample.n), args.delta, args.ridge, seed=args.seed)
    model = fit_propensity(sample, basis, args.delta, args.ridge)
    return sample, report, model


def _m(args, n: int) -> int:
    m = default_m(n) if args.m is None else args.m
    if not 2 <= m < n:
        raise UsageError(f"--m must satisfy 2 <= m < n={n}, got {m}")
    if args.M < 1:
        raise UsageError("--M must be >= 1")
    return m


def _emit(doc: dict, out: str | None, name: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _propensity_summary(model) -> dict:
    fitted = model.fitted
    return {
        **model.to_dict(),
        "fitted_min": float(fitted.min()),
        "fitted_max": float(fitted.max()),
        "n_clipped": int(((fitted <= model.delta) | (fitted >= 1.0 - model.delta)).sum()),
    }


def cmd_estimate(args) -> int:
    _seed(args)
    _check_alpha(args.alpha)
    sample, report, model = _load(args)
    e1 = estimate_cdf(sample, model, Arm.TREATED)
    e0 = estimate_cdf(sample, model, Arm.CONTROL)
    doc = {
        "n": sample.n,
        "seed": args.seed,
        "validation": report.to_dict(),
        "propensity": _propensity_summary(model),
        "theta01": theta01(e0, e1),
        "ate": ate(e1, e0),
        "naive_diff": naive_mean_diff(sample),
        "qte": {f"{p:.2f}": qte(e1, e0, p) for p in PROBS},
        "quantiles": {
            "treated": {f"{p:.2f}": quantile(e1, p) for p in PROBS},
            "control": {f"{p:.2f}": quantile(e0, p) for p in PROBS},
        },
    }
    if args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        e1.to_csv(Path(args.out) / "ecdf_treated.csv")
        e0.to_csv(Path(args.out) / "ecdf_control.csv")
        (Path(args.out) / "propensity_model.json").write_text(model.to_json() + "\n", encoding="utf-8")
    _emit(doc, args.out, "estimate.json")
    return 0


def cmd_test(args) -> int:
    _seed(args)
    _check_alpha(args.alpha)
    sample, _, model = _load(args)
    refit = not args.no_refit
    if args.which == "wilcoxon-normal":
        doc = test_equality_normal(sample, model, args.alpha).to_dict()
    elif args.which == "wilcoxon-subsample":
        m = _m(args, sample.n)
        doc = test_equality_subsampling(sample, model, args.alpha, m, args.M, args.seed, refit, args.jobs).to_dict()
    else:
        m = _m(args, sample.n)
        doc = dominance_test(sample, model, args.alpha, m, args.M, args.seed, refit, args.jobs).to_dict()
    doc["test"] = args.which
    doc["propensity_degree"] = model.basis.degree
    _emit(doc, args.out, f"{args.which}.json")
    return 0


def cmd_band(args) -> int:
    _seed(args)
    _check_alpha(args.alpha)
    sample, _, model = _load(args)
    m = _m(args, sample.n)
    arms = [Arm.TREATED, Arm.CONTROL] if args.arm == "both" else [Arm.parse(args.arm)]
    docs = {}
    for arm in arms:
        band = confidence_band(sample, model, arm, args.alpha, m, args.M, args.seed, not args.no_refit, args.jobs)
        name = arm.name.lower()
        docs[name] = band.to_dict()
        if args.out is not None:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            band.to_csv(Path(args.out) / f"band_{name}.csv")
    _emit({"bands": docs, "propensity_degree": model.basis.degree}, args.out, "band.json")
    return 0


def cmd_simulate(args) -> int:
    _seed(args)
    _check_alpha(args.alpha)
    try:
        scenario = get_scenario(args.scenario).id
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    make = MonteCarloConfig.full if args.full_scale else MonteCarloConfig.desk
    overrides = {
        "replications": args.replications if not args.full_scale else 1000,
        "alpha": args.alpha,
        "degrees": tuple(args.degrees),
        "delta": args.delta,
        "seed": args.seed,
        "jobs": args.jobs,
        "subsampling": not args.no_subsampling,
    }
    if args.m is not None:
        overrides["m"] = args.m
    if args.M is not None:
        overrides["M"] = args.M
    config = make(scenario, args.n, **overrides)
    report = run_monte_carlo(config)
    if args.out is not None:
        report.write(args.out)
    sys.stdout.write(report.to_json() + "\n")
    return 0


def cmd_generate(args) -> int:
    _seed(args)
    try:
        spec = ScenarioSpec(args.scenario, args.n, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    emit_csv(generate(spec), args.out)
    return 0


COMMANDS = {
    "estimate": cmd_estimate,
    "test": cmd_test,
    "band": cmd_band,
    "simulate": cmd_simulate,
    "generate": cmd_generate,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
