"""Command-line front end.

Subcommands: ``fit``, ``influence``, ``asymptotics``, ``simulate``.
Exit codes: 0 success, 1 input error, 2 numerical failure, 3 internal
self-check mismatch.
"""

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

from . import asymptotics
from .errors import InvalidInputError, L2KLError, QuadratureError, SingularMatrixError, SolverError
from .minl2 import fit_min_l2
from .ml import fit_ml_mvn, fit_ml_normal
from .model import MvnParams, NormalParams
from .robustkl import LocalFitSpec, fit_mvn_robust, fit_robust_kl
from .simharness import Contaminant, EstimatorSpec, ScenarioSpec, run_scenario
from .weights import KernelSpec, WeightFunction

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_SELFCHECK = 0, 1, 2, 3
SELF_CHECK_RTOL = 1e-6

logger = logging.getLogger("l2kl")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ input

def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def parse_csv(text):
    """Parse comma-separated numeric columns.

    A first line with any non-numeric field is taken as a header. Blank
    lines are skipped. Returns ``(header or None, array of shape (n, p))``.
    """
    header, rows, width = None, [], None
    for lineno, fields in enumerate(csv.reader(io.StringIO(text)), start=1):
        fields = [f.strip() for f in fields]
        if not fields or all(f == "" for f in fields):
            continue
        if not rows and header is None and not all(_is_number(f) for f in fields):
            header = fields
            continue
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            raise InvalidInputError(f"line {lineno}: non-numeric field in {','.join(fields)!r}") from None
        if not all(np.isfinite(vals)):
            raise InvalidInputError(f"line {lineno}: non-finite value")
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise InvalidInputError(f"line {lineno}: expected {width} columns, got {len(vals)}")
        rows.append(vals)
    if not rows:
        raise InvalidInputError("input must contain at least one row of numeric data")
    return header, np.array(rows, dtype=float)


def _read_input(path):
    if path in (None, "-"):
        return sys.stdin.read()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from exc


# ----------------------------------------------------------------- output

def _round(v, precision):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(f"{float(v):.{precision}g}")
    if isinstance(v, dict):
        return {k: _round(x, precision) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_round(x, precision) for x in v]
    return v


def _emit_json(obj, precision, out):
    out.write(json.dumps(_round(obj, precision), indent=2) + "\n")


def _emit_csv(header, rows, precision, out):
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{float(v):.{precision}g}" for v in row])


# --------------------------------------------------------------- commands

def _weight_from_args(args):
    if args.weight == "constant":
        return WeightFunction.constant()
    if args.weight == "exp-delta":
        if args.delta is None:
            raise InvalidInputError("--weight exp-delta needs --delta")
        return WeightFunction.exp_delta(args.delta)
    if args.x0 is None or args.h is None:
        raise InvalidInputError("--weight kernel needs --x0 and --h")
    return WeightFunction.kernel_local(args.x0, KernelSpec(args.h))


def cmd_fit(args, out):
    _, data = parse_csv(_read_input(args.input))
    if args.model == "normal":
        if data.shape[1] != 1:
            raise InvalidInputError(f"--model normal expects one column, got {data.shape[1]}")
        x = data[:, 0]
        if args.method == "ml":
            fit = fit_ml_normal(x)
        elif args.method == "l2":
            fit = fit_min_l2(x, w=_weight_from_args(args))
        else:
            fit = fit_robust_kl(x, LocalFitSpec(k=args.k, x0=args.x0))
    else:
        if args.method == "ml":
            fit = fit_ml_mvn(data)
        elif args.method == "kl":
            fit = fit_mvn_robust(data, LocalFitSpec(k=args.k))
        else:
            raise InvalidInputError("--method l2 is only available for --model normal")

    report = {"schema": 1, "command": "fit", "model": args.model}
    report.update(fit.to_dict())
    if args.format == "json":
        _emit_json(report, args.precision, out)
    else:
        names = list(fit.param_names)
        header = names + [f"se_{n}" for n in names] + ["n", "iterations", "converged"]
        row = list(fit.theta) + list(fit.stderr) + [fit.n, fit.iterations, int(fit.converged)]
        _emit_csv(header, [row], args.precision, out)
    return EXIT_OK if fit.converged else EXIT_NUMERIC


def _parse_pair(text, flag):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise InvalidInputError(f"{flag} expects two comma-separated numbers, got {text!r}") from None
    return a, b


def parse_grid(text):
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise InvalidInputError(f"--grid expects LO:HI:STEP, got {text!r}") from None
    if not step > 0:
        raise InvalidInputError("--grid step must be positive")
    if hi < lo:
        raise InvalidInputError("--grid needs LO <= HI")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def cmd_influence(args, out):
    mu, sigma = _parse_pair(args.theta, "--theta")
    theta = NormalParams(mu, sigma).to_array()
    xs = parse_grid(args.grid)
    if args.method == "l2":
        if args.weight == "exp-delta":
            if args.delta is None:
                raise InvalidInputError("--weight exp-delta needs --delta")
            w = WeightFunction.exp_delta(args.delta, mu, sigma)
        else:
            w = _weight_from_args(args)
        vals = asymptotics.l2_influence(xs, theta, w)
    else:
        x0 = mu if args.x0 is None else args.x0
        h = args.h if args.h is not None else args.k * sigma
        vals = asymptotics.kl_influence(xs, theta, x0, h)
    rows = np.column_stack([xs, vals])
    if args.format == "json":
        _emit_json({"schema": 1, "command": "influence", "columns": ["x", "I_mu", "I_sigma"],
                    "rows": rows.tolist()}, args.precision, out)
    else:
        _emit_csv(["x", "I_mu", "I_sigma"], rows, args.precision, out)
    return EXIT_OK


def asymptotic_table(family, sigma, delta=None, k=None):
    """Closed-form and quadrature variances for one tuning, plus the ML
    baseline and efficiencies."""
    if family == "l2-delta":
        d = 0.0 if delta is None else delta
        closed = asymptotics.normal_l2_variances(sigma, d)
        quad = asymptotics.quadrature_l2_variances(sigma, d)
        tuning = {"delta": d}
    else:
        if k is None:
            raise InvalidInputError("--family kl-k needs --k")
        closed = asymptotics.normal_kl_variances(sigma, k)
        quad = asymptotics.quadrature_kl_variances(sigma, k)
        tuning = {"k": k}
    ml = asymptotics.normal_ml_variances(sigma)
    rel = [abs(c - q) / abs(c) for c, q in zip(closed, quad)]
    return {
        "schema": 1, "command": "asymptotics", "family": family, "sigma": sigma, **tuning,
        "var_mu": closed[0], "var_sigma": closed[1],
        "quad_var_mu": quad[0], "quad_var_sigma": quad[1],
        "ml_var_mu": ml[0], "ml_var_sigma": ml[1],
        "efficiency_mu": ml[0] / closed[0], "efficiency_sigma": ml[1] / closed[1],
        "max_rel_diff": max(rel), "self_check": max(rel) <= SELF_CHECK_RTOL,
    }


def cmd_asymptotics(args, out):
    table = asymptotic_table(args.family, args.sigma, args.delta, args.k)
    if args.format == "json":
        _emit_json(table, args.precision, out)
    else:
        keys = ["var_mu", "var_sigma", "quad_var_mu", "quad_var_sigma", "ml_var_mu", "ml_var_sigma",
                "efficiency_mu", "efficiency_sigma", "max_rel_diff"]
        _emit_csv(keys, [[table[k] for k in keys]], args.precision, out)
    if not table["self_check"]:
        logger.error("closed form and quadrature disagree (relative difference %.3g)", table["max_rel_diff"])
        return EXIT_SELFCHECK
    return EXIT_OK


_ESTIMATOR_ALIASES = {
    "ml": "ml", "l2": "l2_constant", "l2_constant": "l2_constant",
    "l2-delta": "l2_exp_delta", "l2_exp_delta": "l2_exp_delta",
    "kl": "kl", "mvn-kl": "mvn_kl", "mvn_kl": "mvn_kl",
}


def _estimator_from_arg(text, args):
    name, _, tuning = text.partition(":")
    method = _ESTIMATOR_ALIASES.get(name)
    if method is None:
        raise InvalidInputError(f"unknown estimator {name!r}")
    if tuning:
        try:
            value = float(tuning)
        except ValueError:
            raise InvalidInputError(f"bad tuning value in {text!r}") from None
    elif method == "l2_exp_delta":
        value = args.delta
    elif method in ("kl", "mvn_kl"):
        value = args.k
    else:
        value = None
    return EstimatorSpec(method, value)


def scenario_from_args(args):
    if args.dim is not None:
        true_model = MvnParams.from_matrix(np.full(args.dim, args.mu), args.sigma**2 * np.eye(args.dim))
    else:
        true_model = NormalParams(args.mu, args.sigma)
    contaminant = None
    if args.contaminant_point is not None and args.contaminant_normal is not None:
        raise InvalidInputError("give at most one of --contaminant-point and --contaminant-normal")
    if args.contaminant_point is not None:
        contaminant = Contaminant(args.contaminant_point)
    elif args.contaminant_normal is not None:
        loc, sd = _parse_pair(args.contaminant_normal, "--contaminant-normal")
        contaminant = Contaminant(loc, sd)
    names = args.estimator or ["ml"]
    return ScenarioSpec(
        true_model=true_model, n=args.n, reps=args.reps, seed=args.seed,
        estimators=tuple(_estimator_from_arg(e, args) for e in names),
        epsilon=args.epsilon, contaminant=contaminant,
    )


def cmd_simulate(args, out):
    report = run_scenario(scenario_from_args(args), workers=args.workers)
    data = report.to_dict()
    if args.format == "json":
        _emit_json(data, args.precision, out)
    else:
        header = ["estimator_index", "param_index", "mean", "bias", "n_var", "theoretical_n_var",
                  "failures", "successes"]
        rows = []
        for i, s in enumerate(report.summaries):
            for j in range(len(s.param_names)):
                theo = np.nan if s.theoretical is None else s.theoretical[j]
                rows.append([i, j, s.mean[j], s.bias[j], s.n_var[j], theo, s.failures, s.successes])
        _emit_csv(header, rows, args.precision, out)
    return EXIT_NUMERIC if report.failed else EXIT_OK


# ----------------------------------------------------------------- parser

def build_parser():
    parser = _Parser(prog="l2kl", description="Minimum L2 and robust KL parametric estimation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, default_format="json"):
        p.add_argument("--format", choices=("json", "csv"), default=default_format)
        p.add_argument("--precision", type=int, default=6, help="significant digits (default 6)")

    def positive(text):
        v = float(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    p = sub.add_parser("fit", help="fit a model to CSV data")
    p.add_argument("input", nargs="?", default="-", help="CSV file (default: standard input)")
    p.add_argument("--model", choices=("normal", "mvn"), default="normal")
    p.add_argument("--method", choices=("ml", "l2", "kl"), default="kl")
    p.add_argument("--weight", choices=("constant", "exp-delta", "kernel"), default="constant")
    p.add_argument("--delta", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--h", type=positive)
    p.add_argument("--k", type=positive, default=2.0)
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("influence", help="tabulate an influence function on a grid")
    p.add_argument("--model", choices=("normal",), default="normal")
    p.add_argument("--method", choices=("l2", "kl"), required=True)
    p.add_argument("--weight", choices=("constant", "exp-delta", "kernel"), default="constant")
    p.add_argument("--delta", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--h", type=positive)
    p.add_argument("--k", type=positive, default=2.0)
    p.add_argument("--theta", required=True, help="MU,SIGMA (use --theta=-1,2 for negative values)")
    p.add_argument("--grid", required=True, help="LO:HI:STEP (use --grid=-6:6:0.5 for negative LO)")
    common(p, "csv")
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("asymptotics", help="closed-form and quadrature asymptotic variances")
    p.add_argument("--family", choices=("l2-delta", "kl-k"), required=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--k", type=positive)
    p.add_argument("--sigma", type=positive, default=1.0)
    common(p)
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("simulate", help="Monte Carlo scenario")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--estimator", action="append",
                   help="ml | l2 | l2-delta | kl | mvn-kl, optionally NAME:TUNING; repeatable")
    p.add_argument("--k", type=positive, default=2.0)
    p.add_argument("--delta", type=float, default=0.8)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=positive, default=1.0)
    p.add_argument("--dim", type=int, help="simulate N(mu 1, sigma^2 I) in this dimension")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--contaminant-point", type=float)
    p.add_argument("--contaminant-normal", help="MU,SD of a normal contaminant")
    p.add_argument("--workers", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args, out)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, SingularMatrixError, QuadratureError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except L2KLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
