"""Command-line front end.

Exit status: 0 success, 1 probe violation, 2 usage or configuration
error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from .analysis.convergence import strong_convergence, thread_count
from .analysis import probes
from .brownian import generate_path
from .core import build_time_grid
from .errors import ExprError, IntegrationError, InvalidArgumentError, PemError, ProblemFileError
from .integrator import Scheme, SchemeConfig, integrate
from .problems import builtin_names, resolve_problem
from .projection import default_alpha

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [_real(v) for v in text.split(",") if v.strip()]
    except argparse.ArgumentTypeError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}")


def _real(text):
    try:
        return float(text)
    except ValueError:
        try:
            return float.fromhex(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a real number: {text!r}") from None


def _add_common(p):
    p.add_argument("--problem", default="example1",
                   help=f"built-in name ({', '.join(builtin_names())}) or problem file path")
    p.add_argument("--seed", type=int, default=42, help="master seed (default 42)")
    p.add_argument("--horizon", type=_real, default=None, help="override the problem horizon T")


def _add_scheme(p):
    p.add_argument("--alpha", type=_real, default=None, help="projection exponent (wins over --q)")
    p.add_argument("--q", type=_real, default=None, help="growth exponent used for alpha = 1/(2(q-1))")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default="pem")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pemdelay",
                                     description="Projected Euler-Maruyama for delay SDEs")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate one path and write its grid function")
    _add_common(sim)
    _add_scheme(sim)
    sim.add_argument("--M", type=int, default=64, help="delay steps, h = tau/M")
    sim.add_argument("--path-index", type=int, default=0)
    sim.add_argument("--output", default="-", help="CSV file (default stdout)")

    conv = sub.add_parser("converge", help="strong convergence study on coupled paths")
    _add_common(conv)
    _add_scheme(conv)
    conv.add_argument("--M", type=int, default=2 ** 13, help="reference delay steps (default 2^13)")
    conv.add_argument("--levels", type=_int_list, default=[16, 32, 64, 128],
                      help="comma-separated coarsening factors (default 16,32,64,128)")
    conv.add_argument("--paths", type=int, default=1000)
    conv.add_argument("--output", default="convergence.csv")
    conv.add_argument("--plot-data", default=None, help="also write log2 h / log2 error columns")

    probe = sub.add_parser("probe", help="sample one of the structural inequalities")
    kinds = probe.add_subparsers(dest="probe", required=True)

    mono = kinds.add_parser("monotonicity")
    _add_common(mono)
    mono.add_argument("--eta", type=_real, default=1.0)
    mono.add_argument("--samples", type=int, default=100_000)
    mono.add_argument("--radius", type=_real, default=5.0)

    grow = kinds.add_parser("growth")
    _add_common(grow)
    grow.add_argument("--samples", type=int, default=100_000)
    grow.add_argument("--radius", type=_real, default=5.0)

    cst = kinds.add_parser("c-stability")
    _add_common(cst)
    _add_scheme(cst)
    cst.add_argument("--h", type=_real, default=2.0 ** -6)
    cst.add_argument("--eta", type=_real, default=1.5)
    cst.add_argument("--candidate-c", type=_real, default=1.0)
    cst.add_argument("--pairs", type=int, default=1000)
    cst.add_argument("--noise-samples", type=int, default=1000)

    bc = kinds.add_parser("b-consistency")
    _add_common(bc)
    _add_scheme(bc)
    bc.add_argument("--t-anchor", type=_real, default=1.0)
    bc.add_argument("--h-levels", type=_float_list,
                    default=[2.0 ** -4, 2.0 ** -5, 2.0 ** -6, 2.0 ** -7])
    bc.add_argument("--paths", type=int, default=10_000)
    bc.add_argument("--substeps", type=int, default=64)
    bc.add_argument("--inner-samples", type=int, default=32)

    hold = kinds.add_parser("holder")
    _add_common(hold)
    hold.add_argument("--samples", type=int, default=1000)
    hold.add_argument("--beta", type=_real, default=None)
    return parser


def _problem(args):
    try:
        return resolve_problem(args.problem, args.horizon)
    except OSError as exc:
        raise UsageError(str(exc)) from None


def _alpha(args, problem):
    if args.alpha is not None:
        if not (math.isfinite(args.alpha) and args.alpha > 0):
            raise UsageError("--alpha must be positive")
        return args.alpha
    q = args.q if args.q is not None else problem.assumptions.growth_exponent
    return default_alpha(q)


def _config(args, problem) -> SchemeConfig:
    if args.scheme == Scheme.CLASSICAL_EM.value:
        return SchemeConfig.classical()
    return SchemeConfig.projected(_alpha(args, problem))


def _write_atomic(path, text):
    if path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    tmp = target.with_name(target.name + ".part")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, target)
    finally:
        if tmp.exists():
            tmp.unlink()


def run_simulate(args) -> int:
    problem = _problem(args)
    config = _config(args, problem)
    grid = build_time_grid(problem.delay, problem.horizon, args.M)
    path = generate_path(args.seed, args.path_index, problem.dim_noise, grid.step, grid.node_count)
    traj = integrate(problem, grid, path, 1, config)
    d = problem.dim_state
    header = "n,t," + ("value" if d == 1 else ",".join(f"value{j}" for j in range(d)))
    rows = [header]
    for n, row in zip(range(-grid.delay_steps, grid.node_count + 1), traj.values):
        rows.append(f"{n},{grid.time(n)!r}," + ",".join(repr(float(v)) for v in row))
    _write_atomic(args.output, "\n".join(rows) + "\n")
    if traj.diverged:
        print(f"trajectory diverged at step {traj.diverged_step}", file=sys.stderr)
    return EXIT_OK


def run_converge(args) -> int:
    problem = _problem(args)
    config = _config(args, problem)
    if args.paths < 2:
        raise UsageError("--paths must be at least 2 for a standard error")
    thread_count()  # validate the environment before the long run
    report = strong_convergence(problem, args.M, args.levels, args.paths, args.seed, config)
    _write_atomic(args.output, report.to_csv())
    if args.plot_data:
        lines = ["log2_h,log2_mean_abs_err,log2_rms_err"]
        for lv in report.levels:
            lines.append(f"{math.log2(lv.h)!r},{_log2(lv.mean_abs_err)!r},{_log2(lv.rms_err)!r}")
        _write_atomic(args.plot_data, "\n".join(lines) + "\n")
    print(f"fitted_slope={report.fitted_slope!r}")
    print(f"fitted_slope_rms={report.fitted_slope_rms!r}")
    if report.excluded_paths:
        print(f"excluded_paths={report.excluded_paths}")
    return EXIT_OK


def _log2(v):
    return math.log2(v) if v > 0 else math.nan


def run_probe(args) -> int:
    problem = _problem(args)
    kind = args.probe
    if kind == "monotonicity":
        report = probes.monotonicity_probe(problem, args.eta, args.samples, args.radius, args.seed)
    elif kind == "growth":
        report = probes.growth_probe(problem, args.samples, args.radius, args.seed)
    elif kind == "c-stability":
        report = probes.c_stability_probe(problem, args.h, args.eta, args.candidate_c, args.pairs,
                                          args.noise_samples, args.seed,
                                          alpha=_alpha(args, problem))
    elif kind == "b-consistency":
        report = probes.b_consistency_probe(problem, args.t_anchor, args.h_levels, args.paths,
                                            args.substeps, args.seed, alpha=_alpha(args, problem),
                                            inner_samples=args.inner_samples)
    else:
        report = probes.history_holder_probe(problem, args.samples, args.seed, beta=args.beta)
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_VIOLATION


COMMANDS = {"simulate": run_simulate, "converge": run_converge, "probe": run_probe}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InvalidArgumentError, ProblemFileError, ExprError) as exc:
        print(f"pemdelay: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, PemError, OSError) as exc:
        print(f"pemdelay: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
