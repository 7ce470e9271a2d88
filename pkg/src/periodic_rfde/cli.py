"""Command-line front end.

Exit codes: 0 on success, 1 when a solver or oracle fails to produce a
result, 2 on usage errors (bad flags, unknown problems or parameters).
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidMesh, RFDEError, SchemaError, UnknownProblem
from .floquet import build_linearized_operator, monodromy_matrix, multipliers_and_check
from .greens import from_functions
from .io import (
    SolutionFile,
    load_solution,
    save_solution,
    write_continuation_csv,
    write_convergence_csv,
    write_floquet_csv,
    write_trajectory_csv,
)
from .mesh import Discretization, inner_abscissae
from .oracle import ReferenceKind, integrate_method_of_steps, run_convergence_study
from .problem import CATALOG, history_from_guess, make_problem, parse_params, period_guard
from .solver import (
    IntegralPhase,
    JacobianMode,
    NewtonSettings,
    TrivialPhase,
    continue_natural,
    solve_periodic,
)

log = logging.getLogger("periodic_rfde")


class UsageError(Exception):
    pass


def _problem(args):
    try:
        params = parse_params(getattr(args, "param", None) or [])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        return make_problem(args.problem, **params)
    except UnknownProblem as exc:
        raise UsageError(exc.args[0]) from None
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def _parse_phase(text: Optional[str], problem, disc):
    """``trivial:k=K,level=Y`` or ``integral`` (reference = the catalog guess)."""
    if text is None:
        return None
    kind, _, rest = text.partition(":")
    if kind == "integral":
        if rest:
            raise UsageError("the integral phase takes no options")
        omega, k = period_guard(problem.tau, problem.omega0)
        guess = problem.guess
        ref = from_functions(lambda t: guess(k * t)[0], lambda t: k * guess(k * t)[1], disc)
        return IntegralPhase(ref)
    if kind != "trivial":
        raise UsageError(f"unknown phase condition {kind!r}; use trivial:k=K,level=Y or integral")
    opts = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep or key not in ("k", "level"):
            raise UsageError(f"bad phase option {item!r}")
        opts[key] = value
    try:
        comp = int(opts.get("k", 1))
        level = float(opts["level"]) if "level" in opts else None
    except ValueError as exc:
        raise UsageError(f"bad phase option: {exc}") from None
    if not 1 <= comp <= problem.d:
        raise UsageError(f"phase component {comp} outside 1..{problem.d}")
    if level is None:
        level = float(problem.guess(np.array([0.0]))[0][0, comp - 1])
    return TrivialPhase(comp, level)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def cmd_solve(args) -> int:
    problem = _problem(args)
    disc = Discretization(args.L, args.m, inner_abscissae(args.m, args.family))
    phase = _parse_phase(args.phase, problem, disc)
    settings = NewtonSettings(tol=args.tol, jacobian=JacobianMode(args.jacobian))
    sol = solve_periodic(problem, args.L, args.m, args.M, phase=phase, family=args.family,
                         settings=settings)
    save_solution(args.out, SolutionFile.from_solution(sol))
    rep = sol.report
    print(f"omega = {sol.omega!r}  residual = {rep.residual_norm:.3e}  "
          f"iterations = {rep.newton_iterations}  amplitude = {rep.amplitude:.6g}")
    if rep.near_equilibrium:
        print("warning: the solution has zero amplitude (an equilibrium)", file=sys.stderr)
        return 1
    return 0


def cmd_converge(args) -> int:
    problem = _problem(args)
    report = run_convergence_study(
        problem, args.m, args.L, args.M, reference=args.reference,
        oracle_dt=args.dt, t_transient=args.t_transient,
    )
    write_convergence_csv(args.out, report)
    for lv in report.levels:
        order = "" if lv.order_est is None else f"  order = {lv.order_est:.3f}"
        print(f"L = {lv.L:4d}  err_v = {lv.err_v:.3e}  err_omega = {lv.err_omega:.3e}{order}")
    return 0


def cmd_floquet(args) -> int:
    try:
        stored = load_solution(args.solution)
    except (OSError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    problem = make_problem(stored.problem, **stored.params)
    op = build_linearized_operator(stored.candidate(), stored.omega, problem, stored.M)
    report = multipliers_and_check(monodromy_matrix(op), args.threshold)
    write_floquet_csv(args.out, report.multipliers)
    print(f"trivial_error = {report.trivial_error:.3e}  hyperbolic = {report.hyperbolic}  "
          f"max |mu| (non-trivial) = {np.max(np.abs(report.nontrivial), initial=0.0):.6g}")
    return 0


def cmd_continue(args) -> int:
    problem = _problem(args)
    if args.name not in problem.params:
        raise UsageError(f"{problem.name} has no parameter {args.name!r}; "
                         f"choose from {', '.join(problem.params)}")
    if args.steps < 1:
        raise UsageError("--steps must be at least 1")
    values = np.linspace(args.start, args.stop, args.steps)
    steps = continue_natural(problem, args.name, values, args.L, args.m, args.M)
    write_continuation_csv(args.out, steps)
    for s in steps:
        omega = "-" if s.omega is None else f"{s.omega:.10g}"
        print(f"{args.name} = {s.value:.6g}  omega = {omega}  {s.status}")
    return 0 if all(s.status == "ok" for s in steps) else 1


def cmd_integrate(args) -> int:
    problem = _problem(args)
    if problem.guess is None:
        raise UsageError(f"problem {problem.name!r} has no default history")
    if not 0 < args.dt <= problem.tau / 4:
        raise UsageError(f"--dt must lie in (0, tau/4] = (0, {problem.tau / 4}]")
    traj = integrate_method_of_steps(problem, history_from_guess(problem), args.t_end, args.dt)
    write_trajectory_csv(args.out, traj.times, traj.values, problem.d, args.stride)
    print(f"integrated to t = {traj.t_end!r} in {traj.count - 1} steps")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="periodic-rfde",
        description="Periodic solutions of delay equations by piecewise collocation.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    names = ", ".join(sorted(CATALOG))

    def problem_args(p):
        p.add_argument("--problem", required=True, help=f"one of: {names}")
        p.add_argument("--param", action="append", metavar="KEY=VALUE",
                       help="override a problem parameter (repeatable)")

    def mesh_args(p, L_required=True):
        p.add_argument("--L", type=int, required=L_required, default=None if L_required else 40)
        p.add_argument("--m", type=int, required=L_required, default=None if L_required else 3)
        p.add_argument("--M", type=int, default=20, help="quadrature nodes per distributed term")

    p = sub.add_parser("solve", help="compute one periodic solution")
    problem_args(p)
    mesh_args(p)
    p.add_argument("--phase", help="trivial:k=K,level=Y or integral")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--family", choices=["gauss", "chebyshev"], default="gauss")
    p.add_argument("--jacobian", choices=["analytic", "fd"], default="analytic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("converge", help="mesh-refinement convergence study")
    problem_args(p)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--L", type=_int_list, required=True, help="comma-separated, increasing")
    p.add_argument("--M", type=int, default=20)
    p.add_argument("--reference", choices=[ReferenceKind.EXACT, ReferenceKind.ORACLE],
                   default=ReferenceKind.EXACT)
    p.add_argument("--dt", type=float, default=1e-3, help="oracle step")
    p.add_argument("--t-transient", dest="t_transient", type=float, default=200.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("floquet", help="Floquet multipliers of a saved solution")
    p.add_argument("--solution", required=True)
    p.add_argument("--threshold", type=float, default=1e-2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_floquet)

    p = sub.add_parser("continue", help="natural-parameter continuation")
    p.add_argument("--problem", required=True, help=f"one of: {names}")
    p.add_argument("--param", dest="name", required=True, help="parameter to vary")
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    mesh_args(p, L_required=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_continue)

    p = sub.add_parser("integrate", help="method-of-steps simulation from the catalog guess")
    problem_args(p)
    p.add_argument("--t-end", dest="t_end", type=float, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--stride", type=int, default=1, help="write every n-th step")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_integrate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, InvalidMesh) as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except RFDEError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
