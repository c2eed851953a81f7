"""Command-line interface.

Subcommands: solve, phi, control, sweep, verify, frac-solve, frac-control.
Every command reads a problem either from the built-in registry
(``--builtin``) or from a config file (``--problem``), writes plot-ready CSV
to ``--out``/``--trace`` (default: stdout), and can render the matching
figure with ``--plot``.  Exit codes: 0 ok, 1 domain/problem error, 2 flag
error.  All output is deterministic: fixed inputs give byte-identical CSV.
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import Callable, Sequence, TextIO

from . import control, frac, ivp, problem, quad
from .exprdsl import EvalError
from .ivp import SolverError
from .problem import Problem, ProblemError
from .quad import QuadratureError

__all__ = ["main", "build_parser"]

_ERRORS = (ProblemError, SolverError, QuadratureError, EvalError, OSError)


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", metavar="NAME",
                     help="built-in problem: " + ", ".join(problem.builtin_names()))
    src.add_argument("--problem", metavar="PATH",
                     help="problem config file")
    p.add_argument("--const", metavar="NAME=VALUE", action="append", default=[],
                   help="override a problem constant (repeatable)")


def _load_problem(args: argparse.Namespace) -> Problem:
    overrides: dict[str, float] = {}
    for item in args.const:
        if "=" not in item:
            raise ProblemError(f"--const expects NAME=VALUE, got {item!r}")
        name, value = item.split("=", 1)
        try:
            overrides[name.strip()] = float(value)
        except ValueError:
            raise ProblemError(f"--const {name.strip()}: bad number {value!r}") from None
    if args.builtin:
        return problem.builtin(args.builtin, **overrides)
    with open(args.problem, "r", encoding="utf-8") as fh:
        text = fh.read()
    return problem.load_problem(text, name=args.problem, const_overrides=overrides)


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline="\n"), True


def _write(path: str | None, writer: Callable[[TextIO], None]) -> None:
    stream, owned = _open_out(path)
    try:
        writer(stream)
    finally:
        if owned:
            stream.close()


def _oracle_root(prob: Problem, p: float, lo: float, hi: float) -> float | None:
    """Root of the closed-form integral minus p, for the error column of the
    report figure; None when no closed form is registered."""
    oracle = prob.analytic
    if oracle is None or oracle.phi_exact is None:
        return None
    try:
        flo = oracle.phi_at(lo, prob.constants) - p
        fhi = oracle.phi_at(hi, prob.constants) - p
    except EvalError:
        return None
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        try:
            fmid = oracle.phi_at(mid, prob.constants) - p
        except EvalError:
            return None
        if fmid == 0.0 or hi - lo <= 4 * math.ulp(mid):
            return mid
        if (fmid < 0.0) == (flo < 0.0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# subcommand handlers

def _cmd_solve(args: argparse.Namespace) -> int:
    prob = _load_problem(args)
    traj = ivp.solve_truncated(prob, args.lam, args.delta, args.tol)
    _write(args.out, traj.write_csv)
    if args.plot:
        from . import report
        curves = [(f"lambda={args.lam:g}", traj.t.tolist(), traj.u.tolist())]
        if prob.analytic is not None:
            us = [prob.analytic.u_at(t, args.lam, prob.constants) for t in traj.t]
            curves.append((f"exact lambda={args.lam:g}", traj.t.tolist(), us))
        report.render_trajectory_figure(curves, args.plot)
    return 0


def _cmd_phi(args: argparse.Namespace) -> int:
    prob = _load_problem(args)
    if args.pnorm is not None:
        result = quad.phi_pnorm(prob, args.lam, args.pnorm, args.tol)
    else:
        result = quad.phi(prob, args.lam, args.tol)
    _write(args.out, result.write_csv)
    return 0


def _cmd_control(args: argparse.Namespace) -> int:
    prob = _load_problem(args)
    spec = control.ControlSpec(
        p=args.p, lambda_lo=args.lo, lambda_hi=args.hi,
        tol=args.tol, max_iter=args.max_iter)
    trace = control.bisect(prob, spec)
    return _finish_control(args, prob, spec, trace)


def _cmd_frac_control(args: argparse.Namespace) -> int:
    prob = _load_problem(args)
    spec = control.ControlSpec(
        p=args.p, lambda_lo=args.lo, lambda_hi=args.hi,
        tol=args.tol, max_iter=args.max_iter)

    def phi_fn(pr: Problem, lam: float, tol: float) -> quad.QuadResult:
        return frac.phi_frac(pr, lam, args.alpha, tol)

    trace = control.bisect(prob, spec, phi_fn)
    return _finish_control(args, prob, spec, trace)


def _finish_control(args, prob: Problem, spec: control.ControlSpec,
                    trace: control.BisectionTrace) -> int:
    if args.trace:
        _write(args.trace, trace.write_csv)
    if trace.converged:
        last = trace.iterations[-1]
        print(f"outcome=converged lambda_star={trace.lambda_star:.12g} "
              f"phi={last.phi:.12g} residual={last.residual:.12g} "
              f"iterations={len(trace.iterations)}")
    else:
        print(f"outcome={trace.outcome} iterations={len(trace.iterations)}")
    if args.plot and trace.iterations:
        from . import report
        lam_exact = _oracle_root(prob, spec.p, spec.lambda_lo, spec.lambda_hi)
        report.render_trace_figure(trace, args.plot, lambda_exact=lam_exact)
    if trace.outcome == "invalid_bracket":
        print("error: bracket does not satisfy phi(lo) < p < phi(hi)",
              file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    prob = _load_problem(args)
    try:
        lambdas = [float(s) for s in args.lambdas.split(",") if s.strip()]
    except ValueError:
        raise ProblemError(f"--lambdas expects comma-separated numbers, "
                           f"got {args.lambdas!r}") from None
    entries = control.sweep(prob, lambdas, args.tol)
    _write(args.out, lambda stream: control.sweep_csv(entries, stream))
    for entry in entries:
        if entry.error is not None:
            print(f"warning: lambda={entry.lam:.12g} failed: {entry.error}",
                  file=sys.stderr)
        elif entry.diverging:
            print(f"warning: lambda={entry.lam:.12g} flagged as diverging "
                  f"(tail rigor bound {entry.result.tail_rigor_bound:.6g})",
                  file=sys.stderr)
    if args.plot:
        from . import report
        report.render_sweep_figure(entries, args.plot)
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    prob = _load_problem(args)
    theta = prob.theta_at(args.lam)
    eps = args.eps if args.eps is not None else 0.25 * theta
    rep3 = problem.check_h3(prob, args.lam)
    try:
        rep1 = problem.check_h1(prob, args.lam, eps)
    except ProblemError as err:
        print(f"warning: h1 not checked: {err}", file=sys.stderr)
        rep1 = problem.HypothesisReport()

    def row(name: str, verdict: problem.Verdict,
            witnesses: tuple[problem.Witness, ...]) -> str:
        if witnesses:
            w = witnesses[0]
            return (f"{name},{verdict.value},t={w.t:.12g} x={w.x:.12g} "
                    f"lambda={w.lam:.12g} {w.detail}")
        return f"{name},{verdict.value},"

    def write(stream: TextIO) -> None:
        stream.write("hypothesis,verdict,witness\n")
        stream.write(row("h1", rep1.h1, rep1.witnesses) + "\n")
        stream.write("h2,not-checked,\n")
        stream.write(row("h3", rep3.h3, rep3.witnesses) + "\n")
        if prob.notes:
            stream.write(f"# note: {prob.notes}\n")

    _write(args.out, write)
    return 0


def _cmd_frac_solve(args: argparse.Namespace) -> int:
    prob = _load_problem(args)
    traj = frac.solve_frac(prob, args.lam, args.alpha, args.delta, args.steps,
                           scheme=args.scheme)
    _write(args.out, traj.write_csv)
    if args.plot:
        from . import report
        curves = [(f"alpha={args.alpha:g} lambda={args.lam:g}",
                   traj.t.tolist(), traj.u.tolist())]
        report.render_trajectory_figure(curves, args.plot)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="singctrl",
        description="Solve initial-value problems with a moving singular "
                    "endpoint, evaluate the integral of the solution, and "
                    "find the parameter that drives it to a target value.")
    sub = parser.add_subparsers(dest="command", required=True)

    def lam_arg(p, required=True):
        p.add_argument("--lambda", dest="lam", type=float, required=required,
                       help="parameter value")

    p = sub.add_parser("solve", help="integrate one trajectory, emit t,u CSV")
    _add_problem_args(p)
    lam_arg(p)
    p.add_argument("--delta", type=float, required=True,
                   help="distance kept from the singular endpoint")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", metavar="PATH", help="CSV output (default stdout)")
    p.add_argument("--plot", metavar="PATH", help="also render the trajectory figure")
    p.set_defaults(handler=_cmd_solve)

    p = sub.add_parser("phi", help="evaluate the integral functional at one lambda")
    _add_problem_args(p)
    lam_arg(p)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--pnorm", type=float, default=None,
                   help="evaluate the p-norm functional instead (1 <= p < a)")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(handler=_cmd_phi)

    p = sub.add_parser("control", help="bisection search for phi(lambda) = p")
    _add_problem_args(p)
    p.add_argument("--p", type=float, required=True, help="target value")
    p.add_argument("--lo", type=float, required=True, help="lower solution")
    p.add_argument("--hi", type=float, required=True, help="upper solution")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=60)
    p.add_argument("--trace", metavar="PATH", help="iteration CSV output")
    p.add_argument("--plot", metavar="PATH", help="render the error-decay figure")
    p.set_defaults(handler=_cmd_control)

    p = sub.add_parser("sweep", help="evaluate the functional on a list of lambdas")
    _add_problem_args(p)
    p.add_argument("--lambdas", required=True,
                   help="comma-separated lambda values")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--plot", metavar="PATH")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("verify", help="sample-check the standing hypotheses")
    _add_problem_args(p)
    lam_arg(p)
    p.add_argument("--eps", type=float, default=None,
                   help="cut-off distance for the Lipschitz check "
                        "(default theta/4)")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(handler=_cmd_verify)

    p = sub.add_parser("frac-solve", help="solve the Caputo-fractional variant")
    _add_problem_args(p)
    lam_arg(p)
    p.add_argument("--alpha", type=float, required=True,
                   help="fractional order in (0, 1)")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--steps", type=int, default=1024)
    p.add_argument("--scheme", choices=frac.SCHEMES,
                   default="abm_predictor_corrector")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--plot", metavar="PATH")
    p.set_defaults(handler=_cmd_frac_solve)

    p = sub.add_parser("frac-control",
                       help="bisection control of the fractional problem")
    _add_problem_args(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--lo", type=float, required=True)
    p.add_argument("--hi", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=60)
    p.add_argument("--trace", metavar="PATH")
    p.add_argument("--plot", metavar="PATH")
    p.set_defaults(handler=_cmd_frac_control)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
