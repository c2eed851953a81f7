"""Bisection control: find lambda* with phi(lambda*) = p from a bracket of
a lower solution (phi < p) and an upper solution (phi > p).

Each iteration evaluates the functional at the exact midpoint, takes the
three-way branch on phi - p, and records the full state, so the structural
properties of the method (exact width halving, sign-preserving brackets) are
assertable from the trace after the fact.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TextIO

from . import quad
from .exprdsl import EvalError
from .ivp import SolverError
from .problem import Problem, ProblemError
from .quad import QuadratureError, QuadResult

__all__ = [
    "ControlSpec",
    "BracketCheck",
    "Iteration",
    "BisectionTrace",
    "SweepEntry",
    "verify_bracket",
    "bisect",
    "sweep",
    "sweep_csv",
]

PhiFn = Callable[[Problem, float, float], QuadResult]


@dataclass(frozen=True)
class ControlSpec:
    """Target value, bracket, and tolerances for one control run.

    ``tol`` is the stop criterion on |phi(lambda) - p|; ``phi_tol`` is the
    inner quadrature tolerance and must not exceed tol/10 (the branch
    decisions are only trustworthy when the functional is evaluated well
    below the stop criterion).
    """

    p: float
    lambda_lo: float
    lambda_hi: float
    tol: float
    max_iter: int = 60
    phi_tol: float | None = None

    def __post_init__(self) -> None:
        if not (self.lambda_lo > 0.0 and self.lambda_hi > 0.0):
            raise ValueError("bracket endpoints must be positive")
        if not (self.tol > 0.0):
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.phi_tol is None:
            object.__setattr__(self, "phi_tol", self.tol / 10.0)
        elif not (0.0 < self.phi_tol <= self.tol / 10.0):
            raise ValueError(
                f"phi_tol must lie in (0, tol/10] = (0, {self.tol / 10.0:g}], "
                f"got {self.phi_tol}")


@dataclass(frozen=True)
class BracketCheck:
    valid: bool
    phi_lo: float
    phi_hi: float
    reason: str | None = None


@dataclass(frozen=True)
class Iteration:
    k: int
    lam: float
    phi: float
    residual: float
    lo: float
    hi: float


@dataclass(frozen=True)
class BisectionTrace:
    p: float
    tol: float
    phi_tol: float
    lambda_lo: float
    lambda_hi: float
    phi_lo: float
    phi_hi: float
    iterations: tuple[Iteration, ...]
    outcome: str  # converged | exhausted | invalid_bracket
    lambda_star: float | None = None

    CSV_HEADER = "k,lambda,phi,residual,lo,hi"

    @property
    def converged(self) -> bool:
        return self.outcome == "converged"

    def write_csv(self, stream: TextIO) -> None:
        stream.write(self.CSV_HEADER + "\n")
        for it in self.iterations:
            stream.write(
                f"{it.k},{it.lam:.12g},{it.phi:.12g},{it.residual:.12g},"
                f"{it.lo:.12g},{it.hi:.12g}\n")


def verify_bracket(
    prob: Problem,
    spec: ControlSpec,
    phi_fn: PhiFn = quad.phi,
) -> BracketCheck:
    """Evaluate the functional at both bracket endpoints and decide whether
    they form a strict lower/upper solution pair for the target."""
    phi_lo = phi_fn(prob, spec.lambda_lo, spec.phi_tol).value
    phi_hi = phi_fn(prob, spec.lambda_hi, spec.phi_tol).value
    reasons = []
    if not (phi_lo < spec.p - spec.phi_tol):
        reasons.append(
            f"phi(lambda_lo={spec.lambda_lo:g}) = {phi_lo:.9g} is not below "
            f"p - phi_tol = {spec.p - spec.phi_tol:.9g}")
    if not (phi_hi > spec.p + spec.phi_tol):
        reasons.append(
            f"phi(lambda_hi={spec.lambda_hi:g}) = {phi_hi:.9g} is not above "
            f"p + phi_tol = {spec.p + spec.phi_tol:.9g}")
    return BracketCheck(
        valid=not reasons, phi_lo=phi_lo, phi_hi=phi_hi,
        reason="; ".join(reasons) or None)


def bisect(
    prob: Problem,
    spec: ControlSpec,
    phi_fn: PhiFn = quad.phi,
) -> BisectionTrace:
    """Run the bisection to the stop criterion |phi(lambda) - p| <= tol.

    The equality branch fires when the residual falls within the inner
    tolerance phi_tol; otherwise the midpoint replaces the endpoint whose
    side of p it shares.  The bracket recorded at iteration k has width
    (hi_0 - lo_0) / 2^k exactly.
    """
    check = verify_bracket(prob, spec, phi_fn)
    if not check.valid:
        return BisectionTrace(
            p=spec.p, tol=spec.tol, phi_tol=spec.phi_tol,
            lambda_lo=spec.lambda_lo, lambda_hi=spec.lambda_hi,
            phi_lo=check.phi_lo, phi_hi=check.phi_hi,
            iterations=(), outcome="invalid_bracket")

    lo, hi = spec.lambda_lo, spec.lambda_hi
    iterations: list[Iteration] = []
    outcome = "exhausted"
    lambda_star = None
    for k in range(1, spec.max_iter + 1):
        mid = 0.5 * (lo + hi)
        val = phi_fn(prob, mid, spec.phi_tol).value
        residual = abs(val - spec.p)
        if val < spec.p:
            lo = mid
        else:
            hi = mid
        iterations.append(Iteration(
            k=k, lam=mid, phi=val, residual=residual, lo=lo, hi=hi))
        if residual <= spec.phi_tol:
            # equality branch of the three-way test
            outcome = "converged"
            lambda_star = mid
            break
        if residual <= spec.tol:
            outcome = "converged"
            lambda_star = mid
            break
    return BisectionTrace(
        p=spec.p, tol=spec.tol, phi_tol=spec.phi_tol,
        lambda_lo=spec.lambda_lo, lambda_hi=spec.lambda_hi,
        phi_lo=check.phi_lo, phi_hi=check.phi_hi,
        iterations=tuple(iterations), outcome=outcome, lambda_star=lambda_star)


@dataclass(frozen=True)
class SweepEntry:
    lam: float
    result: QuadResult | None = None
    error: str | None = None
    diverging: bool = False

    @property
    def ok(self) -> bool:
        return self.result is not None


def _flag_diverging(result: QuadResult) -> bool:
    rigor = result.tail_rigor_bound
    if not math.isfinite(rigor) or not math.isfinite(result.value):
        return True
    return rigor > 100.0 * max(1.0, abs(result.value))


def sweep(
    prob: Problem,
    lambdas: Sequence[float],
    tol: float,
    phi_fn: PhiFn = quad.phi,
    workers: int = 0,
) -> list[SweepEntry]:
    """Evaluate the functional at each lambda independently.

    Per-lambda failures are recorded in place instead of aborting the sweep;
    entries whose tail rigor bound dwarfs the value (or is non-finite) are
    flagged as diverging.  Output order always matches input order; with
    ``workers`` > 1 the evaluations run on a thread pool.
    """

    def one(lam: float) -> SweepEntry:
        try:
            result = phi_fn(prob, lam, tol)
        except (SolverError, QuadratureError, ProblemError, EvalError) as err:
            return SweepEntry(lam=lam, error=str(err))
        return SweepEntry(lam=lam, result=result,
                          diverging=_flag_diverging(result))

    if workers > 1 and len(lambdas) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, lambdas))
    return [one(lam) for lam in lambdas]


def sweep_csv(entries: Sequence[SweepEntry], stream: TextIO) -> None:
    """Write sweep results as QuadResult rows (nan fields for failures)."""
    stream.write(QuadResult.CSV_HEADER + "\n")
    for entry in entries:
        if entry.result is not None:
            stream.write(entry.result.csv_row() + "\n")
        else:
            stream.write(f"{entry.lam:.12g},nan,nan,nan,nan,nan,nan\n")
