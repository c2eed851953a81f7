"""Problem model: a family of initial-value problems u' = f(t, u, lambda) on
[0, theta(lambda)) whose right endpoint moves with the parameter.

A problem bundles the right-hand side f, the singular endpoint theta, the
initial value u0, the growth metadata (a, C_lambda) behind the tail bounds,
an optional Lipschitz-constant formula L(lambda, eps), and an optional
closed-form solution used as a test oracle.  Problems load from a flat
``key = expression`` text format and three built-in instances ship with the
package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from . import exprdsl
from .exprdsl import EvalError, Expr, evaluate, names_used, parse

__all__ = [
    "Problem",
    "AnalyticOracle",
    "HypothesisReport",
    "SamplingPlan",
    "Verdict",
    "Witness",
    "ProblemError",
    "load_problem",
    "builtin",
    "builtin_names",
    "check_h1",
    "check_h3",
    "oracle_residual",
]

# roundoff headroom for hypothesis inequalities that the built-in problems
# satisfy with equality
_REL_SLACK = 1e-9
_ABS_SLACK = 1e-12


class ProblemError(ValueError):
    """Config parse failure, missing key, or invariant violation."""


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_CHECKED = "not-checked"


@dataclass(frozen=True)
class Witness:
    """A sample point violating a hypothesis bound."""

    t: float
    x: float
    lam: float
    detail: str = ""


@dataclass(frozen=True)
class HypothesisReport:
    h1: Verdict = Verdict.NOT_CHECKED
    h2: Verdict = Verdict.NOT_CHECKED
    h3: Verdict = Verdict.NOT_CHECKED
    witnesses: tuple[Witness, ...] = ()
    samples_used: int = 0


@dataclass(frozen=True)
class SamplingPlan:
    """Grid used by the hypothesis checkers.

    ``t_refine`` is the smallest distance to the singular endpoint, as a
    fraction of theta(lambda); the t-grid refines geometrically toward it.
    ``x_box`` overrides the default solution-scale box.
    """

    n_t: int = 48
    n_x: int = 17
    t_refine: float = 1e-12
    x_box: tuple[float, float] | None = None


@dataclass(frozen=True)
class AnalyticOracle:
    u_exact: Expr
    phi_exact: Expr | None = None
    lambda_range: tuple[float, float] | None = None

    def u_at(self, t: float, lam: float, constants: Mapping[str, float]) -> float:
        return evaluate(self.u_exact, {"t": t, "lambda": lam, **constants})

    def phi_at(self, lam: float, constants: Mapping[str, float]) -> float:
        if self.phi_exact is None:
            raise EvalError("oracle has no closed-form integral")
        return evaluate(self.phi_exact, {"lambda": lam, **constants})


@dataclass(frozen=True)
class Problem:
    name: str
    f: Expr
    theta: Expr
    u0: Expr
    growth_a: float
    c_lambda: Expr
    lipschitz: Expr | None = None
    constants: dict[str, float] = field(default_factory=dict)
    analytic: AnalyticOracle | None = None
    lambda_min: float = 1e-3
    lambda_max: float = 1e3
    notes: str = ""

    # -- pointwise evaluation -------------------------------------------------

    def env(self, **kwargs: float) -> dict[str, float]:
        e = dict(self.constants)
        e.update(kwargs)
        return e

    def theta_at(self, lam: float) -> float:
        return evaluate(self.theta, self.env(**{"lambda": lam}))

    def u0_at(self, lam: float) -> float:
        return evaluate(self.u0, self.env(**{"lambda": lam}))

    def c_at(self, lam: float) -> float:
        return evaluate(self.c_lambda, self.env(**{"lambda": lam}))

    def lipschitz_at(self, lam: float, eps: float) -> float:
        if self.lipschitz is None:
            raise ProblemError(f"problem {self.name!r} declares no Lipschitz formula")
        val = evaluate(self.lipschitz, self.env(**{"lambda": lam, "eps": eps}))
        if val < 0.0:
            raise ProblemError(f"Lipschitz formula is negative ({val}) at "
                               f"lambda={lam}, eps={eps}")
        return val

    def f_at(self, t: float, x: float, lam: float) -> float:
        return evaluate(self.f, self.env(t=t, x=x, **{"lambda": lam}))

    def compile_f(self, lam: float) -> Callable[[float, float], float]:
        """Bind lambda and the constants; return a fast f(t, x)."""
        return exprdsl.compile_expr(
            self.f, ("t", "x"), self.env(**{"lambda": lam}))

    def admissible(self, lam: float) -> bool:
        return self.lambda_min <= lam <= self.lambda_max

    def require_admissible(self, lam: float) -> None:
        if not self.admissible(lam):
            raise ProblemError(
                f"lambda={lam} outside the admissible range "
                f"[{self.lambda_min}, {self.lambda_max}] of {self.name!r}")


# ---------------------------------------------------------------------------
# config format

_REQUIRED_KEYS = ("f", "theta", "u0", "growth_a", "c_lambda")
_EXPR_VARS = {
    "f": {"t", "x", "lambda"},
    "theta": {"lambda"},
    "u0": {"lambda"},
    "c_lambda": {"lambda"},
    "lipschitz": {"lambda", "eps"},
    "analytic.u_exact": {"t", "lambda"},
    "analytic.phi_exact": {"lambda"},
}
_NUMERIC_KEYS = ("growth_a", "lambda_min", "lambda_max")


def _parse_config_lines(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ProblemError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if value and value[0] == value[-1] and value[0] in "'\"" and len(value) >= 2:
            value = value[1:-1].strip()
        if not key or not value:
            raise ProblemError(f"line {lineno}: empty key or value")
        if key in entries:
            raise ProblemError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def load_problem(
    config: str,
    *,
    name: str = "custom",
    const_overrides: Mapping[str, float] | None = None,
) -> Problem:
    """Build a :class:`Problem` from flat ``key = expression`` text.

    Recognized keys: ``f``, ``theta``, ``u0``, ``growth_a``, ``c_lambda``,
    ``lipschitz``, ``constants.<name>``, ``analytic.u_exact``,
    ``analytic.phi_exact``, ``lambda_min``, ``lambda_max``.  Comments start
    with ``#``.  Numeric keys accept constant expressions (so ``growth_a = a``
    tracks a user constant).  Problem invariants are verified on a 32-point
    sample of the declared lambda range.
    """
    entries = _parse_config_lines(config)

    constants: dict[str, float] = {}
    exprs: dict[str, Expr] = {}
    numbers: dict[str, float] = {}

    known = set(_REQUIRED_KEYS) | set(_NUMERIC_KEYS) | {
        "lipschitz", "analytic.u_exact", "analytic.phi_exact"}
    for key, value in entries.items():
        if key.startswith("constants."):
            cname = key.split(".", 1)[1]
            if not cname.isidentifier():
                raise ProblemError(f"bad constant name {cname!r}")
            if cname in exprdsl.VARIABLES:
                raise ProblemError(f"constant {cname!r} shadows a reserved variable")
            try:
                constants[cname] = float(evaluate(parse(value), {}))
            except (exprdsl.ParseError, EvalError) as err:
                raise ProblemError(f"constant {key}: {err}") from err
        elif key not in known:
            raise ProblemError(f"unknown key {key!r}")

    if const_overrides:
        for cname, cval in const_overrides.items():
            if cname in exprdsl.VARIABLES:
                raise ProblemError(f"constant {cname!r} shadows a reserved variable")
            constants[str(cname)] = float(cval)

    for key in _REQUIRED_KEYS:
        if key not in entries:
            raise ProblemError(f"missing required key {key!r}")

    for key, allowed in _EXPR_VARS.items():
        if key not in entries:
            continue
        try:
            e = parse(entries[key])
        except exprdsl.ParseError as err:
            raise ProblemError(f"{key}: {err}") from err
        used_vars, used_consts = names_used(e)
        bad_vars = used_vars - allowed
        if bad_vars:
            raise ProblemError(
                f"{key}: variable(s) {sorted(bad_vars)} not allowed here")
        missing = used_consts - set(constants)
        if missing:
            raise ProblemError(f"{key}: undefined constant(s) {sorted(missing)}")
        exprs[key] = e

    for key in _NUMERIC_KEYS:
        if key not in entries:
            continue
        try:
            e = parse(entries[key])
            used_vars, used_consts = names_used(e)
            if used_vars:
                raise ProblemError(f"{key}: must be a constant expression")
            missing = used_consts - set(constants)
            if missing:
                raise ProblemError(f"{key}: undefined constant(s) {sorted(missing)}")
            numbers[key] = float(evaluate(e, constants))
        except (exprdsl.ParseError, EvalError) as err:
            raise ProblemError(f"{key}: {err}") from err

    analytic = None
    if "analytic.u_exact" in exprs:
        analytic = AnalyticOracle(
            u_exact=exprs["analytic.u_exact"],
            phi_exact=exprs.get("analytic.phi_exact"),
        )
    elif "analytic.phi_exact" in exprs:
        raise ProblemError("analytic.phi_exact given without analytic.u_exact")

    prob = Problem(
        name=name,
        f=exprs["f"],
        theta=exprs["theta"],
        u0=exprs["u0"],
        growth_a=numbers["growth_a"],
        c_lambda=exprs["c_lambda"],
        lipschitz=exprs.get("lipschitz"),
        constants=constants,
        analytic=analytic,
        lambda_min=numbers.get("lambda_min", 1e-3),
        lambda_max=numbers.get("lambda_max", 1e3),
    )
    _validate_problem(prob)
    return prob


def _validate_problem(prob: Problem, n_sample: int = 32) -> None:
    if not math.isfinite(prob.growth_a) or prob.growth_a <= 1.0:
        raise ProblemError(
            f"growth_a must be a finite number > 1, got {prob.growth_a}")
    if not (0 < prob.lambda_min < prob.lambda_max):
        raise ProblemError(
            f"need 0 < lambda_min < lambda_max, got "
            f"[{prob.lambda_min}, {prob.lambda_max}]")
    lams = np.geomspace(prob.lambda_min, prob.lambda_max, n_sample + 2)[1:-1]
    for lam in lams:
        lam = float(lam)
        try:
            th = prob.theta_at(lam)
        except EvalError as err:
            raise ProblemError(f"theta failed at lambda={lam:g}: {err}") from err
        if not (th > 0.0):
            raise ProblemError(f"theta(lambda)={th} not positive at lambda={lam:g}")
        try:
            c = prob.c_at(lam)
        except EvalError as err:
            raise ProblemError(f"c_lambda failed at lambda={lam:g}: {err}") from err
        if not (c >= 0.0):
            raise ProblemError(f"c_lambda={c} negative at lambda={lam:g}")
        try:
            prob.u0_at(lam)
        except EvalError as err:
            raise ProblemError(f"u0 failed at lambda={lam:g}: {err}") from err


# ---------------------------------------------------------------------------
# built-in registry

_BUILTIN_CONFIGS = {
    # blow-up of order 1 at theta = lambda; closed-form solution 1/(lambda-t).
    # The improper integral of the solution diverges, so no closed-form
    # integral is registered.
    "exampleA": """
        f = x/(lambda - t)
        theta = lambda
        u0 = 1/lambda
        growth_a = 2
        c_lambda = 0
        lipschitz = 1/eps
        analytic.u_exact = 1/(lambda - t)
        lambda_min = 0.001
        lambda_max = 1000
    """,
    # the model family with integrable blow-up of order 1/a
    "exampleB": """
        f = x/(a*(lambda - t))
        theta = lambda
        u0 = lambda^(-1/a)
        growth_a = a
        c_lambda = 0
        lipschitz = 1/(a*eps)
        constants.a = 3
        analytic.u_exact = (lambda - t)^(-1/a)
        analytic.phi_exact = (a/(a - 1))*lambda^((a - 1)/a)
        lambda_min = 0.001
        lambda_max = 1000
    """,
    # counterexample family: the x-independent right-hand side blows up too
    # fast for any growth bound, and the integral of the solution explodes
    # as lambda -> 1.  The growth metadata below is nominal only: the tail
    # exponent is taken just above 1 to track the near-1 blow-up rate, and
    # c_lambda records the 1/(lambda-1) scale of the divergence.
    "remark13": """
        f = 1/(lambda*(lambda - t)^(1/lambda + 1))
        theta = lambda
        u0 = lambda^(-1/lambda)
        growth_a = 1.0005
        c_lambda = 1/(lambda - 1)
        lipschitz = 0
        analytic.u_exact = (lambda - t)^(-1/lambda)
        analytic.phi_exact = lambda^((2*lambda - 1)/lambda)/(lambda - 1)
        lambda_min = 1
        lambda_max = 1000
    """,
}

_BUILTIN_NOTES = {"remark13": "h3 not satisfied"}


def builtin_names() -> tuple[str, ...]:
    return tuple(sorted(_BUILTIN_CONFIGS))


def builtin(name: str, **const_overrides: float) -> Problem:
    """Load one of the built-in problems, optionally overriding constants."""
    try:
        config = _BUILTIN_CONFIGS[name]
    except KeyError:
        raise ProblemError(
            f"unknown builtin {name!r}; available: {', '.join(builtin_names())}"
        ) from None
    prob = load_problem(config, name=name, const_overrides=const_overrides)
    note = _BUILTIN_NOTES.get(name)
    return replace(prob, notes=note) if note else prob


# ---------------------------------------------------------------------------
# hypothesis checks (sampled, not symbolic)


def _default_x_box(prob: Problem, lam: float) -> tuple[float, float]:
    scale = 10.0 * (1.0 + abs(prob.u0_at(lam)))
    return (-scale, scale)


def _x_grid(box: tuple[float, float], n: int) -> np.ndarray:
    lo, hi = box
    if lo == hi:
        return np.array([lo])
    return np.linspace(lo, hi, n)


def check_h3(
    prob: Problem,
    lam: float,
    plan: SamplingPlan | None = None,
) -> HypothesisReport:
    """Sample-check the growth bound |f| <= |x|/(a(theta-t)) + C_lambda.

    The t-grid refines geometrically toward the singular endpoint; x ranges
    over a solution-scale box.  A failure report carries the worst-offending
    sample points as witnesses.
    """
    plan = plan or SamplingPlan()
    prob.require_admissible(lam)
    theta = prob.theta_at(lam)
    a = prob.growth_a
    c_lam = prob.c_at(lam)

    ts = theta - theta * np.geomspace(1.0, plan.t_refine, plan.n_t)
    # the bound must see the same theta - t the right-hand side sees, so the
    # distance is recomputed from the rounded t
    taus = theta - ts
    xs = _x_grid(plan.x_box or _default_x_box(prob, lam), plan.n_x)

    f = prob.compile_f(lam)
    violations: list[tuple[float, Witness]] = []
    samples = 0
    for t, tau in zip(ts, taus):
        if tau <= 0.0:
            continue
        for x in xs:
            samples += 1
            bound = abs(x) / (a * tau) + c_lam
            try:
                val = abs(f(t, x))
            except EvalError as err:
                violations.append((math.inf, Witness(
                    t=float(t), x=float(x), lam=lam,
                    detail=f"evaluation error: {err}")))
                continue
            if val > bound * (1.0 + _REL_SLACK) + _ABS_SLACK:
                excess = val - bound
                violations.append((excess, Witness(
                    t=float(t), x=float(x), lam=lam,
                    detail=f"|f|={val:.6g} > bound={bound:.6g}")))

    verdict = Verdict.FAIL if violations else Verdict.PASS
    violations.sort(key=lambda pair: -pair[0])
    witnesses = tuple(w for _, w in violations[:8])
    return HypothesisReport(h3=verdict, witnesses=witnesses, samples_used=samples)


def check_h1(
    prob: Problem,
    lam: float,
    eps: float,
    plan: SamplingPlan | None = None,
) -> HypothesisReport:
    """Sample-check Lipschitz continuity of f in x on [0, theta(lambda)-eps]
    with the declared constant L(lambda, eps)."""
    plan = plan or SamplingPlan()
    prob.require_admissible(lam)
    theta = prob.theta_at(lam)
    if not (0.0 < eps < theta):
        raise ProblemError(f"need 0 < eps < theta(lambda)={theta:g}, got eps={eps}")
    if prob.lipschitz is None:
        return HypothesisReport(h1=Verdict.NOT_CHECKED)

    lips = prob.lipschitz_at(lam, eps)
    ts = np.linspace(0.0, theta - eps, plan.n_t)
    xs = _x_grid(plan.x_box or _default_x_box(prob, lam), plan.n_x)

    f = prob.compile_f(lam)
    violations: list[tuple[float, Witness]] = []
    samples = 0
    for t in ts:
        try:
            fvals = [f(t, x) for x in xs]
        except EvalError as err:
            violations.append((math.inf, Witness(
                t=float(t), x=float(xs[0]), lam=lam,
                detail=f"evaluation error: {err}")))
            samples += 1
            continue
        for i in range(len(xs)):
            for j in range(i + 1, len(xs)):
                samples += 1
                gap = abs(xs[i] - xs[j])
                diff = abs(fvals[i] - fvals[j])
                bound = lips * gap
                if diff > bound * (1.0 + _REL_SLACK) + _ABS_SLACK:
                    violations.append((diff - bound, Witness(
                        t=float(t), x=float(xs[i]), lam=lam,
                        detail=(f"|f(x)-f(xbar)|={diff:.6g} > L*|x-xbar|="
                                f"{bound:.6g} with xbar={xs[j]:.6g}"))))

    verdict = Verdict.FAIL if violations else Verdict.PASS
    violations.sort(key=lambda pair: -pair[0])
    witnesses = tuple(w for _, w in violations[:8])
    return HypothesisReport(h1=verdict, witnesses=witnesses, samples_used=samples)


def oracle_residual(prob: Problem, t: float, lam: float) -> float:
    """Scaled residual of the closed-form solution in the differential
    equation at (t, lambda), via a five-point finite-difference stencil.

    Returns |u'_fd - f(t, u(t), lambda)| / (1 + |f|).
    """
    if prob.analytic is None:
        raise ProblemError(f"problem {prob.name!r} has no analytic oracle")
    theta = prob.theta_at(lam)
    tau = theta - t
    if tau <= 0:
        raise ProblemError(f"t={t} is past the singular endpoint {theta}")
    # the derivatives of u grow like powers of 1/tau, so the stencil width
    # must shrink with the distance to the pole
    h = 1e-4 * min(max(1.0, abs(t)), tau)

    def u(s: float) -> float:
        return prob.analytic.u_at(s, lam, prob.constants)

    deriv = (u(t - 2 * h) - 8 * u(t - h) + 8 * u(t + h) - u(t + 2 * h)) / (12 * h)
    rhs = prob.f_at(t, u(t), lam)
    return abs(deriv - rhs) / (1.0 + abs(rhs))
