"""singctrl: initial-value problems with a parameter-dependent singular
endpoint, the improper integral of their solutions, and bisection control of
that integral toward a target value — including a Caputo-fractional variant.
"""

from .control import (
    BisectionTrace,
    ControlSpec,
    SweepEntry,
    bisect,
    sweep,
    verify_bracket,
)
from .exprdsl import EvalError, Expr, ParseError, evaluate, parse, to_source
from .frac import FracTrajectory, phi_frac, solve_frac
from .ivp import (
    AprioriBound,
    SolverError,
    Trajectory,
    apriori_bound,
    picard_truncated,
    solve_truncated,
    uniform_convergence_probe,
)
from .problem import (
    AnalyticOracle,
    HypothesisReport,
    Problem,
    ProblemError,
    SamplingPlan,
    Verdict,
    builtin,
    builtin_names,
    check_h1,
    check_h3,
    load_problem,
)
from .quad import QuadratureError, QuadResult, phi, phi_pnorm, tail_rigor

__version__ = "0.1.0"

__all__ = [
    "AnalyticOracle",
    "AprioriBound",
    "BisectionTrace",
    "ControlSpec",
    "EvalError",
    "Expr",
    "FracTrajectory",
    "HypothesisReport",
    "ParseError",
    "Problem",
    "ProblemError",
    "QuadResult",
    "QuadratureError",
    "SamplingPlan",
    "SolverError",
    "SweepEntry",
    "Trajectory",
    "Verdict",
    "apriori_bound",
    "bisect",
    "builtin",
    "builtin_names",
    "check_h1",
    "check_h3",
    "evaluate",
    "load_problem",
    "parse",
    "phi",
    "phi_frac",
    "phi_pnorm",
    "picard_truncated",
    "solve_frac",
    "solve_truncated",
    "sweep",
    "tail_rigor",
    "to_source",
    "uniform_convergence_probe",
    "verify_bracket",
]
