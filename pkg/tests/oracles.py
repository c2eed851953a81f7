"""Independent reference computations shared by the tests.

Everything here deliberately avoids the package's own solver/quadrature
paths: closed forms where they exist, and brute-force composite
Gauss-Legendre on geometrically graded panels where they do not.
"""

from __future__ import annotations

import math
import random

import numpy as np

from singctrl import exprdsl
from singctrl.exprdsl import Add, Call, Const, Div, Mul, Neg, Num, Pow, Sub, Var


def phi_exact_b(a: float, lam: float) -> float:
    """Closed-form integral for the model family with exponent 1/a."""
    return a / (a - 1.0) * lam ** ((a - 1.0) / a)


def phi_exact_r13(lam: float) -> float:
    return lam ** ((2.0 * lam - 1.0) / lam) / (lam - 1.0)


def mittag_leffler_half(t: float) -> float:
    """Solution of the order-1/2 relaxation problem D^(1/2) u = -u, u(0)=1."""
    return math.exp(t) * math.erfc(math.sqrt(t))


def brute_quad_graded(f, a: float, b: float, singular_at: float,
                      n_panels: int = 240, order: int = 20) -> float:
    """Fixed-order Gauss-Legendre on panels graded geometrically toward
    ``singular_at`` (which must lie at or beyond ``b``)."""
    xs, ws = np.polynomial.legendre.leggauss(order)
    tau_hi = singular_at - a
    tau_lo = singular_at - b
    if tau_lo <= 0:
        raise ValueError("integration range touches the singular point")
    taus = np.geomspace(tau_hi, tau_lo, n_panels + 1)
    edges = singular_at - taus
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        total += half * sum(w * f(mid + half * x) for x, w in zip(xs, ws))
    return total


def brute_tail(u_of_tau, delta: float, n_panels: int = 200,
               order: int = 16) -> float:
    """Integral of the solution over the last ``delta`` before the endpoint,
    taken in the distance variable tau = theta - s (so the integrand is
    evaluated without cancellation near the singularity).  Graded panels
    shrink into the integrable endpoint; the truncated remainder biases the
    result slightly downward."""
    xs, ws = np.polynomial.legendre.leggauss(order)
    taus = np.geomspace(delta, delta * 1e-14, n_panels + 1)
    total = 0.0
    for tau_hi, tau_lo in zip(taus[:-1], taus[1:]):
        mid = 0.5 * (tau_lo + tau_hi)
        half = 0.5 * (tau_hi - tau_lo)
        total += half * sum(w * u_of_tau(mid + half * x) for x, w in zip(xs, ws))
    return total


# ---------------------------------------------------------------------------
# random expression trees for the round-trip tests

_LEAVES = ("num", "var", "const")
_NODES = ("neg", "add", "sub", "mul", "div", "pow", "call")


def random_expr(rng: random.Random, depth: int = 0):
    if depth >= 5 or rng.random() < 0.3:
        kind = rng.choice(_LEAVES)
        if kind == "num":
            return Num(round(rng.uniform(0.0, 20.0), 3))
        if kind == "var":
            return Var(rng.choice(exprdsl.VARIABLES))
        return Const(rng.choice(("a", "b", "c0")))
    kind = rng.choice(_NODES)
    if kind == "neg":
        return Neg(random_expr(rng, depth + 1))
    if kind == "call":
        return Call(rng.choice(exprdsl.FUNCTIONS), random_expr(rng, depth + 1))
    lhs = random_expr(rng, depth + 1)
    rhs = random_expr(rng, depth + 1)
    return {"add": Add, "sub": Sub, "mul": Mul, "div": Div, "pow": Pow}[kind](lhs, rhs)
