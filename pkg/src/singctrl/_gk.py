"""Gauss-Kronrod 7-15 quadrature core shared by the solver and the
integral-functional modules."""

from __future__ import annotations

import heapq
import math
from typing import Callable

__all__ = ["gk15", "adaptive_quad", "QuadFailure"]


class QuadFailure(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


# 15-point Kronrod abscissae (positive half) and weights; the odd-indexed
# abscissae form the embedded 7-point Gauss rule.
_XGK = (
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
)
_WGK = (
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
)
_WG = (
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
)


def gk15(f: Callable[[float], float], a: float, b: float) -> tuple[float, float]:
    """One Gauss-Kronrod 7-15 panel on [a, b]; returns (integral, error)."""
    half = 0.5 * (b - a)
    center = 0.5 * (a + b)

    fc = f(center)
    result_g = _WG[3] * fc
    result_k = _WGK[7] * fc
    for i in range(7):
        dx = half * _XGK[i]
        f1 = f(center - dx)
        f2 = f(center + dx)
        s = f1 + f2
        result_k += _WGK[i] * s
        if i % 2 == 1:
            result_g += _WG[i // 2] * s
    result_g *= half
    result_k *= half

    diff = abs(result_k - result_g)
    err = min(diff, (200.0 * diff) ** 1.5) if diff > 0.0 else 0.0
    return result_k, err


def adaptive_quad(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float,
    max_panels: int = 512,
) -> tuple[float, float]:
    """Adaptive Gauss-Kronrod integration of f over [a, b].

    Splits the worst panel until the summed error estimate falls below
    max(tol, tol * |integral|).  Raises :class:`QuadFailure` when the panel
    budget is exhausted first.
    """
    if a == b:
        return 0.0, 0.0
    integral, err = gk15(f, a, b)
    if not math.isfinite(integral):
        raise QuadFailure(f"non-finite integrand on [{a}, {b}]")
    # max-heap on error
    heap = [(-err, a, b, integral, err)]
    total_i, total_e = integral, err
    panels = 1
    while total_e > max(tol, tol * abs(total_i)) and panels < max_panels:
        _, lo, hi, i_old, e_old = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            # interval not splittable in floating point; keep as is
            heapq.heappush(heap, (0.0, lo, hi, i_old, 0.0))
            total_e -= e_old
            continue
        i1, e1 = gk15(f, lo, mid)
        i2, e2 = gk15(f, mid, hi)
        if not (math.isfinite(i1) and math.isfinite(i2)):
            raise QuadFailure(f"non-finite integrand on [{lo}, {hi}]")
        total_i += (i1 + i2) - i_old
        total_e += (e1 + e2) - e_old
        heapq.heappush(heap, (-e1, lo, mid, i1, e1))
        heapq.heappush(heap, (-e2, mid, hi, i2, e2))
        panels += 1
    if total_e > max(tol, tol * abs(total_i)):
        raise QuadFailure(
            f"tolerance {tol:g} not reached after {panels} panels "
            f"(error estimate {total_e:g})")
    return total_i, total_e
