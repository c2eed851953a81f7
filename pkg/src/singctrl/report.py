"""Figure rendering for the CLI report path.

Each function takes data already destined for CSV and draws the matching
figure to a file: the bisection error-decay curves, a trajectory overlay
against the closed-form solution, and the functional swept over lambda.
Rendering always uses the Agg backend so it works headless.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .control import BisectionTrace, SweepEntry  # noqa: E402

__all__ = [
    "render_trace_figure",
    "render_trajectory_figure",
    "render_sweep_figure",
]


def render_trace_figure(
    trace: BisectionTrace,
    path: str,
    lambda_exact: float | None = None,
) -> None:
    """Semilog decay of the residual |phi(lambda_k) - p| over the iterations,
    plus |lambda_k - lambda_exact| when the exact control value is known."""
    ks = [it.k for it in trace.iterations]
    residuals = [it.residual for it in trace.iterations]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.semilogy(ks, residuals, "o-", label="|phi(lambda) - p|")
    if lambda_exact is not None:
        lam_err = [abs(it.lam - lambda_exact) for it in trace.iterations]
        ax.semilogy(ks, lam_err, "s-", label="|lambda - lambda_exact|")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_trajectory_figure(
    curves: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    path: str,
) -> None:
    """Overlay of labeled (t, u) curves; exact-solution curves are usually
    passed last so they draw on top as dashed lines."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for label, ts, us in curves:
        style = "--" if label.startswith("exact") else "-"
        ax.plot(ts, us, style, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("u")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def render_sweep_figure(entries: Sequence[SweepEntry], path: str) -> None:
    lams = [e.lam for e in entries if e.ok]
    vals = [e.result.value for e in entries if e.ok]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(lams, vals, "o-")
    ax.set_xlabel("lambda")
    ax.set_ylabel("integral of the solution")
    ax.grid(True, alpha=0.3)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
