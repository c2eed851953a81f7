"""Acceptance suite: one test per headline requirement, each printing a
single PASS/FAIL line with the measured numbers.

Run with ``pytest tests/test_acceptance.py -v -rA`` to see every line.
"""

import math
import random
import time

import numpy as np

from singctrl import (
    ControlSpec,
    Verdict,
    bisect,
    builtin,
    check_h3,
    load_problem,
    phi,
    phi_frac,
    solve_frac,
    solve_truncated,
    tail_rigor,
    uniform_convergence_probe,
)
from oracles import brute_quad_graded, brute_tail, phi_exact_b, phi_exact_r13

LAM_EXACT = 2.0 ** 1.5


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


def test_c1_control_reproduction():
    """Bisection control on the model family with a=3, target 3, bracket
    [1, 4], stop tolerance 1e-6."""
    prob = builtin("exampleB", a=3)
    spec = ControlSpec(p=3.0, lambda_lo=1.0, lambda_hi=4.0, tol=1e-6)
    start = time.perf_counter()
    trace = bisect(prob, spec)
    elapsed = time.perf_counter() - start
    residual = trace.iterations[-1].residual if trace.iterations else math.inf
    lam_err = abs(trace.lambda_star - LAM_EXACT) if trace.lambda_star else math.inf
    ok = (trace.outcome == "converged" and residual <= 1e-6
          and lam_err <= 5e-4 and len(trace.iterations) <= 30 and elapsed < 5.0)
    report("1", ok,
           f"converged={trace.outcome == 'converged'} "
           f"lambda*={trace.lambda_star:.12g} |lambda*-2^1.5|={lam_err:.3g} "
           f"residual={residual:.3g} iterations={len(trace.iterations)} "
           f"elapsed={elapsed:.2f}s")
    assert trace.outcome == "converged"
    assert residual <= 1e-6
    assert lam_err <= 5e-4
    assert len(trace.iterations) <= 30
    assert elapsed < 5.0


def test_c2_closed_form_phi_equivalence():
    """Functional values against closed forms (model family) and against
    brute-force quadrature on the matching truncated interval (order-one
    blow-up family, whose improper integral diverges)."""
    tol = 1e-6
    grid = np.linspace(0.5, 5.0, 20)
    worst_b = 0.0
    for a in (2.0, 3.0, 5.0):
        prob = builtin("exampleB", a=a)
        for lam in grid:
            r = phi(prob, float(lam), tol)
            worst_b = max(worst_b, abs(r.value - phi_exact_b(a, float(lam))))
    prob_a = builtin("exampleA")
    worst_a = 0.0
    for lam in grid:
        lam = float(lam)
        r = phi(prob_a, lam, tol)
        ref = brute_quad_graded(lambda s: 1.0 / (lam - s), 0.0,
                                lam - r.delta, lam)
        worst_a = max(worst_a, abs(r.body - ref))
    ok = worst_b <= tol and worst_a <= tol
    report("2", ok, f"worst closed-form error={worst_b:.3g}, worst "
                    f"truncated-body error={worst_a:.3g} (tolerance {tol:g})")
    assert worst_b <= tol
    assert worst_a <= tol


def test_c3_solver_oracle_accuracy():
    tol = 1e-10
    traj_a = solve_truncated(builtin("exampleA"), 2.0, 0.1, tol)
    err_a = float(np.abs(traj_a.u - 1.0 / (2.0 - traj_a.t)).max())
    worst_b = 0.0
    for a in (2.0, 3.0, 5.0):
        traj_b = solve_truncated(builtin("exampleB", a=a), LAM_EXACT, 0.1, tol)
        err = float(np.abs(traj_b.u - (LAM_EXACT - traj_b.t) ** (-1 / a)).max())
        worst_b = max(worst_b, err)
    ok = err_a <= 1e-6 and worst_b <= 1e-6
    report("3", ok, f"max node error: order-one family={err_a:.3g}, "
                    f"model family={worst_b:.3g} (tolerance 1e-6)")
    assert err_a <= 1e-6
    assert worst_b <= 1e-6


def test_c4_tail_bound_soundness():
    """Measured tail integral of the closed-form solution never exceeds the
    rigor bound (equality holds for the model family, hence the 1e-12
    roundoff allowance)."""
    worst_excess = -math.inf
    for a in (2.0, 3.0, 5.0):
        prob = builtin("exampleB", a=a)
        for lam in (1.0, LAM_EXACT, 4.0):
            for delta in (0.1, 0.01, 0.001):
                # u(theta - tau) = tau^(-1/a) for this family
                measured = abs(brute_tail(lambda tau: tau ** (-1.0 / a), delta))
                bound = tail_rigor(prob, lam, delta)
                worst_excess = max(worst_excess, measured - bound)
    # the concrete reference point: a=3, lambda=2^(3/2), delta=0.01
    prob3 = builtin("exampleB", a=3)
    measured3 = abs(brute_tail(lambda tau: tau ** (-1 / 3.0), 0.01))
    bound3 = tail_rigor(prob3, LAM_EXACT, 0.01)
    point_ok = (abs(measured3 - 0.069624) <= 1e-5 and measured3 <= bound3 + 1e-12)
    ok = worst_excess <= 1e-12 and point_ok
    report("4", ok, f"worst (measured - bound)={worst_excess:.3g}; reference "
                    f"point measured={measured3:.6f} bound={bound3:.6f}")
    assert worst_excess <= 1e-12
    assert point_ok


def test_c5_bisection_structural_invariants():
    """Exact width halving and sign-preserving brackets on randomized valid
    specs.  Endpoints are snapped to a dyadic grid so every midpoint stays
    exactly representable across the iteration count."""
    rng = random.Random(97531)
    prob = builtin("exampleB", a=3)
    checked = 0
    for _ in range(10):
        lo = round(rng.uniform(0.5, 1.9) * 65536) / 65536
        hi = round(rng.uniform(3.1, 4.9) * 65536) / 65536
        tol = rng.choice([1e-4, 1e-5, 1e-6])
        spec = ControlSpec(p=3.0, lambda_lo=lo, lambda_hi=hi, tol=tol)
        trace = bisect(prob, spec)
        assert trace.outcome == "converged", (lo, hi, tol)
        w0 = hi - lo
        cur = (lo, hi)
        phi_at = {lo: trace.phi_lo, hi: trace.phi_hi}
        for it in trace.iterations:
            assert it.hi - it.lo == w0 * 2.0 ** (-it.k), "width law violated"
            assert it.lam == 0.5 * (cur[0] + cur[1]), "midpoint drift"
            phi_at[it.lam] = it.phi
            cur = (it.lo, it.hi)
            assert phi_at[it.lo] < spec.p + spec.phi_tol, "lower bracket sign"
            assert phi_at[it.hi] > spec.p - spec.phi_tol, "upper bracket sign"
        checked += len(trace.iterations)
    report("5", True, f"width law and bracket signs exact over {checked} "
                      f"iterations in 10 randomized specs")


def test_c6_uniform_convergence_probe():
    """Sup-distances for lambda_k = 2 + 2^-k, eps = 0.5.

    Note: the closed forms give sup|u_k - u*| = 2^-k / (0.5 * (0.5 + 2^-k))
    on [0, 1.5], which is 3.899e-3 at k = 10, so the 1e-3 envelope is not
    attainable for this sequence; the assertion is kept at its stated value
    and this check is expected to fail on the final distance.
    """
    prob = builtin("exampleA")
    lams = [2.0 + 2.0 ** -k for k in range(1, 11)]
    dists = uniform_convergence_probe(prob, 2.0, lams, 0.5, tol=1e-10)
    monotone = all(dists[i] > dists[i + 1] for i in range(len(dists) - 1))
    final_ok = dists[-1] < 1e-3
    ok = monotone and final_ok
    report("6", ok, f"monotone={monotone}, distance at k=10 is "
                    f"{dists[-1]:.4g} (required < 1e-3; closed form gives "
                    f"2^-10/(0.5*(0.5+2^-10)) = 3.899e-3)")
    assert monotone
    assert final_ok


def test_c7_blow_up_witness():
    prob = builtin("remark13")
    vals = []
    for k in (1, 2, 3, 4):
        lam = 1.0 + 10.0 ** -k
        vals.append(phi(prob, lam, 1e-6).value)
    closed = [phi_exact_r13(1.0 + 10.0 ** -k) for k in (1, 2, 3, 4)]
    increasing = all(vals[i] < vals[i + 1] for i in range(3))
    big = vals[3] > 1e3
    ok = increasing and big and closed[3] > 9.9e3
    report("7", ok, f"values={[f'{v:.4g}' for v in vals]} increasing="
                    f"{increasing}, exceeds 1e3 at k=4: {big} "
                    f"(closed form at k=4: {closed[3]:.4g})")
    assert increasing
    assert big


def test_c8_fractional_oracles():
    cfg = """
        f = 1
        theta = lambda
        u0 = 0
        growth_a = 2
        c_lambda = 1
    """
    prob = load_problem(cfg, name="const-one")
    traj = solve_frac(prob, 1.0, 0.5, 1e-6, 1024)
    exact = traj.t ** 0.5 / math.gamma(1.5)
    solve_err = float(np.abs(traj.u - exact).max())

    p_target = 4.0 / (3.0 * math.sqrt(math.pi))
    spec = ControlSpec(p=p_target, lambda_lo=0.5, lambda_hi=2.0, tol=1e-4)
    trace = bisect(prob, spec, lambda pr, lam, tol: phi_frac(pr, lam, 0.5, tol))
    lam_err = abs(trace.lambda_star - 1.0) if trace.lambda_star else math.inf
    ok = solve_err <= 1e-3 and trace.outcome == "converged" and lam_err <= 1e-3
    report("8", ok, f"solve error at 1024 steps={solve_err:.3g} "
                    f"(<= 1e-3); control lambda*={trace.lambda_star:.8g}, "
                    f"|lambda*-1|={lam_err:.3g} (<= 1e-3)")
    assert solve_err <= 1e-3
    assert trace.outcome == "converged"
    assert lam_err <= 1e-3


def test_c9_hypothesis_validator():
    prob = builtin("exampleB", a=3)
    all_pass = True
    for lam in np.linspace(0.5, 10.0, 20):
        all_pass &= check_h3(prob, float(lam)).h3 is Verdict.PASS
    violator = load_problem("""
        f = 2*x/(lambda - t)
        theta = lambda
        u0 = 1/lambda
        growth_a = 3
        c_lambda = 0
    """, name="violator")
    rep = check_h3(violator, 2.0)
    violator_ok = rep.h3 is Verdict.FAIL and len(rep.witnesses) >= 1
    ok = all_pass and violator_ok
    report("9", ok, f"model family passes on [0.5, 10]: {all_pass}; "
                    f"constructed violator fails with witness: {violator_ok}")
    assert all_pass
    assert violator_ok


def test_figures_reproducible(tmp_path):
    """Error-decay and trajectory-overlay CSVs (and figures) regenerate from
    the CLI; qualitative shape only."""
    from singctrl.cli import main

    trace_csv = tmp_path / "decay.csv"
    fig1 = tmp_path / "decay.png"
    code = main(["control", "--builtin", "exampleB", "--const", "a=3",
                 "--p", "3", "--lo", "1", "--hi", "4", "--tol", "1e-6",
                 "--trace", str(trace_csv), "--plot", str(fig1)])
    assert code == 0
    rows = trace_csv.read_text().splitlines()
    first_res = float(rows[1].split(",")[3])
    last_res = float(rows[-1].split(",")[3])
    decayed = last_res < 1e-2 * first_res

    traj_csv = tmp_path / "traj.csv"
    fig2 = tmp_path / "overlay.png"
    code = main(["solve", "--builtin", "exampleB", "--const", "a=3",
                 "--lambda", f"{LAM_EXACT:.12g}", "--delta", "0.05",
                 "--tol", "1e-10", "--out", str(traj_csv), "--plot", str(fig2)])
    assert code == 0
    t_last, u_last = (float(v) for v in traj_csv.read_text().splitlines()[-1].split(","))
    overlay_ok = abs(u_last - 0.05 ** (-1 / 3)) <= 1e-6

    ok = decayed and overlay_ok and fig1.stat().st_size > 1000 \
        and fig2.stat().st_size > 1000
    report("figures", ok, f"residual decay {first_res:.3g} -> {last_res:.3g}; "
                          f"trajectory endpoint error "
                          f"{abs(u_last - 0.05 ** (-1/3)):.3g}")
    assert decayed
    assert overlay_ok
