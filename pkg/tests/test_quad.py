import io
import math

import numpy as np
import pytest

from singctrl import (
    ProblemError,
    builtin,
    load_problem,
    phi,
    phi_pnorm,
    tail_rigor,
)
from singctrl.quad import select_delta
from oracles import brute_quad_graded, phi_exact_b, phi_exact_r13

LAM_EXACT = 2.0 ** 1.5

ZERO_PROBLEM = """
f = 0
theta = lambda
u0 = 0
growth_a = 2
c_lambda = 0
"""


class TestPhi:
    def test_target_value_at_exact_lambda(self):
        r = phi(builtin("exampleB"), LAM_EXACT, 1e-8)
        assert r.value == pytest.approx(3.0, abs=1e-8)

    def test_value_at_one(self):
        r = phi(builtin("exampleB"), 1.0, 1e-6)
        assert r.value == pytest.approx(1.5, abs=1e-6)

    def test_zero_problem(self):
        r = phi(load_problem(ZERO_PROBLEM), 5.0, 1e-8)
        assert r.value == 0.0
        assert r.tail_estimate == 0.0

    def test_decomposition_identity(self):
        r = phi(builtin("exampleB"), 2.0, 1e-6)
        assert r.value == r.body + r.tail_estimate
        assert r.delta > 0
        assert math.isfinite(r.est_error) and r.est_error >= 0

    @pytest.mark.parametrize("a", [2.0, 3.0, 5.0])
    @pytest.mark.parametrize("tol", [1e-6, 1e-8])
    def test_oracle_equivalence_grid(self, a, tol):
        # model-family problems with valid growth metadata; the
        # counterexample problem deliberately breaks the power-law tail
        # model, so it is checked separately below.
        prob = builtin("exampleB", a=a)
        for lam in np.linspace(0.5, 5.0, 20):
            r = phi(prob, float(lam), tol)
            assert abs(r.value - phi_exact_b(a, float(lam))) <= tol

    def test_counterexample_blowup_direction(self):
        # no tolerance claim on remark13: the declared growth metadata is
        # nominal, but the computed values must track the blow-up
        prob = builtin("remark13")
        vals = [phi(prob, 1.0 + 10.0 ** -k, 1e-6).value for k in (1, 2, 3)]
        exact = [phi_exact_r13(1.0 + 10.0 ** -k) for k in (1, 2, 3)]
        assert vals[0] < vals[1] < vals[2]
        assert exact[0] < exact[1] < exact[2]

    def test_example_a_body_matches_brute_force(self):
        prob = builtin("exampleA")
        for lam in (0.5, 2.0, 5.0):
            r = phi(prob, lam, 1e-6)
            ref = brute_quad_graded(lambda s: 1.0 / (lam - s), 0.0,
                                    lam - r.delta, lam)
            assert abs(r.body - ref) <= 1e-6

    def test_tail_dominated_by_rigor(self):
        for a in (2.0, 3.0, 5.0):
            prob = builtin("exampleB", a=a)
            for lam in np.linspace(0.6, 4.8, 20):
                r = phi(prob, float(lam), 1e-6)
                assert abs(r.tail_estimate) <= r.tail_rigor_bound + 1e-12

    @pytest.mark.parametrize("delta", [0.1, 0.01, 0.001])
    def test_tail_dominated_at_fixed_delta(self, delta):
        prob = builtin("exampleB")
        for lam in np.linspace(0.6, 4.8, 20):
            if delta >= 0.5 * lam:
                continue
            r = phi(prob, float(lam), 1e-6, delta=delta)
            assert abs(r.tail_estimate) <= r.tail_rigor_bound + 1e-12

    def test_delta_refinement_consistency(self):
        tol = 1e-6
        prob = builtin("exampleB")
        for lam in (1.0, 2.0, 4.0):
            r = phi(prob, lam, tol)
            r_half = phi(prob, lam, tol, delta=r.delta / 2)
            assert abs(r.value - r_half.value) <= 2 * tol

    def test_explicit_delta_accepted(self):
        r = phi(builtin("exampleB"), 2.0, 1e-6, delta=0.05)
        assert r.delta == 0.05
        assert r.value == pytest.approx(phi_exact_b(3.0, 2.0), abs=1e-5)

    def test_inadmissible_lambda(self):
        with pytest.raises(ProblemError, match="admissible"):
            phi(builtin("exampleB"), 5e3, 1e-6)

    def test_csv_round(self):
        r = phi(builtin("exampleB"), 2.0, 1e-6)
        buf = io.StringIO()
        r.write_csv(buf)
        header, row = buf.getvalue().splitlines()
        assert header == "lambda,value,body,tail_estimate,tail_rigor_bound,delta,est_error"
        assert row.split(",")[0] == "2"


class TestOtherFamilies:
    def test_non_identity_endpoint(self):
        # theta = sqrt(lambda): u = (sqrt(lambda)-t)^(-1/a) and the integral
        # is (a/(a-1)) * lambda^((a-1)/(2a))
        prob = load_problem("""
            f = x/(a*(sqrt(lambda) - t))
            theta = sqrt(lambda)
            u0 = lambda^(-1/(2*a))
            growth_a = a
            c_lambda = 0
            lipschitz = 1/(a*eps)
            constants.a = 3
            analytic.u_exact = (sqrt(lambda) - t)^(-1/a)
            analytic.phi_exact = (a/(a - 1))*lambda^((a - 1)/(2*a))
        """, name="sqrt-endpoint")
        for lam in (0.5, 2.0, 9.0):
            r = phi(prob, lam, 1e-6)
            assert r.value == pytest.approx(1.5 * lam ** (1 / 3), abs=1e-6)

    def test_sign_changing_solution(self):
        # u = 0.5*lambda^(1/3)*(lambda-t)^(-1/3) - 1 starts at -0.5, crosses
        # zero at lambda - t = lambda/8, and blows up to +inf; the integral
        # is -lambda/4
        prob = load_problem("""
            f = (x + 1)/(a*(lambda - t))
            theta = lambda
            u0 = -0.5
            growth_a = a
            c_lambda = 1
            constants.a = 3
            analytic.u_exact = 0.5*lambda^(1/3)*(lambda - t)^(-1/3) - 1
        """, name="sign-change")
        for lam in (1.0, 2.0, 4.0):
            r = phi(prob, lam, 1e-6)
            assert r.value == pytest.approx(-0.25 * lam, abs=1e-6)
            assert not r.tail_clamped

    def test_negative_solution(self):
        # flipping the initial value flips the whole flow; the tail fit must
        # keep the sign
        prob = load_problem("""
            f = x/(a*(lambda - t))
            theta = lambda
            u0 = -lambda^(-1/a)
            growth_a = a
            c_lambda = 0
            constants.a = 3
        """, name="negative")
        r = phi(prob, 2.0, 1e-6)
        assert r.value == pytest.approx(-phi_exact_b(3.0, 2.0), abs=1e-6)
        assert r.tail_estimate < 0


class TestTailRigor:
    def test_unit_lambda_value(self):
        # C = 1, theta^(1/3) = 1 at lambda = 1
        bound = tail_rigor(builtin("exampleB"), 1.0, 0.1)
        assert bound == pytest.approx(1.5 * 0.1 ** (2 / 3), rel=1e-12)
        assert bound == pytest.approx(0.3231652, abs=1e-6)

    def test_sharp_at_model_family(self):
        # C * theta^(1/a) = 1 for this family, so the bound equals the true
        # tail integral (a/(a-1)) * delta^((a-1)/a) at every lambda
        for lam in (1.0, 2.0, LAM_EXACT, 4.0):
            bound = tail_rigor(builtin("exampleB"), lam, 0.01)
            assert bound == pytest.approx(1.5 * 0.01 ** (2 / 3), rel=1e-12)

    def test_monotone_to_zero(self):
        prob = builtin("exampleB")
        deltas = [10.0 ** -k for k in range(1, 8)]
        bounds = [tail_rigor(prob, 2.0, d) for d in deltas]
        assert all(bounds[i] > bounds[i + 1] > 0 for i in range(len(bounds) - 1))

    def test_bad_delta(self):
        with pytest.raises(ProblemError, match="delta"):
            tail_rigor(builtin("exampleB"), 2.0, 0.0)


class TestSelectDelta:
    def test_rigor_at_selected_delta_meets_budget_or_floor(self):
        prob = builtin("exampleB")
        for tol in (1e-2, 1e-4):
            d = select_delta(prob, 2.0, tol)
            assert (tail_rigor(prob, 2.0, d) <= 0.5 * tol * (1 + 1e-12)
                    or d == pytest.approx(1e-8 * 2.0))

    def test_capped_at_tenth_of_theta(self):
        d = select_delta(builtin("exampleB"), 2.0, 1e3)
        assert d == pytest.approx(0.2)

    def test_zero_constant_gives_cap(self):
        d = select_delta(load_problem(ZERO_PROBLEM), 5.0, 1e-8)
        assert d == pytest.approx(0.5)


class TestPnorm:
    def test_p1_matches_phi_on_positive_solution(self):
        tol = 1e-6
        for lam in (1.0, 2.0, 4.0):
            r1 = phi_pnorm(builtin("exampleB"), lam, 1.0, tol)
            r = phi(builtin("exampleB"), lam, tol)
            assert abs(r1.value - r.value) <= 2 * tol

    def test_p2_closed_form(self):
        # integral of (1-s)^(-2/3) over [0,1) is 3; the 2-norm is sqrt(3)
        r = phi_pnorm(builtin("exampleB"), 1.0, 2.0, 1e-6)
        assert r.value == pytest.approx(math.sqrt(3.0), abs=1e-5)

    def test_decomposition_identity(self):
        r = phi_pnorm(builtin("exampleB"), 2.0, 2.0, 1e-6)
        assert r.value == r.body + r.tail_estimate
        assert abs(r.tail_estimate) <= r.tail_rigor_bound + 1e-12

    def test_p_at_least_growth_a_rejected(self):
        with pytest.raises(ProblemError, match="p"):
            phi_pnorm(builtin("exampleB"), 1.0, 3.0, 1e-6)
        with pytest.raises(ProblemError, match="p"):
            phi_pnorm(builtin("exampleB"), 1.0, 4.0, 1e-6)

    def test_p_below_one_rejected(self):
        with pytest.raises(ProblemError, match="p"):
            phi_pnorm(builtin("exampleB"), 1.0, 0.5, 1e-6)


class TestContinuityProbe:
    def test_differences_shrink_linearly(self):
        from singctrl.quad import continuity_probe
        tol = 1e-8
        hs = [10.0 ** -k for k in (1, 2, 3, 4)]
        diffs = continuity_probe(builtin("exampleB"), 2.0, hs, tol)
        assert all(diffs[i] > diffs[i + 1] for i in range(len(diffs) - 1))
        # phi' (2) = 2^(-1/3): differences track h to first order
        dphi = 2.0 ** (-1 / 3)
        for h, d in zip(hs, diffs):
            assert d == pytest.approx(dphi * h, rel=0.1)
        assert diffs[-1] <= 3 * tol + dphi * hs[-1]

    def test_zero_offset(self):
        from singctrl.quad import continuity_probe
        diffs = continuity_probe(builtin("exampleB"), 2.0, [0.0], 1e-6)
        assert diffs == [0.0]

    def test_counterexample_grows(self):
        from singctrl.quad import continuity_probe
        # stepping toward the boundary of the admissible range blows up
        diffs = continuity_probe(builtin("remark13"), 1.5, [-0.3, -0.4, -0.45],
                                 1e-6)
        assert diffs[0] < diffs[1] < diffs[2]
