import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dderace.autonomous import Verdict, dominant_root, stability_verdict
from dderace.core import (
    ArmamentMatrix,
    CoefficientSignal,
    DomainError,
    ModelError,
    TimeVaryingMatrix,
)
from dderace.nonautonomous import (
    INCONCLUSIVE,
    NO,
    YES,
    AuditWindow,
    c_functions,
    cor31_check,
    cross_validate,
    ode_lyapunov_check,
    perturbation_check,
    thm31_check,
    thm32_check,
    window_integral,
)


C = CoefficientSignal.constant
ZERO = C(0.0)


def const_model(a, b, k, l):
    return TimeVaryingMatrix(C(a), C(b), C(k), C(l))


def window(tau, length=40):
    return AuditWindow(0.0, length * tau, tau / 16)


class TestAuditWindow:
    def test_tail(self):
        w = AuditWindow(0.0, 10.0, 0.5)
        assert w.tail_start == 5.0
        np.testing.assert_allclose(w.tail_grid(), np.arange(5.0, 10.01, 0.5))

    @pytest.mark.parametrize("args", [(1, 1, 0.1), (0, 1, 0), (0, 1, 0.1, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(ModelError):
            AuditWindow(*args)

    def test_validate(self):
        with pytest.raises(ModelError):
            AuditWindow(0, 5, 0.01).validate(1.0)
        with pytest.raises(ModelError):
            AuditWindow(0, 50, 0.1).validate(1.0)
        AuditWindow.for_delay(1.0).validate(1.0)


class TestLyapunov:
    def test_constants_yes(self):
        us, ast = ode_lyapunov_check(const_model(2, 2, 1, 1), window(0.1))
        assert us.holds == YES and ast.holds == YES
        assert ast.details["alpha"] == 4 and ast.details["beta"] == 3

    def test_decoupled(self):
        us, ast = ode_lyapunov_check(const_model(0.3, 5, 0, 0), window(0.1))
        assert us.holds == ast.holds == YES

    def test_dominated(self):
        us, ast = ode_lyapunov_check(const_model(1, 1, 2, 2), window(0.1))
        assert us.holds == ast.holds == NO
        assert us.witness_t is not None

    def test_equality_inconclusive(self):
        us, _ = ode_lyapunov_check(const_model(1, 1, 1, 1), window(0.1))
        assert us.holds == INCONCLUSIVE


class TestQuadrature:
    def test_constant_c(self):
        c1, _ = c_functions(const_model(1, 1, 0.5, 0), 0.2, 3.0)
        _, c2 = c_functions(const_model(1, 1, 0, 0.25), 0.2, 3.0)
        assert c1 == pytest.approx(0.3, rel=1e-14)
        assert c2 == pytest.approx(0.25, rel=1e-14)

    @given(st.floats(0.1, 2), st.floats(-1, 1), st.floats(0.1, 3), st.floats(0, 6),
           st.floats(0.05, 1.0), st.floats(1.0, 30))
    def test_sinusoid_closed_form(self, c, d, om, phi, tau, t):
        sig = CoefficientSignal.sinusoid(c, d, om, phi)
        exact = c * tau + (d / om) * (math.cos(om * (t - tau) + phi) - math.cos(om * t + phi))
        assert window_integral(sig, tau, t) == pytest.approx(exact, abs=1e-9)

    def test_simpson_self_consistency(self):
        sig = CoefficientSignal.sinusoid(0.1, 0.05, 1.7, 0.3)
        t = np.linspace(1, 10, 7)
        coarse = window_integral(sig, 0.4, t)
        # 10x refined composite Simpson by summing sub-windows
        fine = sum(window_integral(sig, 0.04, t - j * 0.04) for j in range(10))
        np.testing.assert_allclose(coarse, fine, atol=1e-10)

    def test_table_outside(self):
        M = TimeVaryingMatrix(C(1), C(1), CoefficientSignal.table([1, 2], [0.1, 0.1]), C(0))
        with pytest.raises(DomainError):
            c_functions(M, 0.5, 1.2)


class TestThm31:
    def test_fixed_vector_yes(self):
        v = thm31_check(const_model(1, 1, 0.1, 0.1), 0.1, (1, 1), window(0.1))
        assert v.holds == YES
        assert v.details["a"]["margin"] == pytest.approx(0.79, rel=1e-9)

    def test_decoupled_margin_to_one(self):
        margins = []
        for tau in (0.1, 0.01, 0.001):
            v = thm31_check(const_model(1, 1, 0, 0), tau, None, window(tau))
            assert v.holds == YES
            margins.append(v.margin)
        assert margins[-1] == pytest.approx(1.0, abs=2e-3)
        assert margins[0] < margins[1] < margins[2]

    def test_no_certificate(self):
        v = thm31_check(const_model(1, 1, 1.5, 1.5), 0.1, None, window(0.1))
        assert v.holds == INCONCLUSIVE and v.margin < 0

    def test_fixed_vector_no(self):
        v = thm31_check(const_model(1, 1, 1.5, 1.5), 0.1, (1, 1), window(0.1))
        assert v.holds == NO

    def test_bad_vector(self):
        with pytest.raises(ValueError):
            thm31_check(const_model(1, 1, 0, 0), 0.1, (1, -1), window(0.1))

    @given(st.floats(0.2, 3), st.floats(0.2, 3), st.floats(0, 2), st.floats(0, 2),
           st.floats(0.01, 2))
    def test_never_contradicts_autonomous(self, a, b, k, l, tau):
        v = thm31_check(const_model(a, b, k, l), tau, (1, 1), window(tau))
        if v.holds == YES:
            assert stability_verdict(ArmamentMatrix(a, b, k, l), tau) is Verdict.EAS


class TestCor31:
    def test_sinusoid_yes(self):
        k = CoefficientSignal.sinusoid(0.1, 0.05, 1.0)
        M = TimeVaryingMatrix(C(1), C(1), k, k)
        v = cor31_check(M, 0.2, window(0.2))
        assert v.holds == YES
        assert v.details["sup_expr1"] <= 0.38

    def test_decoupled(self):
        assert cor31_check(const_model(1, 1, 0, 0), 0.5, window(0.5)).holds == YES

    def test_long_delay(self):
        v = cor31_check(const_model(1, 1, 0, 0), 1.2, window(1.2))
        assert v.holds == NO and v.margin < 0

    @given(st.floats(0.2, 3), st.floats(0.2, 3), st.floats(0, 1), st.floats(0, 1),
           st.floats(0, 0.5), st.floats(0.1, 3), st.floats(0.01, 0.5))
    def test_monotone_in_delay(self, a, b, kc, lc, kd, om, tau):
        k = CoefficientSignal.sinusoid(kc + kd, kd, om)
        M = TimeVaryingMatrix(C(a), C(b), k, C(lc))
        w = AuditWindow(0.0, 80 * tau, tau / 16)
        m1 = cor31_check(M, tau, w).margin
        m2 = cor31_check(M, 2 * tau, w).margin
        assert m2 <= m1 + 1e-12


class TestThm32:
    def test_zero_envelopes_match_cor31(self):
        for model, tau in ((const_model(1, 1, 0.1, 0.2), 0.2), (const_model(1, 1, 0, 0), 1.2)):
            w = window(tau)
            att, exp_ = thm32_check(model, tau, ZERO, ZERO, w)
            cor = cor31_check(model, tau, w)
            assert att.holds == exp_.holds == cor.holds

    def test_constant_arithmetic(self):
        att, exp_ = thm32_check(const_model(1, 1, 0.05, 0.05), 0.1, C(0.05), C(0.05), window(0.1))
        assert att.holds == exp_.holds == YES
        assert att.details["sup_B1"] <= 0.21 + 1e-12

    def test_decaying_damping(self):
        tau = 0.1
        t = np.linspace(0, 40 * tau + 1, 2001)
        a = CoefficientSignal.table(t, 1 / (1 + t))
        M = TimeVaryingMatrix(a, C(1), ZERO, ZERO)
        att, exp_ = thm32_check(M, tau, ZERO, ZERO, AuditWindow(tau, 40 * tau, tau / 16))
        assert exp_.holds == NO
        assert att.details["liminf_a_positive"] == NO

    def test_analytic_decay(self):
        # exp-decaying damping: integrable, so neither conclusion follows
        M = TimeVaryingMatrix(CoefficientSignal.exp_decay(1.0, 0.5), C(1), ZERO, ZERO)
        att, exp_ = thm32_check(M, 0.1, ZERO, ZERO, window(0.1))
        assert att.holds == NO and exp_.holds == NO

    def test_negative_envelope(self):
        with pytest.raises(ModelError):
            thm32_check(const_model(1, 1, 0, 0), 0.1, C(-0.1), ZERO, window(0.1))


class TestPerturbation:
    def test_unperturbed(self, race):
        assert perturbation_check(race, 0.5, 0.0).holds == YES

    def test_half_rate(self, race):
        alpha = -dominant_root(race, 0.3).lam.real / 0.3
        v = perturbation_check(race, 0.3, alpha / 2)
        assert v.holds == YES
        assert v.details["alpha"] == pytest.approx(alpha, rel=1e-14)
        assert v.margin == pytest.approx(alpha / 2, rel=1e-12)
        assert perturbation_check(race, 0.3, 1.5 * alpha).holds == NO

    def test_above_threshold(self, race):
        v = perturbation_check(race, 0.7, 0.0)
        assert v.holds == NO and "not EAS" in v.details["reason"]

    def test_negative_bound(self, race):
        with pytest.raises(ValueError):
            perturbation_check(race, 0.3, -1.0)


def test_trivially_stable_family_never_no():
    for a in (0.5, 1.0, 3.0):
        tau = 0.9 / (math.e * a)
        M = const_model(a, a, 0, 0)
        w = window(tau)
        verdicts = [*ode_lyapunov_check(M, w), thm31_check(M, tau, None, w), cor31_check(M, tau, w),
                    *thm32_check(M, tau, ZERO, ZERO, w),
                    perturbation_check(ArmamentMatrix(a, a, 0, 0), tau, 0.0)]
        assert all(v.holds != NO for v in verdicts), [(v.criterion, v.holds) for v in verdicts]


class TestCrossValidation:
    def test_cor31_yes_decays(self):
        k = CoefficientSignal.sinusoid(0.1, 0.05, 1.0)
        M = TimeVaryingMatrix(C(1), C(1), k, k)
        tau = 0.2
        w = window(tau)
        v = cor31_check(M, tau, w)
        cv = cross_validate(M, tau, [v], w)
        entry = cv.entries[0]
        assert entry["checked"] and len(entry["rates"]) == 5
        assert all(r < 0 for r in entry["rates"])
        assert not cv.falsifications

    def test_inconclusive_not_simulated(self):
        M = const_model(1, 1, 1.5, 1.5)
        w = window(0.1)
        v = thm31_check(M, 0.1, None, w)
        cv = cross_validate(M, 0.1, [v], w)
        assert cv.entries[0]["checked"] is False and cv.entries[0]["rates"] == []

    def test_perturbed_system_decays(self, race):
        tau = 0.3
        alpha = -dominant_root(race, tau).lam.real / tau
        delta = 0.5 * alpha
        M = TimeVaryingMatrix(CoefficientSignal.sinusoid(race.a, delta, 1.0), C(race.b),
                              C(race.k), C(race.l))
        v = perturbation_check(race, tau, delta)
        w = AuditWindow(0.0, 60 * tau, tau / 16)
        cv = cross_validate(M, tau, [v], w)
        assert v.holds == YES and not cv.falsifications
        assert all(r < 0 for r in cv.entries[0]["rates"])

    def test_detects_false_claim(self):
        # a fabricated "yes" for an unstable system must be flagged
        from dderace.nonautonomous import CriterionVerdict

        M = const_model(2, 1, 3, 0.25)
        tau = 1.0
        w = window(tau)
        cv = cross_validate(M, tau, [CriterionVerdict("cor3.1", YES, 1.0, None)], w)
        assert len(cv.falsifications) == 1
        assert cv.to_dict()["falsifications"] == 1
