import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dderace.core import (
    ArmamentMatrix,
    CoefficientSignal,
    ConstantMatrix,
    CubicHostility,
    DomainError,
    HistoryFunction,
    ModelError,
    TimeVaryingMatrix,
)
from dderace.engine import (
    BACKEND,
    DdeProblem,
    DelayedLinearRhs,
    DivergedError,
    NoOscillationError,
    decay_rate,
    integrate,
    interval_sup_norms,
    kernel,
    linear_problem,
    oscillation_amplitude,
    oscillation_period,
)

HAYES = ConstantMatrix([[-math.pi / 2]])


def scalar_problem(rhs, tau=1.0, value=1.0, horizon=10.0, n=32):
    return DdeProblem(1, rhs, tau, HistoryFunction.constant(tau, [value]), horizon, n)


class TestIntegrate:
    def test_zero_field(self):
        traj = integrate(scalar_problem(lambda t, x, xd: np.zeros(1), value=0.7))
        assert np.all(traj.states == 0.7)

    def test_hayes_boundary_sustains(self):
        prob = linear_problem(HAYES, 1.0, HistoryFunction.constant(1.0, [1.0]), 40.0)
        traj = integrate(prob)
        early = traj.states[(traj.t >= 20) & (traj.t <= 30), 0]
        late = traj.states[(traj.t >= 30) & (traj.t <= 40), 0]
        a1 = 0.5 * (early.max() - early.min())
        a2 = 0.5 * (late.max() - late.min())
        assert abs(a2 / a1 - 1) < 0.05

    def test_below_threshold_contracts(self, race):
        tau = 0.9 * math.pi / 5
        for n in (32, 64):
            traj = integrate(linear_problem(race, tau, HistoryFunction.constant(tau, [1, 1]),
                                            60.0, n))
            sup = traj.sup_norm()
            at10 = sup[np.searchsorted(traj.t, 10.0)]
            assert sup[-1] < 0.1 * at10

    def test_first_step_exact_for_constant_history(self, race):
        # x' = A phi is constant on [0, tau], so RK4 is exact there
        tau = 0.5
        traj = integrate(linear_problem(race, tau, HistoryFunction.constant(tau, [1, 2]), tau))
        expected = np.array([1, 2]) + tau * race.as_array() @ [1, 2]
        np.testing.assert_allclose(traj.states[-1], expected, rtol=1e-14)

    def test_second_interval_quadratic(self):
        # x' = -x(t-1), phi = 1: x = 1 - t on [0,1], x = 1 - t + (t-1)^2/2 on [1,2]
        traj = integrate(linear_problem(ConstantMatrix([[-1.0]]), 1.0,
                                        HistoryFunction.constant(1.0, [1.0]), 2.0, 16))
        t = traj.t
        exact = np.where(t <= 1, 1 - t, 1 - t + (t - 1) ** 2 / 2)
        np.testing.assert_allclose(traj.states[:, 0], exact, atol=1e-14)

    def test_backends_agree(self, race):
        if BACKEND != "compiled":
            pytest.skip("compiled kernel not built")
        tau = 0.6
        M = TimeVaryingMatrix(CoefficientSignal.sinusoid(2, 0.5, 1.3), CoefficientSignal.constant(1),
                              CoefficientSignal.exp_decay(3, 0.1), CoefficientSignal.constant(0.25))
        rhs = DelayedLinearRhs(M, current=ConstantMatrix(-0.1 * np.eye(2)),
                               cubic=CubicHostility(g30=1, h12=-0.5),
                               envelope=(CoefficientSignal.constant(0.1), CoefficientSignal.sinusoid(0.2, 0.1, 1)))
        prob = DdeProblem(2, rhs, tau, HistoryFunction.sinusoid(tau, [0.1, 0.2], [0.3, 0.1], [1, 2]), 20.0)
        a = integrate(prob, backend="compiled")
        b = integrate(prob, backend="python")
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.derivatives, b.derivatives)

    def test_generic_callable_matches_kernel(self, race):
        tau = 0.6
        hist = HistoryFunction.sinusoid(tau, [0.1, 0.2], [0.3, 0.1], [1, 2])
        cubic = CubicHostility(g30=1, h21=-0.5)
        lin = DelayedLinearRhs(ConstantMatrix(race.as_array()), cubic=cubic)
        fast = integrate(DdeProblem(2, lin, tau, hist, 10.0))
        slow = integrate(DdeProblem(2, lambda t, x, xd: lin(t, x, xd), tau, hist, 10.0))
        np.testing.assert_allclose(fast.states, slow.states, rtol=1e-13, atol=1e-15)

    def test_divergence(self, race):
        tau = 2.0
        prob = linear_problem(race, tau, HistoryFunction.constant(tau, [1, 1]), 2000.0)
        with pytest.raises(DivergedError) as info:
            integrate(prob)
        err = info.value
        assert 0 < err.t_blowup < 2000
        assert err.partial is not None
        assert np.max(np.abs(err.partial.states)) <= 1e12

    def test_table_coefficients_outside_window(self):
        k = CoefficientSignal.table([0, 5], [0.1, 0.2])
        c = CoefficientSignal.constant
        M = TimeVaryingMatrix(c(1), c(1), k, c(0))
        prob = linear_problem(M, 0.5, HistoryFunction.constant(0.5, [1, 1]), 10.0)
        with pytest.raises(DomainError):
            integrate(prob)

    @pytest.mark.parametrize("kw", [dict(steps_per_delay=4), dict(horizon=-1.0),
                                    dict(tau=0.0)])
    def test_problem_validation(self, kw):
        args = dict(dimension=1, rhs=lambda t, x, xd: -xd, tau=1.0,
                    history=HistoryFunction.constant(1.0, [1.0]), horizon=5.0)
        args.update(kw)
        with pytest.raises(ModelError):
            DdeProblem(**args)

    def test_history_dimension_mismatch(self):
        with pytest.raises(ModelError):
            DdeProblem(2, lambda t, x, xd: -xd, 1.0, HistoryFunction.constant(1.0, [1.0]), 5.0)


class TestConvergence:
    def reference_error(self, race, n, t_eval, ref):
        tau = 0.5
        hist = HistoryFunction.sinusoid(tau, [0.2, -0.1], [0.3, 0.2], [1.0, 2.0])
        traj = integrate(linear_problem(race, tau, hist, t_eval, n, cubic=CubicHostility(g30=1)))
        return np.max(np.abs(traj(t_eval) - ref))

    def test_fourth_order(self, race):
        tau, t_eval = 0.5, 5.0
        hist = HistoryFunction.sinusoid(tau, [0.2, -0.1], [0.3, 0.2], [1.0, 2.0])
        ref = integrate(linear_problem(race, tau, hist, t_eval, 512,
                                       cubic=CubicHostility(g30=1)))(t_eval)
        e32 = self.reference_error(race, 32, t_eval, ref)
        e64 = self.reference_error(race, 64, t_eval, ref)
        e128 = self.reference_error(race, 128, t_eval, ref)
        assert e32 / e64 >= 8
        assert e64 / e128 >= 8


class TestTrajectory:
    @pytest.fixture
    def traj(self, race):
        tau = 0.5
        hist = HistoryFunction.sinusoid(tau, [0.2, -0.1], [0.3, 0.2], [1.0, 2.0])
        return integrate(linear_problem(race, tau, hist, 5.0, 32))

    def test_dense_matches_grid(self, traj):
        np.testing.assert_array_equal(traj(traj.t), traj.states)

    def test_history_before_start(self, traj):
        th = np.linspace(-0.5, -0.01, 9)
        np.testing.assert_array_equal(traj(th), traj.history(th))

    def test_c1_at_grid_points(self, traj):
        eps = 1e-7
        for j in (5, 40, 100):
            t = traj.t[j]
            left = (traj(t) - traj(t - eps)) / eps
            right = (traj(t + eps) - traj(t)) / eps
            np.testing.assert_allclose(left, traj.derivatives[j], atol=1e-5)
            np.testing.assert_allclose(right, traj.derivatives[j], atol=1e-5)

    def test_segment(self, traj):
        theta, seg = traj.segment(2.0, 17)
        assert theta[0] == -0.5 and theta[-1] == 0
        np.testing.assert_allclose(seg[-1], traj(2.0))

    def test_outside_range(self, traj):
        with pytest.raises(DomainError):
            traj(6.0)
        with pytest.raises(DomainError):
            traj(-0.6)

    def test_csv(self, traj, tmp_path):
        path = tmp_path / "t.csv"
        traj.to_csv(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        np.testing.assert_array_equal(data[:, 0], traj.t)
        np.testing.assert_array_equal(data[:, 1:], traj.states)
        assert path.read_text().splitlines()[0] == "t,x1,x2"

    def test_read_only(self, traj):
        with pytest.raises(ValueError):
            traj.states[0, 0] = 1.0


class TestCausality:
    def test_delayed_argument_is_past_value(self, race):
        tau = 0.5
        seen = []

        def rhs(t, x, xd):
            seen.append((t, np.array(xd)))
            return race.as_array() @ xd

        hist = HistoryFunction.sinusoid(tau, [0.2, -0.1], [0.3, 0.2], [1.0, 2.0])
        traj = integrate(DdeProblem(2, rhs, tau, hist, 3.0, 16))
        h = traj.h
        for t, xd in seen:
            # the value handed over is the dense solution at t - tau <= t - tau + h
            np.testing.assert_allclose(xd, traj(t - tau), atol=1e-14)
            assert t - tau <= traj.t0 + h * math.ceil((t - tau - traj.t0) / h + 1e-9) + 1e-12

    def test_prefix_invariance(self, race):
        tau = 0.5
        hist = HistoryFunction.constant(tau, [1, -1])
        short = integrate(linear_problem(race, tau, hist, 3.0))
        long = integrate(linear_problem(race, tau, hist, 6.0))
        np.testing.assert_array_equal(short.states, long.states[: len(short.t)])


@given(alpha=st.sampled_from([-1.0, 2.0]), w=st.floats(0.1, 3.0), tau=st.floats(0.1, 1.5))
def test_linearity(alpha, w, tau):
    A = ArmamentMatrix(2.0, 1.0, 3.0, 0.25)
    hist = HistoryFunction.sinusoid(tau, [0.1, 0.3], [0.2, -0.1], [w, 2 * w])
    base = integrate(linear_problem(A, tau, hist, 10 * tau, 16))
    scaled = integrate(linear_problem(A, tau, hist.scaled(alpha), 10 * tau, 16))
    scale = np.max(np.abs(base.states))
    assert np.max(np.abs(scaled.states - alpha * base.states)) <= 1e-12 * abs(alpha) * scale


class TestPostProcessing:
    def test_exponential_decay_rate(self):
        traj = integrate(scalar_problem(lambda t, x, xd: -x, tau=0.5, horizon=10.0))
        assert decay_rate(traj, 0.0) == pytest.approx(-1.0, rel=0.02)

    def test_constant_rate(self):
        traj = integrate(scalar_problem(lambda t, x, xd: np.zeros(1), horizon=10.0))
        assert abs(decay_rate(traj, 0.0)) < 1e-9

    def test_zero_tail(self):
        traj = integrate(scalar_problem(lambda t, x, xd: np.zeros(1), value=0.0))
        assert decay_rate(traj, 0.0) == -math.inf

    def test_growing(self, race):
        tau = 1.0
        traj = integrate(linear_problem(race, tau, HistoryFunction.constant(tau, [1, 1]), 60.0))
        assert decay_rate(traj, 30.0) > 0

    def test_short_tail(self):
        traj = integrate(scalar_problem(lambda t, x, xd: -x, horizon=3.0))
        with pytest.raises(ValueError):
            decay_rate(traj, 0.0)

    def test_interval_norms(self):
        traj = integrate(scalar_problem(lambda t, x, xd: -x, tau=1.0, horizon=6.0, n=16))
        times, sups = interval_sup_norms(traj, 0.0)
        np.testing.assert_allclose(times, [0, 1, 2, 3, 4, 5])
        np.testing.assert_allclose(sups, np.exp(-times), rtol=1e-6)

    def test_sinusoid_amplitude(self):
        # x' = 0.5 cos t  ->  x = 0.5 sin t
        prob = scalar_problem(lambda t, x, xd: np.array([0.5 * math.cos(t)]), value=0.0,
                              horizon=40.0, n=64)
        traj = integrate(prob)
        assert oscillation_amplitude(traj, 0, 10.0) == pytest.approx(0.5, rel=0.01)
        assert oscillation_period(traj, 0, 10.0) == pytest.approx(2 * math.pi, rel=1e-4)

    def test_decayed_has_no_oscillation(self):
        traj = integrate(scalar_problem(lambda t, x, xd: -x, horizon=40.0))
        with pytest.raises(NoOscillationError):
            oscillation_amplitude(traj, 0, 20.0)

    def test_component_range(self):
        traj = integrate(scalar_problem(lambda t, x, xd: -x))
        with pytest.raises(IndexError):
            oscillation_amplitude(traj, 3, 0.0)

    def test_limit_cycle_stable_under_doubling(self, race):
        tau = math.pi / 5 * 1.02
        cubic = CubicHostility(g30=1.0)
        hist = HistoryFunction.constant(tau, [0.1, 0.0])
        amps = []
        for horizon in (400.0, 800.0):
            traj = integrate(linear_problem(race, tau, hist, horizon, 32, cubic=cubic))
            amps.append(oscillation_amplitude(traj, 0, 0.75 * horizon))
        assert amps[0] > 0
        assert amps[1] == pytest.approx(amps[0], rel=0.02)


def test_kernel_selection():
    assert kernel("python") is not None
    with pytest.raises(ValueError):
        kernel("fortran")
