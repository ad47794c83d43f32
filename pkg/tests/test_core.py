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
    HostilityBound,
    MatrixTable,
    ModelError,
    TimeVaryingMatrix,
    equilibrium,
    eval_matrix,
)

from conftest import stable_matrices


class TestArmamentMatrix:
    def test_derived_quantities(self, race):
        assert race.determinant() == 1.25
        assert race.m_matrix_regime
        assert race.discriminant() == 4.0
        np.testing.assert_array_equal(race.as_array(), [[-2, 3], [0.25, -1]])

    @pytest.mark.parametrize("args", [(0, 1, 1, 1), (1, -1, 0, 0), (1, 1, -0.1, 0),
                                      (1, 1, 0, -1), (math.nan, 1, 0, 0), (math.inf, 1, 0, 0)])
    def test_rejects_bad_fields(self, args):
        with pytest.raises(ModelError):
            ArmamentMatrix(*args)

    def test_singular_regime_flag(self):
        assert not ArmamentMatrix(1, 1, 1, 1).m_matrix_regime
        assert not ArmamentMatrix(1, 1, 2, 1).m_matrix_regime

    def test_swap(self, race):
        s = race.swapped()
        assert (s.a, s.b, s.k, s.l) == (1.0, 2.0, 0.25, 3.0)
        assert s.determinant() == race.determinant()


class TestEquilibrium:
    def test_worked_value(self, race):
        p = equilibrium(race, HostilityBound(1, 1))
        np.testing.assert_allclose(p, [3.2, 1.8], rtol=1e-15)

    def test_decoupled(self):
        np.testing.assert_allclose(equilibrium(ArmamentMatrix(1, 1, 0, 0), HostilityBound(1, 1)),
                                   [1, 1])

    def test_singular(self):
        with pytest.raises(ModelError):
            equilibrium(ArmamentMatrix(1, 1, 1, 1), HostilityBound(2, 3))

    @given(stable_matrices(), st.floats(0.01, 10), st.floats(0.01, 10))
    def test_residual(self, A, b1, b2):
        p = equilibrium(A, HostilityBound(b1, b2))
        res = A.as_array() @ p + np.array([b1, b2])
        scale = max(1.0, np.max(np.abs(A.as_array())) * np.max(np.abs(p)))
        assert np.max(np.abs(res)) <= 1e-14 * scale * 4


class TestCubic:
    def test_directional_matches_evaluate(self):
        c = CubicHostility(1, 0.5, -0.3, 0.2, 0.1, -1, 0.7, 0.4)
        v2 = -1 / 6
        # third derivative of s -> g(s, s v2) equals 6 * evaluate(1, v2)
        g, h = c.evaluate(1.0, v2)
        dg, dh = c.directional(v2)
        assert dg == pytest.approx(6 * g, rel=1e-14)
        assert dh == pytest.approx(6 * h, rel=1e-14)

    def test_swap_is_involution(self):
        c = CubicHostility(1, 2, 3, 4, 5, 6, 7, 8)
        assert c.swapped().swapped() == c

    def test_swap_exchanges_roles(self):
        c = CubicHostility(1, 2, 3, 4, 5, 6, 7, 8)
        g, h = c.evaluate(0.3, -0.7)
        gs, hs = c.swapped().evaluate(-0.7, 0.3)
        assert gs == pytest.approx(h)
        assert hs == pytest.approx(g)

    def test_zero(self):
        assert CubicHostility.zero().is_zero
        assert not CubicHostility(g12=1e-20).is_zero


class TestSignals:
    def test_constant_matrix_at_any_time(self, race):
        M = TimeVaryingMatrix.constant(race)
        np.testing.assert_array_equal(eval_matrix(M, 7.0), [[-2, 3], [0.25, -1]])

    def test_sinusoid_at_zero(self):
        k = CoefficientSignal.sinusoid(0.1, 0.05, 1.0)
        M = TimeVaryingMatrix(CoefficientSignal.constant(1), CoefficientSignal.constant(1), k,
                              CoefficientSignal.constant(0))
        assert eval_matrix(M, 0.0)[0, 1] == 0.1

    def test_table_midpoint(self):
        k = CoefficientSignal.table([0, 1], [0.1, 0.3])
        assert k(0.5) == pytest.approx(0.2, abs=1e-15)

    def test_table_rejects_outside(self):
        k = CoefficientSignal.table([0, 1], [0.1, 0.3])
        with pytest.raises(DomainError):
            k(1.5)
        with pytest.raises(DomainError):
            k(np.array([-0.1, 0.5]))

    def test_nonnegative_sinusoid_rejected(self):
        with pytest.raises(ModelError):
            CoefficientSignal.sinusoid(0.1, 0.2, 1.0, nonnegative=True)
        CoefficientSignal.sinusoid(0.2, 0.2, 1.0, nonnegative=True)

    def test_nonnegative_table_rejected(self):
        with pytest.raises(ModelError):
            CoefficientSignal.table([0, 1, 2], [0.1, -0.01, 0.3], nonnegative=True)

    def test_unsorted_table(self):
        with pytest.raises(ModelError):
            CoefficientSignal.table([0, 2, 1], [1, 1, 1])

    @pytest.mark.parametrize("sig", [
        CoefficientSignal.constant(0.4),
        CoefficientSignal.sinusoid(1, 0.3, 2.0, 0.5),
        CoefficientSignal.exp_decay(2.0, 0.3),
        CoefficientSignal.table([0, 1, 3], [0.1, 0.5, 0.2]),
    ])
    def test_roundtrip(self, sig):
        back = CoefficientSignal.from_dict(sig.to_dict())
        t = np.linspace(0, 3, 31)
        np.testing.assert_array_equal(back(t), sig(t))

    @pytest.mark.parametrize("sig", [
        CoefficientSignal.sinusoid(1, 0.3, 2.0, 0.5),
        CoefficientSignal.exp_decay(2.0, 0.3),
        CoefficientSignal.table([0, 1, 3], [0.1, 0.5, 0.2]),
    ])
    def test_continuity_under_refinement(self, sig):
        # jumps between neighbours shrink linearly with the grid spacing
        jumps = []
        for n in (100, 200, 400):
            t = np.linspace(0, 3, n + 1)
            jumps.append(np.max(np.abs(np.diff(sig(t)))))
        assert jumps[1] < 0.6 * jumps[0] and jumps[2] < 0.6 * jumps[1]

    def test_analytic_min(self):
        assert CoefficientSignal.sinusoid(1, -0.3, 2.0).analytic_min() == pytest.approx(0.7)
        assert CoefficientSignal.exp_decay(-2.0, 0.3).analytic_min() == -2.0
        assert CoefficientSignal.table([0, 1], [0.3, 0.1]).analytic_min() == 0.1

    def test_unknown_kind(self):
        with pytest.raises(ModelError):
            CoefficientSignal.from_dict({"kind": "polynomial"})
        with pytest.raises(ModelError):
            CoefficientSignal.from_dict({"kind": "sinusoid", "c": 1})


class TestMatrixFunctions:
    def test_constant_matrix_shape(self):
        M = ConstantMatrix(np.eye(3))
        assert M.dim == 3
        assert M(np.zeros(4)).shape == (4, 3, 3)

    def test_matrix_table(self):
        vals = np.array([np.eye(2), 3 * np.eye(2)])
        M = MatrixTable([0, 2], vals)
        np.testing.assert_allclose(eval_matrix(M, 1.0), 2 * np.eye(2))
        with pytest.raises(DomainError):
            M(2.5)

    def test_non_square(self):
        with pytest.raises(ModelError):
            ConstantMatrix(np.ones((2, 3)))

    def test_vectorized_signals(self, race):
        M = TimeVaryingMatrix(CoefficientSignal.constant(2), CoefficientSignal.constant(1),
                              CoefficientSignal.sinusoid(3, 1, 1), CoefficientSignal.constant(0.25))
        out = M(np.array([0.0, math.pi / 2]))
        assert out.shape == (2, 2, 2)
        assert out[1, 0, 1] == pytest.approx(4.0)


class TestHistory:
    def test_table_must_cover(self):
        with pytest.raises(ModelError):
            HistoryFunction.table(1.0, [-0.5, 0], [[1, 1], [1, 1]])

    def test_sinusoid_value_and_derivative(self):
        h = HistoryFunction.sinusoid(1.0, [0.0], [2.0], [3.0], [0.1])
        th = np.linspace(-1, 0, 7)
        np.testing.assert_allclose(h(th)[:, 0], 2 * np.sin(3 * th + 0.1))
        np.testing.assert_allclose(h.derivative(th)[:, 0], 6 * np.cos(3 * th + 0.1))

    def test_roundtrip(self):
        h = HistoryFunction.table(0.5, [-0.5, -0.2, 0], [[1, 2], [0, 1], [3, 3]])
        back = HistoryFunction.from_dict(0.5, h.to_dict())
        th = np.linspace(-0.5, 0, 11)
        np.testing.assert_array_equal(back(th), h(th))

    def test_scaled(self):
        h = HistoryFunction.constant(1.0, [1.0, -2.0])
        np.testing.assert_array_equal(h.scaled(-3)(0.0), [-3.0, 6.0])

    def test_bad_delay(self):
        with pytest.raises(ModelError):
            HistoryFunction.constant(0.0, [1.0])
