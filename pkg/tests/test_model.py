"""Subsystem decomposition, standing assumptions, forcing classes."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

import mflq
from mflq import signals as sig
from mflq.errors import (
    AssumptionViolatedError,
    CoefficientError,
    DimensionMismatchError,
)
from mflq.model import ForcingClass


def scalar_raw(gen, a=-1.0, a_bar=0.0, q=1.0, r=1.0, **extra):
    return mflq.RawCoefficients.from_blocks(
        gen, n=1, m=1,
        A=[[[a]]] * gen.m0, A_bar=[[[a_bar]]] * gen.m0,
        B=[[[1.0]]] * gen.m0, Q=[[[q]]] * gen.m0, R=[[[r]]] * gen.m0,
        **extra,
    )


@pytest.fixture
def gen1():
    return mflq.validate_generator([[0.0]])


class TestDecompose:
    def test_zero_bars_identity(self, gen1):
        raw = scalar_raw(gen1)
        model = mflq.decompose(raw, mflq.ForcingSignals.homogeneous(1, 1))
        # with zero barred blocks both subsystems carry the raw matrices
        assert np.array_equal(model.A1, raw.A)
        assert np.array_equal(model.A2, raw.A)
        assert np.array_equal(model.R1, model.R2)

    def test_sum_rule_scalar(self, gen1):
        raw = scalar_raw(gen1, a=1.0, a_bar=2.0)
        model = mflq.decompose(raw, mflq.ForcingSignals.homogeneous(1, 1))
        assert model.A1[0, 0, 0] == 1.0
        assert model.A2[0, 0, 0] == 3.0

    def test_signal_sum_rule(self, gen1):
        fs = mflq.ForcingSignals(
            n=2, m=1,
            b=sig.zero(2), sigma=sig.zero(2),
            q=sig.constant([1.0, 0.0]), q_bar=sig.constant([0.0, 2.0]),
            r=sig.zero(1), r_bar=sig.zero(1),
        )
        raw = mflq.RawCoefficients.from_blocks(
            gen1, n=2, m=1, A=[-np.eye(2)],
            B=[[[1.0], [0.0]]], Q=[np.eye(2)], R=[[[1.0]]],
        )
        model = mflq.decompose(raw, fs)
        assert_allclose(model.q1.eval(0.3), [1.0, 0.0])
        assert_allclose(model.q2.eval(0.3), [1.0, 2.0])
        # drift offset feeds only the mean subsystem
        assert model.b1.is_zero

    def test_symmetry_enforced(self, gen1):
        with pytest.raises(CoefficientError):
            mflq.RawCoefficients.from_blocks(
                gen1, n=2, m=1,
                A=[np.zeros((2, 2))], B=[np.zeros((2, 1))],
                Q=[[[1.0, 0.5], [0.0, 1.0]]], R=[[[1.0]]],
            )

    def test_shape_validation(self, gen1):
        with pytest.raises(DimensionMismatchError):
            mflq.RawCoefficients.from_blocks(
                gen1, n=2, m=1,
                A=[np.zeros((2, 3))], B=[np.zeros((2, 1))],
                Q=[np.eye(2)], R=[[[1.0]]],
            )


class TestPositiveDefiniteness:
    def test_identity_passes_with_margin_one(self, gen1):
        raw = mflq.RawCoefficients.from_blocks(
            gen1, n=2, m=2, A=[np.zeros((2, 2))], B=[np.eye(2)],
            Q=[np.eye(2)], R=[np.eye(2)],
        )
        model = mflq.decompose(raw, mflq.ForcingSignals.homogeneous(2, 2))
        report = mflq.check_positive_definiteness(model)
        assert report.passed
        assert_allclose(report.r_margins, 1.0)
        assert_allclose(report.schur_margins, 1.0)

    def test_boundary_case_fails(self, gen1):
        # scalar q = s = r = 1: the complement 1 - 1 = 0 is not positive
        raw = scalar_raw(gen1, S=[[[1.0]]])
        model = mflq.decompose(raw, mflq.ForcingSignals.homogeneous(1, 1))
        with pytest.raises(AssumptionViolatedError) as err:
            mflq.check_positive_definiteness(model)
        assert err.value.report is not None

    def test_zero_state_cost_fails(self, gen1):
        raw = scalar_raw(gen1, q=0.0)
        model = mflq.decompose(raw, mflq.ForcingSignals.homogeneous(1, 1))
        with pytest.raises(AssumptionViolatedError):
            mflq.check_positive_definiteness(model)

    def test_scaled_identity_family(self, gen1):
        for c in (1e-3, 1.0, 50.0):
            raw = mflq.RawCoefficients.from_blocks(
                gen1, n=3, m=2, A=[np.zeros((3, 3))], B=[np.zeros((3, 2))],
                Q=[c * np.eye(3)], R=[np.eye(2)],
            )
            model = mflq.decompose(raw, mflq.ForcingSignals.homogeneous(3, 2))
            assert mflq.check_positive_definiteness(model).passed


class TestClassifyForcing:
    def test_homogeneous(self):
        fs = mflq.ForcingSignals.homogeneous(2, 1)
        assert mflq.classify_forcing(fs) is ForcingClass.HOMOGENEOUS

    def test_exp_decay_is_integrable(self):
        fs = mflq.ForcingSignals(
            n=1, m=1, b=sig.exp_decay([1.0], 0.5), sigma=sig.zero(1),
            q=sig.zero(1), q_bar=sig.zero(1), r=sig.zero(1), r_bar=sig.zero(1),
        )
        assert mflq.classify_forcing(fs) is ForcingClass.INTEGRABLE

    def test_compact_piecewise_is_integrable(self):
        fs = mflq.ForcingSignals(
            n=1, m=1,
            b=sig.piecewise_constant([1.0, 2.0], [[1.0], [0.5], [0.0]]),
            sigma=sig.zero(1), q=sig.zero(1), q_bar=sig.zero(1),
            r=sig.zero(1), r_bar=sig.zero(1),
        )
        assert mflq.classify_forcing(fs) is ForcingClass.INTEGRABLE

    def test_sinusoid_is_local_integrable(self):
        fs = mflq.ForcingSignals(
            n=1, m=1, b=sig.zero(1), sigma=sig.zero(1),
            q=sig.sinusoid([1.0], 1.0), q_bar=sig.zero(1),
            r=sig.zero(1), r_bar=sig.zero(1),
        )
        assert mflq.classify_forcing(fs) is ForcingClass.LOCAL_INTEGRABLE

    def test_constant_is_local_integrable(self):
        fs = mflq.ForcingSignals(
            n=1, m=1, b=sig.constant([0.3]), sigma=sig.zero(1),
            q=sig.zero(1), q_bar=sig.zero(1), r=sig.zero(1), r_bar=sig.zero(1),
        )
        assert mflq.classify_forcing(fs) is ForcingClass.LOCAL_INTEGRABLE

    def test_integrable_signals_are_bounded_too(self):
        # square-integrable members of the family also satisfy the
        # bounded-signal conditions used by the locally-integrable class
        fs = mflq.ForcingSignals(
            n=1, m=1, b=sig.exp_decay([2.0], 1.0), sigma=sig.zero(1),
            q=sig.zero(1), q_bar=sig.zero(1), r=sig.zero(1), r_bar=sig.zero(1),
        )
        assert all(s.is_bounded for s in fs.all())


class TestXi:
    def test_homogeneous_is_zero(self):
        fs = mflq.ForcingSignals.homogeneous(3, 2)
        assert mflq.xi(fs, 0.0) == 0.0
        assert_allclose(mflq.xi(fs, np.linspace(0, 10, 5)), 0.0)

    def test_constant_norm(self):
        fs = mflq.ForcingSignals(
            n=2, m=1, b=sig.constant([3.0, 4.0]), sigma=sig.zero(2),
            q=sig.zero(2), q_bar=sig.zero(2), r=sig.zero(1), r_bar=sig.zero(1),
        )
        assert_allclose(mflq.xi(fs, 1.23), 25.0)

    def test_hand_evaluation(self):
        # |b(t)|^2 = exp(-2t), |q|^2 = 4 -> xi(t) = exp(-2t) + 4
        fs = mflq.ForcingSignals(
            n=2, m=1, b=sig.exp_decay([1.0, 0.0], 1.0), sigma=sig.zero(2),
            q=sig.constant([0.0, 2.0]), q_bar=sig.zero(2),
            r=sig.zero(1), r_bar=sig.zero(1),
        )
        for t in (0.0, 0.5, 2.0):
            assert_allclose(mflq.xi(fs, t), np.exp(-2.0 * t) + 4.0, rtol=1e-12)

    def test_regime_indexed_takes_max(self):
        fs = mflq.ForcingSignals(
            n=1, m=1,
            b=sig.per_regime([sig.constant([1.0]), sig.constant([3.0])]),
            sigma=sig.zero(1), q=sig.zero(1), q_bar=sig.zero(1),
            r=sig.zero(1), r_bar=sig.zero(1),
        )
        assert_allclose(mflq.xi(fs, 0.7, m0=2), 9.0)


class TestSignals:
    def test_piecewise_lookup(self):
        s = sig.piecewise_constant([1.0, 3.0], [[1.0], [2.0], [0.0]])
        assert_allclose(s.eval(0.5), [1.0])
        assert_allclose(s.eval(1.0), [2.0])
        assert_allclose(s.eval(2.9), [2.0])
        assert_allclose(s.eval(3.0), [0.0])
        assert s.is_square_integrable

    def test_exp_decay_requires_positive_rate(self):
        with pytest.raises(DimensionMismatchError):
            sig.exp_decay([1.0], 0.0)

    def test_sum_evaluates_pointwise(self):
        a = sig.constant([1.0])
        b = sig.sinusoid([2.0], 1.5, 0.3)
        both = a + b
        ts = np.linspace(0.0, 5.0, 11)
        assert_allclose(both.eval(ts), a.eval(ts) + b.eval(ts), rtol=1e-15)

    def test_sum_with_zero_is_identity(self):
        a = sig.sinusoid([2.0], 1.5)
        assert (a + sig.zero(1)).specs == a.specs

    def test_vectorised_eval_matches_scalar(self):
        s = sig.exp_decay([1.0, -2.0], 0.7)
        ts = np.array([0.0, 0.3, 1.7])
        batch = s.eval(ts)
        for k, t in enumerate(ts):
            assert_allclose(batch[k], s.eval(float(t)), rtol=1e-15)
