"""Coupled Lyapunov certificates and the certified decay rate."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

import mflq
from mflq.stability import Infeasible, LyapunovCertificate, dissipation_residual


def scalar_model(a, gen=None):
    gen = gen or mflq.validate_generator([[0.0]])
    raw = mflq.RawCoefficients.from_blocks(
        gen, n=1, m=1, A=[[[a]]] * gen.m0, Q=[[[1.0]]] * gen.m0,
        R=[[[1.0]]] * gen.m0,
    )
    return mflq.decompose(raw, mflq.ForcingSignals.homogeneous(1, 1))


ZERO_GAIN = np.zeros((1, 1, 1))


class TestSolveCoupledLyapunov:
    def test_stable_scalar_hand_solve(self):
        # 2 * (-1) * sigma = -1  ->  sigma = 0.5 (both subsystems)
        model = scalar_model(-1.0)
        cert = mflq.solve_coupled_lyapunov(model, ZERO_GAIN, ZERO_GAIN)
        assert isinstance(cert, LyapunovCertificate)
        assert_allclose(cert.sigma1[0, 0, 0], 0.5, rtol=1e-12)
        assert_allclose(cert.sigma2[0, 0, 0], 0.5, rtol=1e-12)
        assert_allclose(cert.delta_star, 2.0, rtol=1e-12)

    def test_unstable_scalar_infeasible(self):
        model = scalar_model(1.0)
        result = mflq.solve_coupled_lyapunov(model, ZERO_GAIN, ZERO_GAIN)
        assert isinstance(result, Infeasible)

    def test_regime_constant_closed_loop(self):
        # theta makes A + B theta = -I in both regimes; the coupling
        # vanishes on regime-constant families, so sigma = 0.5 I.
        gen = mflq.validate_generator([[-1.0, 1.0], [2.0, -2.0]])
        raw = mflq.RawCoefficients.from_blocks(
            gen, n=2, m=2,
            A=[np.zeros((2, 2))] * 2, B=[np.eye(2)] * 2,
            Q=[np.eye(2)] * 2, R=[np.eye(2)] * 2,
        )
        model = mflq.decompose(raw, mflq.ForcingSignals.homogeneous(2, 2))
        theta = np.stack([-np.eye(2)] * 2)
        cert = mflq.solve_coupled_lyapunov(model, theta, theta)
        assert isinstance(cert, LyapunovCertificate)
        for i in range(2):
            assert_allclose(cert.sigma1[i], 0.5 * np.eye(2), atol=1e-12)
            assert_allclose(cert.sigma2[i], 0.5 * np.eye(2), atol=1e-12)

    def test_scaling_invariance(self):
        model = scalar_model(-1.0)
        base = mflq.solve_coupled_lyapunov(model, ZERO_GAIN, ZERO_GAIN)
        scaled = mflq.solve_coupled_lyapunov(model, ZERO_GAIN, ZERO_GAIN,
                                             rhs_scale=3.0)
        assert_allclose(scaled.sigma1, 3.0 * base.sigma1, rtol=1e-12)
        assert_allclose(scaled.sigma2, 3.0 * base.sigma2, rtol=1e-12)
        assert_allclose(scaled.delta_star, base.delta_star, rtol=1e-12)

    def test_residual_negative_semidefinite(self, two_regime_scenario):
        _, model = two_regime_scenario
        zeros = np.zeros((2, 2, 2))
        cert = mflq.solve_coupled_lyapunov(model, zeros, zeros)
        assert isinstance(cert, LyapunovCertificate)
        res = dissipation_residual(model, zeros, zeros, cert)
        assert res.max() <= 1e-8


class TestDecayRate:
    def test_hand_values(self):
        cert = LyapunovCertificate(
            sigma1=np.array([[[0.5]]]), sigma2=np.array([[[0.5]]]),
            delta_star=2.0,
        )
        assert_allclose(mflq.decay_rate(cert), 2.0)

    def test_scaled_identity(self):
        cert = LyapunovCertificate(
            sigma1=np.stack([0.25 * np.eye(2)] * 3),
            sigma2=np.stack([0.25 * np.eye(2)] * 3),
            delta_star=4.0,
        )
        assert_allclose(mflq.decay_rate(cert), 4.0)

    def test_max_rule_over_regimes(self):
        cert = LyapunovCertificate(
            sigma1=np.array([[[0.5]], [[2.0]]]),
            sigma2=np.array([[[0.5]], [[0.5]]]),
            delta_star=0.5,
        )
        assert_allclose(mflq.decay_rate(cert), 0.5)


class TestCheckStabilizer:
    def test_stable_true(self):
        ok, cert = mflq.check_stabilizer(scalar_model(-1.0), ZERO_GAIN, ZERO_GAIN)
        assert ok and cert is not None

    def test_unstable_false(self):
        ok, cert = mflq.check_stabilizer(scalar_model(1.0), ZERO_GAIN, ZERO_GAIN)
        assert not ok and cert is None

    def test_hurwitz_single_regime(self):
        gen = mflq.validate_generator([[0.0]])
        raw = mflq.RawCoefficients.from_blocks(
            gen, n=2, m=1,
            A=[[[-1.0, 0.4], [0.0, -0.7]]], B=[[[1.0], [0.0]]],
            Q=[np.eye(2)], R=[[[1.0]]],
        )
        model = mflq.decompose(raw, mflq.ForcingSignals.homogeneous(2, 1))
        ok, _ = mflq.check_stabilizer(model, np.zeros((1, 1, 2)),
                                      np.zeros((1, 1, 2)))
        assert ok

    def test_stationary_gains_certified(self, two_regime_scenario,
                                        two_regime_stationary):
        # the stationary solver attaches exactly this certificate
        _, model = two_regime_scenario
        stat = two_regime_stationary
        ok, cert = mflq.check_stabilizer(
            model, stat.theta_inf[0], stat.theta_inf[1])
        assert ok
        assert_allclose(cert.delta_star, stat.certificate.delta_star, rtol=1e-12)
