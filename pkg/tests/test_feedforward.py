"""Offset backward ODE and feedforward controls."""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import mflq
from mflq import signals as sig
from mflq.errors import GridMismatchError, ToleranceUnreachableError

SQRT2 = math.sqrt(2.0)
# stationary offset of the constant-drift scalar model:
# 0 = (a + b*theta_inf) * eta + P_inf * b_sig  with a + b*theta = -sqrt(2)
ETA_PLATEAU = (2.0 - SQRT2) / 4.0


def scalar_forced(b_value=0.5, sigma_sig=None, r_sig=None):
    gen = mflq.validate_generator([[0.0]])
    raw = mflq.RawCoefficients.from_blocks(
        gen, n=1, m=1, A=[[[-1.0]]], B=[[[1.0]]], Q=[[[1.0]]], R=[[[1.0]]],
    )
    fs = mflq.ForcingSignals(
        n=1, m=1,
        b=sig.constant([b_value]) if b_value else sig.zero(1),
        sigma=sigma_sig or sig.zero(1),
        q=sig.zero(1), q_bar=sig.zero(1),
        r=r_sig or sig.zero(1), r_bar=sig.zero(1),
    )
    return mflq.decompose(raw, fs), fs


class TestIntegrateEta:
    def test_homogeneous_exact_zeros(self, two_regime_scenario):
        scen, model = two_regime_scenario
        ric = mflq.integrate_riccati(model, 3.0, 0.01)
        ff = mflq.integrate_eta(model, ric, scen.signals)
        assert np.all(ff.eta2 == 0.0)
        assert np.all(ff.v1 == 0.0)
        assert np.all(ff.v2 == 0.0)

    def test_terminal_condition(self):
        model, fs = scalar_forced()
        ric = mflq.integrate_riccati(model, 5.0, 0.005)
        ff = mflq.integrate_eta(model, ric, fs)
        assert np.all(ff.eta2[-1] == 0.0)

    def test_plateau_matches_hand_solve(self):
        model, fs = scalar_forced()
        ric = mflq.integrate_riccati(model, 20.0, 0.002)
        ff = mflq.integrate_eta(model, ric, fs)
        assert abs(ff.eta2[0, 0, 0] - ETA_PLATEAU) < 1e-6
        # v2 = -(B' eta2) here (R = 1, D = 0)
        assert_allclose(ff.v2[0, 0, 0], -ff.eta2[0, 0, 0], rtol=1e-12)

    def test_linearity_in_forcing(self):
        model1, fs1 = scalar_forced(b_value=0.5)
        model3, fs3 = scalar_forced(b_value=1.5)
        ric = mflq.integrate_riccati(model1, 8.0, 0.005)
        ff1 = mflq.integrate_eta(model1, ric, fs1)
        ff3 = mflq.integrate_eta(model3, ric, fs3)
        assert_allclose(ff3.eta2, 3.0 * ff1.eta2, rtol=1e-12, atol=1e-16)
        assert_allclose(ff3.v2, 3.0 * ff1.v2, rtol=1e-12, atol=1e-16)

    def test_regime_coupled_source(self):
        # per-regime constant drift offsets couple through the chain:
        # deep in the interior eta solves the 2x2 linear stationary system
        gen = mflq.validate_generator([[-1.0, 1.0], [2.0, -2.0]])
        raw = mflq.RawCoefficients.from_blocks(
            gen, n=1, m=1, A=[[[-1.0]], [[-1.5]]], B=[[[1.0]], [[1.0]]],
            Q=[[[1.0]], [[1.0]]], R=[[[1.0]], [[1.0]]],
        )
        fs = mflq.ForcingSignals(
            n=1, m=1,
            b=sig.per_regime([sig.constant([0.5]), sig.constant([-0.3])]),
            sigma=sig.zero(1), q=sig.zero(1), q_bar=sig.zero(1),
            r=sig.zero(1), r_bar=sig.zero(1),
        )
        model = mflq.decompose(raw, fs)
        ric = mflq.integrate_riccati(model, 30.0, 0.005)
        ff = mflq.integrate_eta(model, ric, fs)
        # stationary system: 0 = Lambda eta + (a2 + b2 theta2) eta + P2 b
        th = ric.theta[0, 1, :, 0, 0]
        P2 = ric.P[0, 1, :, 0, 0]
        a_cl = np.array([-1.0 + th[0], -1.5 + th[1]])
        bvals = np.array([0.5, -0.3])
        M = gen.rates + np.diag(a_cl)
        eta_expected = np.linalg.solve(M, -P2 * bvals)
        assert_allclose(ff.eta2[0, :, 0], eta_expected, atol=1e-6)


class TestFeedforwardControls:
    def test_sigma_only_enters_v1_via_d(self):
        # with D = 0 the deviation channel ignores the diffusion offset
        model, fs = scalar_forced(b_value=0.0, sigma_sig=sig.constant([1.0]))
        ric = mflq.integrate_riccati(model, 10.0, 0.005)
        ff = mflq.integrate_eta(model, ric, fs)
        assert np.all(ff.v1 == 0.0)

    def test_v1_with_d_nonzero(self):
        # scalar with D = 1: v1 = -(1 + P1)^{-1} P1 sigma at the plateau
        gen = mflq.validate_generator([[0.0]])
        raw = mflq.RawCoefficients.from_blocks(
            gen, n=1, m=1, A=[[[-1.0]]], B=[[[1.0]]], D=[[[1.0]]],
            Q=[[[1.0]]], R=[[[1.0]]],
        )
        fs = mflq.ForcingSignals(
            n=1, m=1, b=sig.zero(1), sigma=sig.constant([1.0]),
            q=sig.zero(1), q_bar=sig.zero(1), r=sig.zero(1), r_bar=sig.zero(1),
        )
        model = mflq.decompose(raw, fs)
        ric = mflq.integrate_riccati(model, 25.0, 0.002)
        ff = mflq.integrate_eta(model, ric, fs)
        P1 = ric.P[0, 0, 0, 0, 0]
        assert_allclose(ff.v1[0, 0, 0], -P1 / (1.0 + P1), rtol=1e-9)

    def test_grid_mismatch(self):
        model, fs = scalar_forced()
        ric = mflq.integrate_riccati(model, 5.0, 0.01)
        bad_eta = np.zeros((3, 1, 1))
        with pytest.raises(GridMismatchError):
            mflq.feedforward_controls(model, ric, bad_eta, fs)


class TestStationaryFeedforward:
    def test_homogeneous_zeros(self, two_regime_scenario, two_regime_stationary):
        scen, model = two_regime_scenario
        sff = mflq.stationary_feedforward(
            model, two_regime_stationary, scen.signals, np.arange(0, 2.01, 0.01))
        assert np.all(sff.eta2 == 0.0)
        assert np.all(sff.v1 == 0.0)
        assert np.all(sff.v2 == 0.0)

    def test_constant_b_plateau_uniform(self, constant_b_scenario):
        scen, model = constant_b_scenario
        stat = mflq.solve_are(model)
        grid = np.arange(0.0, 5.0001, 0.01)
        sff = mflq.stationary_feedforward(model, stat, scen.signals, grid)
        assert np.max(np.abs(sff.eta2 - ETA_PLATEAU)) < 1e-7

    def test_doubling_pad_changes_little(self, constant_b_scenario):
        scen, model = constant_b_scenario
        stat = mflq.solve_are(model)
        grid = np.arange(0.0, 3.0001, 0.01)
        tol = 1e-8
        a = mflq.stationary_feedforward(model, stat, scen.signals, grid, tol=tol)
        b = mflq.stationary_feedforward(model, stat, scen.signals, grid, tol=tol,
                                        extra_pad=a.pad_used)
        assert np.max(np.abs(a.eta2 - b.eta2)) < tol

    def test_pad_budget(self, constant_b_scenario):
        scen, model = constant_b_scenario
        stat = mflq.solve_are(model)
        with pytest.raises(ToleranceUnreachableError):
            mflq.stationary_feedforward(model, stat, scen.signals,
                                        np.arange(0.0, 1.01, 0.01),
                                        tol=1e-8, max_pad=1.0)

    def test_forgetting_between_horizons(self, constant_b_scenario):
        # two finite-horizon offset tables agree deep in the interior and
        # their disagreement decays exponentially toward it
        scen, model = constant_b_scenario
        ric_short = mflq.integrate_riccati(model, 10.0, 0.005)
        ric_long = mflq.integrate_riccati(model, 16.0, 0.005)
        ff_s = mflq.integrate_eta(model, ric_short, scen.signals)
        ff_l = mflq.integrate_eta(model, ric_long, scen.signals)
        gaps = []
        ts = np.arange(0.0, 6.1, 1.0)
        for t in ts:
            js = round(t / 0.005)
            gaps.append(abs(ff_s.eta2[js, 0, 0] - ff_l.eta2[js, 0, 0]))
        gaps = np.array(gaps)
        # the disagreement grows toward the shorter terminal time, i.e.
        # decays in the distance to it
        assert np.all(gaps[1:] > gaps[:-1])
        from mflq.fitting import log_linear_fit
        _, slope, r2 = log_linear_fit(ts, np.maximum(gaps, 1e-300))
        stat = mflq.solve_are(model)
        assert slope >= stat.certificate.delta_star / 8.0
        assert r2 >= 0.95
