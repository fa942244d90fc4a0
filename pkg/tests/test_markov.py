"""Generator validation, coupling operator, and exact path sampling."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

import mflq
from mflq.errors import (
    DimensionMismatchError,
    NegativeOffDiagonalError,
    ReducibleChainError,
    RowSumViolationError,
)


class TestValidateGenerator:
    def test_single_regime(self):
        gen = mflq.validate_generator([[0.0]])
        assert gen.m0 == 1
        assert gen.rates[0, 0] == 0.0

    def test_two_regime_valid(self):
        gen = mflq.validate_generator([[-1.0, 1.0], [2.0, -2.0]])
        assert gen.m0 == 2
        assert_allclose(gen.rates.sum(axis=1), 0.0, atol=0.0)

    def test_row_sum_violation(self):
        with pytest.raises(RowSumViolationError):
            mflq.validate_generator([[-1.0, 0.5], [2.0, -2.0]])

    def test_negative_off_diagonal(self):
        with pytest.raises(NegativeOffDiagonalError):
            mflq.validate_generator([[1.0, -1.0], [2.0, -2.0]])

    def test_not_square(self):
        with pytest.raises(DimensionMismatchError):
            mflq.validate_generator([[0.0, 0.0]])

    def test_diagonal_recomputed_exactly(self):
        # row sums within 1e-12 of zero are repaired to exact zero
        eps = 5e-13
        gen = mflq.validate_generator([[-1.0 + eps, 1.0], [2.0, -2.0]])
        assert gen.rates[0, 0] == -1.0

    def test_zero_off_diagonal_warns(self):
        with pytest.warns(UserWarning):
            mflq.validate_generator([[-1.0, 1.0, 0.0],
                                     [1.0, -2.0, 1.0],
                                     [1.0, 1.0, -2.0]])


class TestLambdaOp:
    def test_single_regime_is_zero(self):
        gen = mflq.validate_generator([[0.0]])
        out = mflq.lambda_op(gen, [np.eye(3)], 0)
        assert_allclose(out, np.zeros((3, 3)), atol=0.0)

    def test_hand_example(self):
        # rates [[-1,1],[2,-2]] with P = (I, 2I): row 0 gives -I + 2I = I,
        # row 1 gives 2I - 4I = -2I.
        gen = mflq.validate_generator([[-1.0, 1.0], [2.0, -2.0]])
        P = np.stack([np.eye(2), 2.0 * np.eye(2)])
        assert_allclose(mflq.lambda_op(gen, P, 0), np.eye(2))
        assert_allclose(mflq.lambda_op(gen, P, 1), -2.0 * np.eye(2))

    def test_vanishes_on_regime_constant(self):
        gen = mflq.validate_generator([[-1.0, 1.0], [2.0, -2.0]])
        P = np.stack([np.eye(2) * 1.7] * 2)
        assert_allclose(mflq.lambda_op(gen, P, 0), 0.0, atol=1e-15)
        assert_allclose(mflq.lambda_op(gen, P, 1), 0.0, atol=1e-15)

    def test_linearity(self):
        gen = mflq.validate_generator([[-1.0, 1.0], [2.0, -2.0]])
        rng = np.random.default_rng(0)
        A = rng.standard_normal((2, 3, 3))
        A = (A + A.transpose(0, 2, 1)) / 2
        B = rng.standard_normal((2, 3, 3))
        B = (B + B.transpose(0, 2, 1)) / 2
        for i in range(2):
            lhs = mflq.lambda_op(gen, 2.0 * A + 3.0 * B, i)
            rhs = 2.0 * mflq.lambda_op(gen, A, i) + 3.0 * mflq.lambda_op(gen, B, i)
            assert_allclose(lhs, rhs, rtol=1e-12)

    def test_shape_mismatch(self):
        gen = mflq.validate_generator([[-1.0, 1.0], [2.0, -2.0]])
        with pytest.raises(DimensionMismatchError):
            mflq.lambda_op(gen, [np.eye(2)], 0)


class TestStationaryDistribution:
    def test_single_regime(self):
        gen = mflq.validate_generator([[0.0]])
        assert_allclose(mflq.stationary_distribution(gen), [1.0])

    def test_two_regime_hand_solve(self):
        # balance: pi0 * 1 = pi1 * 2 and pi0 + pi1 = 1 -> (2/3, 1/3)
        gen = mflq.validate_generator([[-1.0, 1.0], [2.0, -2.0]])
        assert_allclose(mflq.stationary_distribution(gen), [2 / 3, 1 / 3],
                        atol=1e-12)

    def test_symmetric(self):
        gen = mflq.validate_generator([[-1.0, 1.0], [1.0, -1.0]])
        assert_allclose(mflq.stationary_distribution(gen), [0.5, 0.5], atol=1e-12)

    def test_reducible(self):
        with pytest.warns(UserWarning):
            gen = mflq.validate_generator([[0.0, 0.0], [0.0, 0.0]])
        with pytest.raises(ReducibleChainError):
            mflq.stationary_distribution(gen)

    def test_balance_residual(self):
        gen = mflq.validate_generator([[-2.0, 1.5, 0.5],
                                       [0.3, -0.8, 0.5],
                                       [1.0, 2.0, -3.0]])
        pi = mflq.stationary_distribution(gen)
        assert pi.min() >= 0.0
        assert abs(pi.sum() - 1.0) < 1e-12
        assert np.max(np.abs(pi @ gen.rates)) <= 1e-10


class TestRegimePath:
    def test_single_regime_no_jumps(self):
        gen = mflq.validate_generator([[0.0]])
        path = mflq.sample_regime_path(gen, 0, 5.0, np.random.default_rng(1))
        assert path.n_jumps == 0
        assert path.regime_at(3.0) == 0

    def test_absorbing_state_stops(self):
        with pytest.warns(UserWarning):
            gen = mflq.validate_generator([[-1.0, 1.0], [0.0, 0.0]])
        path = mflq.sample_regime_path(gen, 0, 50.0, np.random.default_rng(2))
        # state 1 is absorbing: at most one jump ever
        assert path.n_jumps <= 1
        if path.n_jumps == 1:
            assert path.post_jump_regimes[0] == 1
            assert path.regime_at(50.0) == 1

    def test_right_continuity(self):
        gen = mflq.validate_generator([[-5.0, 5.0], [5.0, -5.0]])
        path = mflq.sample_regime_path(gen, 0, 10.0, np.random.default_rng(3))
        assert path.n_jumps > 0
        tau = path.jump_times[0]
        assert path.regime_at(tau) == path.post_jump_regimes[0]
        assert path.regime_at(tau - 1e-12) == 0

    def test_deterministic_given_seed(self):
        gen = mflq.validate_generator([[-1.0, 1.0], [2.0, -2.0]])
        a = mflq.sample_regime_path(gen, 0, 20.0, np.random.default_rng(42))
        b = mflq.sample_regime_path(gen, 0, 20.0, np.random.default_rng(42))
        assert np.array_equal(a.jump_times, b.jump_times)
        assert np.array_equal(a.post_jump_regimes, b.post_jump_regimes)

    def test_segments_partition(self):
        gen = mflq.validate_generator([[-2.0, 2.0], [3.0, -3.0]])
        path = mflq.sample_regime_path(gen, 1, 7.0, np.random.default_rng(4))
        segs = list(path.segments())
        assert segs[0][0] == 0.0
        assert segs[-1][1] == 7.0
        for (a0, a1, _), (b0, _, _) in zip(segs, segs[1:]):
            assert a1 == b0
        assert_allclose(path.occupation_times(2).sum(), 7.0, rtol=1e-12)


class TestChainStatistics:
    def test_holding_time_and_transition_rates(self, two_regime_chain_ensemble):
        gen, paths = two_regime_chain_ensemble
        # mean first holding time in regime 0 is 1/rate = 1.0
        first = np.array([
            p.jump_times[0] if p.n_jumps else p.horizon for p in paths
        ])
        se = first.std(ddof=1) / np.sqrt(first.size)
        assert abs(first.mean() - 1.0) <= 3.0 * se

        # empirical transition counts / occupation times converge to the rates
        counts = np.zeros((2, 2))
        occupation = np.zeros(2)
        for p in paths:
            occupation += p.occupation_times(2)
            regs = np.concatenate(([p.initial_regime], p.post_jump_regimes))
            np.add.at(counts, (regs[:-1], regs[1:]), 1)
        for i, j in ((0, 1), (1, 0)):
            rate_hat = counts[i, j] / occupation[i]
            se_rate = np.sqrt(counts[i, j]) / occupation[i]
            assert abs(rate_hat - gen.rates[i, j]) <= 3.0 * se_rate
