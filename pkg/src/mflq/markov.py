"""Continuous-time Markov chains driving the regime process.

A chain on ``{0, ..., m0-1}`` is specified by its generator: off-diagonal
entries are nonnegative jump rates and every row sums to zero.  Regime
paths are sampled exactly with exponential holding clocks (no
discretisation); the regime-coupling operator maps a family of
per-regime matrices ``{P(j)}`` to ``sum_j rates[i, j] P(j)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    NegativeOffDiagonalError,
    ReducibleChainError,
    RowSumViolationError,
)

ROW_SUM_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GeneratorMatrix:
    """Validated generator of a finite-state Markov chain.

    Attributes
    ----------
    m0 : int
        Number of regimes.
    rates : ndarray, shape (m0, m0)
        Jump rates; ``rates[i, j] >= 0`` for ``i != j`` and each diagonal
        entry equals minus its off-diagonal row sum exactly.
    """

    m0: int
    rates: np.ndarray

    def holding_rate(self, i: int) -> float:
        """Rate of leaving regime ``i`` (zero for absorbing regimes)."""
        return -float(self.rates[i, i])


def validate_generator(raw) -> GeneratorMatrix:
    """Validate a raw rate matrix and return a :class:`GeneratorMatrix`.

    The diagonal is recomputed as the negative off-diagonal row sum, so
    rows of the returned generator sum to zero exactly.  A zero
    off-diagonal rate is legal (it makes states unreachable or
    absorbing) but triggers a warning because the shipped scenarios
    assume strictly positive rates.

    Raises
    ------
    NegativeOffDiagonalError
        If some off-diagonal entry is negative.
    RowSumViolationError
        If some row sum exceeds ``1e-12`` in absolute value.
    DimensionMismatchError
        If the input is not a square matrix.
    """
    rates = np.asarray(raw, dtype=float)
    if rates.ndim != 2 or rates.shape[0] != rates.shape[1] or rates.shape[0] < 1:
        raise DimensionMismatchError(
            f"generator must be a square matrix, got shape {rates.shape}"
        )
    if not np.all(np.isfinite(rates)):
        raise DimensionMismatchError("generator contains non-finite entries")
    m0 = rates.shape[0]
    off = rates.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0.0):
        i, j = np.argwhere(off < 0.0)[0]
        raise NegativeOffDiagonalError(
            f"rate[{i},{j}] = {rates[i, j]:g} is negative"
        )
    row_sums = rates.sum(axis=1)
    bad = np.abs(row_sums) > ROW_SUM_TOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RowSumViolationError(
            f"row {i} sums to {row_sums[i]:.3e}, beyond tolerance {ROW_SUM_TOL:g}"
        )
    if m0 > 1 and np.any(off[~np.eye(m0, dtype=bool)] == 0.0):
        warnings.warn(
            "generator has a zero off-diagonal rate; shipped scenarios "
            "assume strictly positive rates",
            stacklevel=2,
        )
    exact = off.copy()
    np.fill_diagonal(exact, -off.sum(axis=1))
    return GeneratorMatrix(m0=m0, rates=_frozen(exact))


def lambda_op(gen: GeneratorMatrix, P, i: int) -> np.ndarray:
    """Regime-coupling operator: ``sum_j rates[i, j] P(j)``.

    ``P`` is a regime-indexed family of symmetric same-shape matrices
    (any sequence convertible to an ``(m0, n, n)`` array).  The result
    is symmetric whenever every ``P(j)`` is.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 3 or P.shape[0] != gen.m0 or P.shape[1] != P.shape[2]:
        raise DimensionMismatchError(
            f"expected {gen.m0} square matrices, got shape {P.shape}"
        )
    return np.tensordot(gen.rates[i], P, axes=(0, 0))


def lambda_op_stack(gen: GeneratorMatrix, P: np.ndarray) -> np.ndarray:
    """Apply the coupling operator at every regime at once.

    ``P`` has shape ``(..., m0, n, n)`` with the regime axis third from
    the end; the output has the same shape.
    """
    return np.einsum("ij,...jab->...iab", gen.rates, P)


@dataclass(frozen=True)
class RegimePath:
    """One exact realisation of the chain on ``[0, horizon]``.

    The regime as a function of time is right-continuous and piecewise
    constant: it equals ``initial_regime`` on ``[0, jump_times[0])`` and
    ``post_jump_regimes[l]`` on ``[jump_times[l], jump_times[l+1])``.
    """

    initial_regime: int
    jump_times: np.ndarray
    post_jump_regimes: np.ndarray
    horizon: float
    _all_regimes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        jt = _frozen(self.jump_times).reshape(-1)
        pr = np.ascontiguousarray(self.post_jump_regimes, dtype=np.int64).reshape(-1)
        pr.setflags(write=False)
        if jt.shape != pr.shape:
            raise DimensionMismatchError("jump_times and post_jump_regimes differ in length")
        if jt.size:
            if jt[0] <= 0.0 or jt[-1] > self.horizon or np.any(np.diff(jt) <= 0.0):
                raise DimensionMismatchError(
                    "jump times must be strictly increasing within (0, horizon]"
                )
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "post_jump_regimes", pr)
        allr = np.concatenate(([self.initial_regime], pr)).astype(np.int64)
        if np.any(allr[1:] == allr[:-1]):
            raise DimensionMismatchError("a jump must change the regime")
        allr.setflags(write=False)
        object.__setattr__(self, "_all_regimes", allr)

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    def regime_at(self, t) -> np.ndarray | int:
        """Regime in force at time ``t`` (right-continuous); vectorised."""
        idx = np.searchsorted(self.jump_times, t, side="right")
        out = self._all_regimes[idx]
        return out

    def segments(self):
        """Yield ``(t0, t1, regime)`` triples partitioning ``[0, horizon)``."""
        edges = np.concatenate(([0.0], self.jump_times, [self.horizon]))
        for l in range(len(edges) - 1):
            if edges[l + 1] > edges[l]:
                yield float(edges[l]), float(edges[l + 1]), int(self._all_regimes[l])

    def occupation_times(self, m0: int) -> np.ndarray:
        """Total time spent in each regime over ``[0, horizon]``."""
        occ = np.zeros(m0)
        for t0, t1, r in self.segments():
            occ[r] += t1 - t0
        return occ

    def to_csv_rows(self):
        """Rows ``(t_jump, new_regime)`` for serialisation."""
        return [(float(t), int(r)) for t, r in zip(self.jump_times, self.post_jump_regimes)]


def jump_distributions(gen: GeneratorMatrix):
    """Per-regime cumulative off-diagonal rate rows, for repeated sampling."""
    off = np.where(np.eye(gen.m0, dtype=bool), 0.0, gen.rates)
    return np.cumsum(off, axis=1)


def sample_jump_arrays(
    gen: GeneratorMatrix, i0: int, T: float, stream: np.random.Generator,
    cum: np.ndarray | None = None,
):
    """Raw jump times and post-jump regimes of one exact path.

    The draw sequence (alternating exponential holding times and uniform
    regime choices) is what :func:`sample_regime_path` consumes; bulk
    samplers use this to skip per-path object construction.
    """
    rates = gen.rates
    m0 = gen.m0
    if cum is None:
        cum = jump_distributions(gen)
    jump_times = []
    post = []
    t = 0.0
    i = int(i0)
    exponential = stream.exponential
    uniform = stream.random
    while True:
        rate = -rates[i, i]
        if rate <= 0.0:
            break
        t += exponential(1.0 / rate)
        if t > T:
            break
        u = uniform() * rate
        i = int(np.searchsorted(cum[i], u, side="right"))
        if i >= m0:  # guard against u landing exactly on the total rate
            i = m0 - 1
        jump_times.append(t)
        post.append(i)
    return (
        np.asarray(jump_times, dtype=float),
        np.asarray(post, dtype=np.int64),
    )


def sample_regime_path(
    gen: GeneratorMatrix, i0: int, T: float, stream: np.random.Generator
) -> RegimePath:
    """Sample one exact chain path started at ``i0`` over ``[0, T]``.

    Holding times are exponential with the current regime's leaving
    rate; the next regime is drawn proportionally to the off-diagonal
    rates.  Absorbing regimes (zero leaving rate) end the jump sequence.
    The result is a pure function of ``(gen, i0, T, stream state)``.
    """
    if T <= 0.0:
        raise DimensionMismatchError("horizon must be positive")
    jump_times, post = sample_jump_arrays(gen, i0, T, stream)
    return RegimePath(
        initial_regime=int(i0),
        jump_times=jump_times,
        post_jump_regimes=post,
        horizon=float(T),
    )


def stationary_distribution(gen: GeneratorMatrix) -> np.ndarray:
    """Stationary distribution ``pi`` with ``pi @ rates = 0``, ``sum(pi) = 1``.

    Raises :class:`ReducibleChainError` when the balance equations do
    not determine a unique distribution.
    """
    m0 = gen.m0
    if m0 == 1:
        return np.array([1.0])
    if np.linalg.matrix_rank(gen.rates.T, tol=1e-12) != m0 - 1:
        raise ReducibleChainError("generator admits no unique stationary distribution")
    A = np.vstack([gen.rates.T, np.ones((1, m0))])
    b = np.zeros(m0 + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    residual = np.max(np.abs(pi @ gen.rates))
    if residual > 1e-10:
        raise ReducibleChainError(f"balance residual {residual:.3e} exceeds 1e-10")
    return pi
