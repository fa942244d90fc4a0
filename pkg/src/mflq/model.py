"""Model data: raw mean-field coefficients and their subsystem split.

The controlled dynamics and cost carry per-regime coefficient pairs
``(G, G_bar)``; splitting the state and control into the regime-
conditional mean (subsystem 2) and the orthogonal deviation
(subsystem 1) turns the mean-field problem into two coupled standard
subsystems with coefficients ``G_1 = G`` and ``G_2 = G + G_bar``.
Forcing enters asymmetrically: the drift offset ``b`` feeds only the
mean subsystem, the diffusion offset ``sigma`` is shared, and the
linear cost weights follow the same ``G_1/G_2`` rule.

Forcing is restricted to deterministic functions of time and regime,
the scope in which the feedforward equations reduce to regime-coupled
ODEs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import signals as sig
from .errors import (
    AssumptionViolatedError,
    CoefficientError,
    DimensionMismatchError,
    UnclassifiableSignalError,
)
from .markov import GeneratorMatrix

SYMMETRY_TOL = 1e-12
PD_MARGIN = 1e-10

_MATRIX_FAMILIES = {
    "A": ("n", "n"), "A_bar": ("n", "n"),
    "C": ("n", "n"), "C_bar": ("n", "n"),
    "B": ("n", "m"), "B_bar": ("n", "m"),
    "D": ("n", "m"), "D_bar": ("n", "m"),
    "Q": ("n", "n"), "Q_bar": ("n", "n"),
    "S": ("m", "n"), "S_bar": ("m", "n"),
    "R": ("m", "m"), "R_bar": ("m", "m"),
}
_SYMMETRIC_FAMILIES = ("Q", "Q_bar", "R", "R_bar")


def _coerce(name, value, m0, rows, cols):
    a = np.ascontiguousarray(value, dtype=float)
    if a.shape != (m0, rows, cols):
        raise DimensionMismatchError(
            f"block {name!r} must have shape ({m0}, {rows}, {cols}), got {a.shape}"
        )
    if not np.all(np.isfinite(a)):
        raise CoefficientError(f"block {name!r} contains non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RawCoefficients:
    """Per-regime coefficient blocks of the dynamics and cost."""

    n: int
    m: int
    m0: int
    generator: GeneratorMatrix
    A: np.ndarray
    A_bar: np.ndarray
    B: np.ndarray
    B_bar: np.ndarray
    C: np.ndarray
    C_bar: np.ndarray
    D: np.ndarray
    D_bar: np.ndarray
    Q: np.ndarray
    Q_bar: np.ndarray
    S: np.ndarray
    S_bar: np.ndarray
    R: np.ndarray
    R_bar: np.ndarray

    def __post_init__(self):
        if self.generator.m0 != self.m0:
            raise DimensionMismatchError("generator regime count does not match m0")
        dims = {"n": self.n, "m": self.m}
        for name, (r, c) in _MATRIX_FAMILIES.items():
            a = _coerce(name, getattr(self, name), self.m0, dims[r], dims[c])
            object.__setattr__(self, name, a)
        for name in _SYMMETRIC_FAMILIES:
            a = getattr(self, name)
            gap = np.max(np.abs(a - np.swapaxes(a, -1, -2)))
            if gap > SYMMETRY_TOL:
                raise CoefficientError(
                    f"block {name!r} is not symmetric (max asymmetry {gap:.3e})"
                )

    @classmethod
    def from_blocks(cls, generator: GeneratorMatrix, n: int, m: int, **blocks):
        """Build from per-regime nested lists, filling omitted blocks with zeros."""
        m0 = generator.m0
        dims = {"n": n, "m": m}
        data = {}
        for name, (r, c) in _MATRIX_FAMILIES.items():
            if name in blocks and blocks[name] is not None:
                data[name] = np.asarray(blocks[name], dtype=float)
            else:
                data[name] = np.zeros((m0, dims[r], dims[c]))
        unknown = set(blocks) - set(_MATRIX_FAMILIES)
        if unknown:
            raise DimensionMismatchError(f"unknown coefficient blocks: {sorted(unknown)}")
        return cls(n=n, m=m, m0=m0, generator=generator, **data)


@dataclass(frozen=True)
class ForcingSignals:
    """Deterministic forcing: drift/diffusion offsets and linear cost weights."""

    n: int
    m: int
    b: sig.Signal
    sigma: sig.Signal
    q: sig.Signal
    q_bar: sig.Signal
    r: sig.Signal
    r_bar: sig.Signal

    def __post_init__(self):
        for name, want in (("b", self.n), ("sigma", self.n), ("q", self.n),
                           ("q_bar", self.n), ("r", self.m), ("r_bar", self.m)):
            s = getattr(self, name)
            if s.dim != want:
                raise DimensionMismatchError(
                    f"signal {name!r} has dimension {s.dim}, expected {want}"
                )

    @classmethod
    def homogeneous(cls, n: int, m: int) -> "ForcingSignals":
        return cls(n=n, m=m, b=sig.zero(n), sigma=sig.zero(n), q=sig.zero(n),
                   q_bar=sig.zero(n), r=sig.zero(m), r_bar=sig.zero(m))

    def validate_regimes(self, m0: int):
        for name in ("b", "sigma", "q", "q_bar", "r", "r_bar"):
            k = getattr(self, name).regime_count
            if k not in (1, m0):
                raise DimensionMismatchError(
                    f"signal {name!r} is indexed by {k} regimes, expected 1 or {m0}"
                )

    def all(self):
        return (self.b, self.sigma, self.q, self.q_bar, self.r, self.r_bar)

    @property
    def is_homogeneous(self) -> bool:
        return all(s.is_zero for s in self.all())


class ForcingClass(enum.Enum):
    HOMOGENEOUS = "homogeneous"
    INTEGRABLE = "integrable"
    LOCAL_INTEGRABLE = "local_integrable"


@dataclass(frozen=True)
class DecomposedModel:
    """Coefficients of the two coupled subsystems after the mean split.

    Index ``k=1`` (deviation) carries the plain blocks, ``k=2`` (mean)
    the summed blocks; the drift offset lives entirely in subsystem 2
    and the diffusion offset is shared.
    """

    n: int
    m: int
    m0: int
    generator: GeneratorMatrix
    A1: np.ndarray
    A2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    b1: sig.Signal
    b2: sig.Signal
    sigma: sig.Signal
    q1: sig.Signal
    q2: sig.Signal
    r1: sig.Signal
    r2: sig.Signal

    def stacked(self):
        """Blocks stacked over the subsystem axis: shape (2, m0, ., .)."""
        return {
            "A": np.stack([self.A1, self.A2]),
            "B": np.stack([self.B1, self.B2]),
            "C": np.stack([self.C1, self.C2]),
            "D": np.stack([self.D1, self.D2]),
            "Q": np.stack([self.Q1, self.Q2]),
            "S": np.stack([self.S1, self.S2]),
            "R": np.stack([self.R1, self.R2]),
        }


def decompose_signals(signals: ForcingSignals):
    """Forcing split across subsystems: returns (b1, b2, sigma, q1, q2, r1, r2)."""
    n, m = signals.n, signals.m
    return (
        sig.zero(n),
        signals.b,
        signals.sigma,
        signals.q,
        signals.q + signals.q_bar,
        signals.r,
        signals.r + signals.r_bar,
    )


def decompose(raw: RawCoefficients, signals: ForcingSignals) -> DecomposedModel:
    """Apply the subsystem split to all coefficient families and forcing."""
    if signals.n != raw.n or signals.m != raw.m:
        raise DimensionMismatchError("signal dimensions do not match the coefficients")
    signals.validate_regimes(raw.m0)
    b1, b2, sigma, q1, q2, r1, r2 = decompose_signals(signals)
    return DecomposedModel(
        n=raw.n, m=raw.m, m0=raw.m0, generator=raw.generator,
        A1=raw.A, A2=raw.A + raw.A_bar,
        B1=raw.B, B2=raw.B + raw.B_bar,
        C1=raw.C, C2=raw.C + raw.C_bar,
        D1=raw.D, D2=raw.D + raw.D_bar,
        Q1=raw.Q, Q2=raw.Q + raw.Q_bar,
        S1=raw.S, S2=raw.S + raw.S_bar,
        R1=raw.R, R2=raw.R + raw.R_bar,
        b1=b1, b2=b2, sigma=sigma, q1=q1, q2=q2, r1=r1, r2=r2,
    )


@dataclass(frozen=True)
class AssumptionReport:
    """Positive-definiteness margins per (regime, subsystem).

    ``r_margins[k, i]`` is the smallest eigenvalue of ``R_k(i)`` and
    ``schur_margins[k, i]`` that of ``Q_k(i) - S_k(i)' R_k(i)^-1 S_k(i)``.
    """

    r_margins: np.ndarray
    schur_margins: np.ndarray
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(
            np.all(self.r_margins > self.threshold)
            and np.all(self.schur_margins > self.threshold)
        )

    def to_dict(self):
        return {
            "threshold": self.threshold,
            "passed": self.passed,
            "r_margins": self.r_margins.tolist(),
            "schur_margins": self.schur_margins.tolist(),
        }


def check_positive_definiteness(model: DecomposedModel) -> AssumptionReport:
    """Verify the standing cost-coercivity condition for both subsystems.

    For every regime ``i`` and ``k = 1, 2`` this requires ``R_k(i)`` and
    the Schur-type complement ``Q_k(i) - S_k(i)' R_k(i)^-1 S_k(i)`` to be
    positive definite with eigenvalue margin above ``1e-10``.

    Returns the margin report on success; raises
    :class:`AssumptionViolatedError` carrying the report otherwise.
    """
    Rk = np.stack([model.R1, model.R2])
    Qk = np.stack([model.Q1, model.Q2])
    Sk = np.stack([model.S1, model.S2])
    r_margins = np.linalg.eigvalsh(Rk)[..., 0]
    schur = Qk - np.swapaxes(Sk, -1, -2) @ np.linalg.solve(Rk, Sk)
    schur = (schur + np.swapaxes(schur, -1, -2)) / 2.0
    schur_margins = np.linalg.eigvalsh(schur)[..., 0]
    report = AssumptionReport(
        r_margins=r_margins, schur_margins=schur_margins, threshold=PD_MARGIN
    )
    if not report.passed:
        bad = np.argwhere(
            (r_margins <= PD_MARGIN) | (schur_margins <= PD_MARGIN)
        )[0]
        k, i = int(bad[0]), int(bad[1])
        margin = min(r_margins[k, i], schur_margins[k, i])
        raise AssumptionViolatedError(
            f"positive definiteness fails at regime {i}, subsystem k={k + 1} "
            f"(margin {margin:.3e})",
            report=report,
        )
    return report


def classify_forcing(signals: ForcingSignals) -> ForcingClass:
    """Classify forcing by integrability.

    All signals zero gives the homogeneous class; every nonzero signal
    square-integrable on ``[0, inf)`` gives the integrable class; all
    signals bounded gives the locally integrable class (bounded signals
    satisfy both the exponential-convolution condition and bounded time
    averages).  Anything else is rejected as out of scope.
    """
    sigs = signals.all()
    if all(s.is_zero for s in sigs):
        return ForcingClass.HOMOGENEOUS
    if all(s.is_square_integrable for s in sigs):
        return ForcingClass.INTEGRABLE
    if all(s.is_bounded for s in sigs):
        return ForcingClass.LOCAL_INTEGRABLE
    raise UnclassifiableSignalError(
        "forcing is neither square-integrable nor bounded; out of implemented scope"
    )


def xi(signals: ForcingSignals, t, m0: int = 1):
    """Aggregate squared forcing size at time(s) ``t``.

    Sum of squared norms of the six raw signals; regime-indexed signals
    contribute their maximum over regimes (a conservative upper bound).
    Accepts scalar or 1-D array ``t``.
    """
    t = np.asarray(t, dtype=float)
    total = np.zeros(t.shape)
    for s in signals.all():
        if s.regime_count == 1:
            total = total + s.squared_norm(t, 0)
        else:
            per = np.stack([s.squared_norm(t, i) for i in range(s.regime_count)])
            total = total + per.max(axis=0)
    return float(total) if total.ndim == 0 else total
