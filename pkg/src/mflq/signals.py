"""Deterministic forcing signals, time- and optionally regime-indexed.

The supported shapes form a small family closed under addition: zero,
constant, sinusoid, exponential decay, piecewise constant, and finite
sums of these (sums arise from the subsystem decomposition).  Each
shape knows whether it is square-integrable on ``[0, inf)`` and a bound
on its sup norm; the forcing classifier relies on those flags.

Evaluation accepts a scalar time (returning a ``(dim,)`` vector) or a
1-D array of times (returning ``(len(t), dim)``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError


def _vec(v) -> np.ndarray:
    a = np.ascontiguousarray(v, dtype=float).reshape(-1)
    if a.size == 0 or not np.all(np.isfinite(a)):
        raise DimensionMismatchError("signal vectors must be finite and non-empty")
    a.setflags(write=False)
    return a


class SignalSpec:
    """One regime's signal shape."""

    dim: int

    def eval(self, t):
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        raise NotImplementedError

    @property
    def is_square_integrable(self) -> bool:
        raise NotImplementedError

    @property
    def is_bounded(self) -> bool:
        raise NotImplementedError

    @property
    def sup_norm(self) -> float:
        raise NotImplementedError


def _shape_out(t, values):
    """Broadcast per-time values to (len(t), dim) or (dim,) for scalar t."""
    return values


@dataclass(frozen=True)
class ZeroSpec(SignalSpec):
    dim: int

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        return np.zeros(t.shape + (self.dim,))

    is_zero = property(lambda self: True)
    is_square_integrable = property(lambda self: True)
    is_bounded = property(lambda self: True)
    sup_norm = property(lambda self: 0.0)


@dataclass(frozen=True)
class ConstantSpec(SignalSpec):
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", _vec(self.value))

    @property
    def dim(self):
        return self.value.size

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.value, t.shape + (self.dim,)).copy()

    is_zero = property(lambda self: bool(np.all(self.value == 0.0)))
    is_square_integrable = property(lambda self: self.is_zero)
    is_bounded = property(lambda self: True)
    sup_norm = property(lambda self: float(np.linalg.norm(self.value)))


@dataclass(frozen=True)
class SinusoidSpec(SignalSpec):
    amplitude: np.ndarray
    omega: float
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "amplitude", _vec(self.amplitude))

    @property
    def dim(self):
        return self.amplitude.size

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        s = np.sin(self.omega * t + self.phase)
        return s[..., None] * self.amplitude

    is_zero = property(lambda self: bool(np.all(self.amplitude == 0.0)))
    is_square_integrable = property(lambda self: self.is_zero)
    is_bounded = property(lambda self: True)
    sup_norm = property(lambda self: float(np.linalg.norm(self.amplitude)))


@dataclass(frozen=True)
class ExpDecaySpec(SignalSpec):
    initial: np.ndarray
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "initial", _vec(self.initial))
        if not self.rate > 0.0:
            raise DimensionMismatchError("exp_decay rate must be positive")

    @property
    def dim(self):
        return self.initial.size

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-self.rate * t)[..., None] * self.initial

    is_zero = property(lambda self: bool(np.all(self.initial == 0.0)))
    is_square_integrable = property(lambda self: True)
    is_bounded = property(lambda self: True)
    sup_norm = property(lambda self: float(np.linalg.norm(self.initial)))


@dataclass(frozen=True)
class PiecewiseConstantSpec(SignalSpec):
    """Value ``values[l]`` on ``[breakpoints[l-1], breakpoints[l])``.

    ``values`` has one more row than ``breakpoints``; the final row is
    the value on ``[breakpoints[-1], inf)``, so the signal is
    square-integrable exactly when that row is zero.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.ascontiguousarray(self.breakpoints, dtype=float).reshape(-1)
        vals = np.ascontiguousarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != bp.size + 1:
            raise DimensionMismatchError(
                "piecewise values must be a (len(breakpoints)+1, dim) array"
            )
        if bp.size and (np.any(np.diff(bp) <= 0.0) or bp[0] <= 0.0):
            raise DimensionMismatchError("breakpoints must be positive and increasing")
        if not np.all(np.isfinite(vals)):
            raise DimensionMismatchError("piecewise values must be finite")
        bp.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self):
        return self.values.shape[1]

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t, side="right")
        return self.values[idx]

    is_zero = property(lambda self: bool(np.all(self.values == 0.0)))
    is_square_integrable = property(lambda self: bool(np.all(self.values[-1] == 0.0)))
    is_bounded = property(lambda self: True)
    sup_norm = property(lambda self: float(np.max(np.linalg.norm(self.values, axis=1))))


@dataclass(frozen=True)
class SumSpec(SignalSpec):
    terms: tuple

    def __post_init__(self):
        dims = {s.dim for s in self.terms}
        if len(dims) != 1:
            raise DimensionMismatchError("summed signals must share a dimension")

    @property
    def dim(self):
        return self.terms[0].dim

    def eval(self, t):
        out = self.terms[0].eval(t)
        for s in self.terms[1:]:
            out = out + s.eval(t)
        return out

    is_zero = property(lambda self: all(s.is_zero for s in self.terms))
    is_square_integrable = property(
        lambda self: all(s.is_square_integrable for s in self.terms)
    )
    is_bounded = property(lambda self: all(s.is_bounded for s in self.terms))
    sup_norm = property(lambda self: float(sum(s.sup_norm for s in self.terms)))


@dataclass(frozen=True)
class Signal:
    """A forcing signal, shared across regimes or regime-indexed.

    ``specs`` holds one entry (regime-independent) or one entry per
    regime.  Classification flags aggregate conservatively over regimes.
    """

    specs: tuple

    def __post_init__(self):
        if not self.specs:
            raise DimensionMismatchError("signal needs at least one spec")
        dims = {s.dim for s in self.specs}
        if len(dims) != 1:
            raise DimensionMismatchError("per-regime specs must share a dimension")

    @property
    def dim(self) -> int:
        return self.specs[0].dim

    @property
    def regime_count(self) -> int:
        return len(self.specs)

    def spec_for(self, regime: int) -> SignalSpec:
        return self.specs[0] if len(self.specs) == 1 else self.specs[regime]

    def eval(self, t, regime: int = 0):
        """Value at time(s) ``t`` in the given regime."""
        return self.spec_for(regime).eval(t)

    def squared_norm(self, t, regime: int = 0):
        v = self.eval(np.asarray(t, dtype=float), regime)
        return np.sum(v * v, axis=-1)

    def __add__(self, other: "Signal") -> "Signal":
        if self.dim != other.dim:
            raise DimensionMismatchError("cannot add signals of different dimension")
        ka, kb = len(self.specs), len(other.specs)
        k = max(ka, kb)
        if ka not in (1, k) or kb not in (1, k):
            raise DimensionMismatchError("incompatible regime counts in signal sum")

        def pick(specs, i):
            return specs[0] if len(specs) == 1 else specs[i]

        def combine(a, b):
            if a.is_zero:
                return b
            if b.is_zero:
                return a
            return SumSpec(terms=(a, b))

        return Signal(
            specs=tuple(combine(pick(self.specs, i), pick(other.specs, i)) for i in range(k))
        )

    @property
    def is_zero(self) -> bool:
        return all(s.is_zero for s in self.specs)

    @property
    def is_square_integrable(self) -> bool:
        return all(s.is_square_integrable for s in self.specs)

    @property
    def is_bounded(self) -> bool:
        return all(s.is_bounded for s in self.specs)

    @property
    def sup_norm(self) -> float:
        return max(s.sup_norm for s in self.specs)


# -- constructors --------------------------------------------------------

def zero(dim: int) -> Signal:
    return Signal(specs=(ZeroSpec(dim=dim),))


def constant(value) -> Signal:
    return Signal(specs=(ConstantSpec(value=value),))


def sinusoid(amplitude, omega: float, phase: float = 0.0) -> Signal:
    return Signal(specs=(SinusoidSpec(amplitude=amplitude, omega=omega, phase=phase),))


def exp_decay(initial, rate: float) -> Signal:
    return Signal(specs=(ExpDecaySpec(initial=initial, rate=rate),))


def piecewise_constant(breakpoints, values) -> Signal:
    return Signal(
        specs=(PiecewiseConstantSpec(breakpoints=np.asarray(breakpoints, dtype=float),
                                     values=np.asarray(values, dtype=float)),)
    )


def per_regime(signals) -> Signal:
    """Combine one single-spec signal per regime into a regime-indexed one."""
    specs = []
    for s in signals:
        if isinstance(s, Signal):
            if len(s.specs) != 1:
                raise DimensionMismatchError("per-regime entries must be single specs")
            specs.append(s.specs[0])
        else:
            specs.append(s)
    return Signal(specs=tuple(specs))
