"""Scenario files: strict JSON ingestion of a complete model setup.

A scenario bundles the generator, the per-regime coefficient blocks,
the forcing signal specs, and solver/simulation settings.  Parsing is
strict: unknown keys anywhere are fatal, because a silently ignored
misspelt block name would corrupt an experiment.

Regime indices in scenario files are 0-based.  Matrix blocks are
nested row-major lists, one matrix per regime.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import signals as sig
from .errors import (
    DimensionMismatchError,
    ScenarioParseError,
    ScenarioValidationError,
    ToolkitError,
    ValidationFailure,
)
from .markov import GeneratorMatrix, validate_generator
from .model import ForcingSignals, RawCoefficients

_COEFF_KEYS = (
    "A", "A_bar", "B", "B_bar", "C", "C_bar", "D", "D_bar",
    "Q", "Q_bar", "S", "S_bar", "R", "R_bar",
)
_SIGNAL_KEYS = ("b", "sigma", "q", "q_bar", "r", "r_bar")


@dataclass(frozen=True)
class SolverSettings:
    dt: float = 0.002
    tol: float = 1e-10
    horizon: float = 20.0
    riccati_diffusion_weight: str = "p1"


@dataclass(frozen=True)
class SimulationSettings:
    n_paths: int = 10000
    master_seed: int = 20240901
    initial_state: tuple = (0.0,)
    initial_regime: int = 0


@dataclass(frozen=True)
class Scenario:
    """Parsed and validated scenario."""

    name: str
    n: int
    m: int
    m0: int
    generator: GeneratorMatrix
    raw: RawCoefficients
    signals: ForcingSignals
    solver: SolverSettings
    simulation: SimulationSettings
    content_hash: str = field(default="", compare=False)


def _require_keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise ScenarioParseError(f"{where} must be an object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ScenarioParseError(
            f"unknown key {sorted(unknown)[0]!r} in {where} (strict mode)"
        )
    missing = set(required) - set(obj)
    if missing:
        raise ScenarioParseError(f"missing key {sorted(missing)[0]!r} in {where}")


def _parse_signal_spec(obj, dim, where):
    _require_keys(obj, {"kind", "value", "amplitude", "omega", "phase",
                        "initial", "rate", "breakpoints", "values", "specs"},
                  {"kind"}, where)
    kind = obj["kind"]
    try:
        if kind == "zero":
            _require_keys(obj, {"kind"}, {"kind"}, where)
            return sig.ZeroSpec(dim=dim)
        if kind == "constant":
            _require_keys(obj, {"kind", "value"}, {"kind", "value"}, where)
            return sig.ConstantSpec(value=np.asarray(obj["value"], dtype=float))
        if kind == "sinusoid":
            _require_keys(obj, {"kind", "amplitude", "omega", "phase"},
                          {"kind", "amplitude", "omega"}, where)
            return sig.SinusoidSpec(
                amplitude=np.asarray(obj["amplitude"], dtype=float),
                omega=float(obj["omega"]),
                phase=float(obj.get("phase", 0.0)),
            )
        if kind == "exp_decay":
            _require_keys(obj, {"kind", "initial", "rate"},
                          {"kind", "initial", "rate"}, where)
            return sig.ExpDecaySpec(
                initial=np.asarray(obj["initial"], dtype=float),
                rate=float(obj["rate"]),
            )
        if kind == "piecewise_constant":
            _require_keys(obj, {"kind", "breakpoints", "values"},
                          {"kind", "breakpoints", "values"}, where)
            return sig.PiecewiseConstantSpec(
                breakpoints=np.asarray(obj["breakpoints"], dtype=float),
                values=np.asarray(obj["values"], dtype=float),
            )
    except DimensionMismatchError as exc:
        raise ScenarioValidationError(f"{where}: {exc}") from exc
    raise ScenarioParseError(f"unknown signal kind {kind!r} in {where}")


def _parse_signal(obj, dim, m0, where):
    if obj is None:
        return sig.zero(dim)
    if isinstance(obj, dict) and obj.get("kind") == "per_regime":
        _require_keys(obj, {"kind", "specs"}, {"kind", "specs"}, where)
        specs = obj["specs"]
        if not isinstance(specs, list) or len(specs) != m0:
            raise ScenarioValidationError(
                f"{where}: per_regime needs exactly {m0} specs"
            )
        return sig.Signal(specs=tuple(
            _parse_signal_spec(s, dim, f"{where}.specs[{k}]")
            for k, s in enumerate(specs)
        ))
    spec = _parse_signal_spec(obj, dim, where)
    if spec.dim != dim:
        raise ScenarioValidationError(
            f"{where}: signal dimension {spec.dim} != expected {dim}"
        )
    return sig.Signal(specs=(spec,))


def scenario_from_dict(data, name_fallback="scenario", content_hash=""):
    """Build a :class:`Scenario` from parsed JSON; strict key checking."""
    _require_keys(
        data,
        {"name", "dims", "generator", "coefficients", "signals",
         "solver", "simulation"},
        {"dims", "generator", "coefficients"},
        "scenario",
    )
    name = data.get("name", name_fallback)
    dims = data["dims"]
    _require_keys(dims, {"n", "m", "m0"}, {"n", "m", "m0"}, "dims")
    n, m, m0 = int(dims["n"]), int(dims["m"]), int(dims["m0"])

    try:
        generator = validate_generator(data["generator"])
    except ValidationFailure as exc:
        raise ScenarioValidationError(f"generator: {exc}") from exc
    if generator.m0 != m0:
        raise ScenarioValidationError(
            f"generator has {generator.m0} regimes, dims declare {m0}"
        )

    coeff = data["coefficients"]
    _require_keys(coeff, _COEFF_KEYS, {"A", "B", "Q", "R"}, "coefficients")
    blocks = {}
    for key in _COEFF_KEYS:
        if key in coeff:
            try:
                blocks[key] = np.asarray(coeff[key], dtype=float)
            except (TypeError, ValueError) as exc:
                raise ScenarioValidationError(f"coefficients.{key}: {exc}") from exc
    try:
        raw = RawCoefficients.from_blocks(generator, n=n, m=m, **blocks)
    except ToolkitError as exc:
        raise ScenarioValidationError(f"coefficients: {exc}") from exc

    sig_data = data.get("signals", {})
    _require_keys(sig_data, _SIGNAL_KEYS, set(), "signals")
    dims_by_key = {"b": n, "sigma": n, "q": n, "q_bar": n, "r": m, "r_bar": m}
    parsed = {
        key: _parse_signal(sig_data.get(key), dims_by_key[key], m0, f"signals.{key}")
        for key in _SIGNAL_KEYS
    }
    try:
        forcing = ForcingSignals(n=n, m=m, **parsed)
        forcing.validate_regimes(m0)
    except ToolkitError as exc:
        raise ScenarioValidationError(f"signals: {exc}") from exc

    solver_data = data.get("solver", {})
    _require_keys(solver_data,
                  {"dt", "tol", "horizon", "riccati_diffusion_weight"},
                  set(), "solver")
    solver = SolverSettings(
        dt=float(solver_data.get("dt", SolverSettings.dt)),
        tol=float(solver_data.get("tol", SolverSettings.tol)),
        horizon=float(solver_data.get("horizon", SolverSettings.horizon)),
        riccati_diffusion_weight=str(
            solver_data.get("riccati_diffusion_weight", "p1")),
    )
    if solver.riccati_diffusion_weight not in ("p1", "pk"):
        raise ScenarioValidationError(
            "solver.riccati_diffusion_weight must be 'p1' or 'pk'"
        )

    sim_data = data.get("simulation", {})
    _require_keys(sim_data,
                  {"n_paths", "master_seed", "initial_state", "initial_regime"},
                  set(), "simulation")
    x0 = sim_data.get("initial_state", [0.0] * n)
    simulation = SimulationSettings(
        n_paths=int(sim_data.get("n_paths", SimulationSettings.n_paths)),
        master_seed=int(sim_data.get("master_seed", SimulationSettings.master_seed)),
        initial_state=tuple(float(v) for v in x0),
        initial_regime=int(sim_data.get("initial_regime", 0)),
    )
    if len(simulation.initial_state) != n:
        raise ScenarioValidationError(
            f"simulation.initial_state has length {len(simulation.initial_state)}, "
            f"expected {n}"
        )
    if not 0 <= simulation.initial_regime < m0:
        raise ScenarioValidationError("simulation.initial_regime out of range")

    return Scenario(
        name=str(name), n=n, m=m, m0=m0, generator=generator, raw=raw,
        signals=forcing, solver=solver, simulation=simulation,
        content_hash=content_hash,
    )


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file (strict JSON)."""
    try:
        raw_bytes = open(path, "rb").read()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read scenario file: {exc}") from exc
    try:
        data = json.loads(raw_bytes)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"malformed JSON: {exc}") from exc
    digest = hashlib.sha256(raw_bytes).hexdigest()
    return scenario_from_dict(data, name_fallback="scenario", content_hash=digest)
