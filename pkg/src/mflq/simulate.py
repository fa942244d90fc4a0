"""Monte Carlo simulation of the closed-loop decomposed system.

Per path the regime path is sampled exactly (exponential clocks) and
the two subsystems are advanced on a uniform grid refined at every jump
time: the mean state follows its regime-conditioned linear ODE (explicit
midpoint rule) and the deviation state follows Euler-Maruyama, whose
diffusion reads the current mean state.  Controls are recorded on grid
nodes as ``u_k = Theta_k X_k + v_k`` and held left-continuous on steps;
costs use trapezoidal quadrature on the grid.

Noise discipline: path ``p`` owns the generator seeded by
``(master_seed, p)`` and consumes, in order, its regime-path draws, one
standard normal per uniform step, and one extra normal per jump (the
step increment is split into independent Gaussians with variance equal
to each sub-interval length).  Results are therefore independent of
chunking or parallel scheduling, and two controllers simulated from the
same configuration share regime paths and Brownian increments exactly
(common random numbers) - the default for every differencing
experiment.

The inner loop is compiled (see ``_kernel``); this module prepares
per-chunk noise and closed-loop coefficient tables and assembles the
results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernel import run_chunk
from .errors import (
    DimensionMismatchError,
    ForcingClassError,
    GridCoverageError,
    GridMismatchError,
    ValidationFailure,
)
from .feedforward import FeedforwardSolution, StationaryFeedforward, _eval_grid
from .markov import RegimePath, jump_distributions, sample_jump_arrays
from .model import (
    DecomposedModel,
    ForcingClass,
    ForcingSignals,
    classify_forcing,
)
from .riccati import RiccatiSolution, StationarySolution

GRID_TOL = 1e-9


@dataclass(frozen=True)
class SimulationConfig:
    """Ensemble settings: grid, path count, seed, initial pair."""

    dt: float
    n_paths: int
    master_seed: int
    horizon: float
    initial_state: np.ndarray
    initial_regime: int = 0

    def __post_init__(self):
        x = np.ascontiguousarray(self.initial_state, dtype=float).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "initial_state", x)
        if self.dt <= 0.0 or self.horizon <= 0.0:
            raise ValidationFailure("dt and horizon must be positive")
        steps = round(self.horizon / self.dt)
        if steps < 1 or abs(steps * self.dt - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise ValidationFailure("dt must divide the horizon")
        if self.n_paths < 1:
            raise ValidationFailure("n_paths must be at least 1")
        if self.master_seed < 0:
            raise ValidationFailure("master_seed must be nonnegative")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class ControlTables:
    """Gain and feedforward tables on the simulation grid.

    ``theta`` has shape ``(N+1, 2, m0, m, n)`` and ``v`` shape
    ``(N+1, 2, m0, m)``; stationary controllers store constant-in-time
    tables broadcast onto the grid.
    """

    times: np.ndarray
    theta: np.ndarray
    v: np.ndarray

    @classmethod
    def from_finite_horizon(cls, ric: RiccatiSolution, ff: FeedforwardSolution):
        if ric.P.shape[0] != ff.eta2.shape[0] or abs(ric.dt - ff.dt) > GRID_TOL:
            raise GridMismatchError("value-matrix and feedforward grids differ")
        v = np.stack([ff.v1, ff.v2], axis=1)
        return cls(times=ric.times, theta=ric.theta, v=v)

    @classmethod
    def from_stationary(cls, stat: StationarySolution, sff: StationaryFeedforward):
        n_nodes = sff.times.size
        theta = np.broadcast_to(
            stat.theta_inf[None], (n_nodes,) + stat.theta_inf.shape
        ).copy()
        v = np.stack([sff.v1, sff.v2], axis=1)
        return cls(times=sff.times, theta=theta, v=v)


@dataclass(frozen=True)
class PathBundle:
    """One stored path: regime path, noise, trajectories, controls, cost."""

    times: np.ndarray
    regime_path: RegimePath
    brownian_increments: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    cost: float


@dataclass(frozen=True)
class Ensemble:
    """Simulation output: per-path costs plus optional checkpoint data."""

    config: SimulationConfig
    costs: np.ndarray
    checkpoint_times: np.ndarray | None = None
    X1_checkpoints: np.ndarray | None = None
    X2_checkpoints: np.ndarray | None = None
    u1_checkpoints: np.ndarray | None = None
    u2_checkpoints: np.ndarray | None = None
    cost_checkpoint_times: np.ndarray | None = None
    cost_checkpoints: np.ndarray | None = None
    bundles: tuple | None = None


@dataclass(frozen=True)
class PairedGaps:
    """Coupled two-controller gaps at checkpoints (common random numbers)."""

    checkpoint_times: np.ndarray
    state_gap: np.ndarray
    control_gap: np.ndarray
    costs_a: np.ndarray
    costs_b: np.ndarray
    discount_rate: float


class _Tables:
    """Closed-loop arrays precomputed on the grid for one controller."""

    def __init__(self, model: DecomposedModel, tab: ControlTables, cfg: SimulationConfig):
        times = cfg.times
        if tab.times.shape != times.shape or np.max(np.abs(tab.times - times)) > GRID_TOL:
            raise GridCoverageError("control tables do not cover the simulation grid")
        th1 = np.ascontiguousarray(tab.theta[:, 0])
        th2 = np.ascontiguousarray(tab.theta[:, 1])
        v1 = np.ascontiguousarray(tab.v[:, 0])
        v2 = np.ascontiguousarray(tab.v[:, 1])
        self.th1, self.th2, self.v1, self.v2 = th1, th2, v1, v2
        self.Ab1 = model.A1[None] + model.B1[None] @ th1
        self.Ab2 = model.A2[None] + model.B2[None] @ th2
        self.Cb1 = model.C1[None] + model.D1[None] @ th1
        self.Cb2 = model.C2[None] + model.D2[None] @ th2
        self.Bv1 = (model.B1[None] @ v1[..., None])[..., 0]
        self.Bv2 = (model.B2[None] @ v2[..., None])[..., 0]
        self.Dv = (
            (model.D1[None] @ v1[..., None])[..., 0]
            + (model.D2[None] @ v2[..., None])[..., 0]
        )


class _SignalGrids:
    """Forcing evaluated on nodes and half-steps, shared by controllers."""

    def __init__(self, model: DecomposedModel, cfg: SimulationConfig):
        times = cfg.times
        mid = times[:-1] + cfg.dt / 2.0
        m0 = model.m0
        self.sig = _eval_grid(model.sigma, times, m0)
        self.b2 = _eval_grid(model.b2, times, m0)
        self.b2m = _eval_grid(model.b2, mid, m0)
        self.q1 = _eval_grid(model.q1, times, m0)
        self.q2 = _eval_grid(model.q2, times, m0)
        self.r1 = _eval_grid(model.r1, times, m0)
        self.r2 = _eval_grid(model.r2, times, m0)


def _checkpoint_slots(times_wanted, cfg: SimulationConfig, label: str):
    """Slot table mapping grid node -> checkpoint index (-1 elsewhere)."""
    slots = np.full(cfg.n_steps + 1, -1, dtype=np.int64)
    if times_wanted is None:
        return None, slots, 0
    wanted = np.asarray(times_wanted, dtype=float).reshape(-1)
    idx = np.round(wanted / cfg.dt).astype(np.int64)
    if np.any(idx < 0) or np.any(idx > cfg.n_steps) or np.any(
        np.abs(idx * cfg.dt - wanted) > GRID_TOL * max(1.0, cfg.horizon)
    ):
        raise GridMismatchError(f"{label} must lie on the simulation grid")
    if np.unique(idx).size != idx.size:
        raise GridMismatchError(f"{label} contains duplicate grid nodes")
    for l, j in enumerate(idx):
        slots[j] = l
    return wanted, slots, len(idx)


class _ChunkNoise:
    """Per-chunk regime paths, pre-drawn normals, and jump records.

    Arrays are path-major; the kernel walks one path at a time.  Jump
    records are stored per path in time order with offsets in
    ``jp_off``.
    """

    def __init__(self, model, cfg, p_lo, p_hi, shared_path, normals_override, keep_paths):
        n_steps = cfg.n_steps
        nodes = cfg.times
        P = p_hi - p_lo
        self.Z = np.empty((P, n_steps))
        self.reg_node = np.zeros((P, n_steps + 1), dtype=np.int8)
        self.has_jump = np.zeros((P, n_steps), dtype=bool)
        self.jp_off = np.zeros(P + 1, dtype=np.int64)
        self.paths = [] if keep_paths else None
        rec_step, rec_tau, rec_after, rec_z = [], [], [], []

        gen = model.generator
        cum = jump_distributions(gen)
        i0 = cfg.initial_regime
        T = cfg.horizon
        if shared_path is not None:
            shared_jt = shared_path.jump_times
            shared_post = shared_path.post_jump_regimes
            shared_i0 = shared_path.initial_regime
        total = 0
        for local in range(P):
            rng = np.random.default_rng((cfg.master_seed, p_lo + local))
            if shared_path is not None:
                jt, post, start = shared_jt, shared_post, shared_i0
            else:
                jt, post = sample_jump_arrays(gen, i0, T, rng, cum)
                start = i0
            if normals_override is not None:
                self.Z[local] = normals_override[p_lo + local]
            else:
                rng.standard_normal(out=self.Z[local])
            k = jt.size
            if k:
                regs_all = np.concatenate(([start], post))
                self.reg_node[local] = regs_all[
                    np.searchsorted(jt, nodes, side="right")
                ]
                extras = rng.standard_normal(k)
                steps = np.minimum((jt / cfg.dt).astype(np.int64), n_steps - 1)
                self.has_jump[local, steps] = True
                rec_step.append(steps)
                rec_tau.append(jt)
                rec_after.append(post)
                rec_z.append(extras)
                total += k
            else:
                self.reg_node[local] = start
            self.jp_off[local + 1] = total
            if self.paths is not None:
                self.paths.append(
                    shared_path if shared_path is not None else RegimePath(
                        initial_regime=start, jump_times=jt,
                        post_jump_regimes=post, horizon=T,
                    )
                )

        if total:
            self.j_step = np.ascontiguousarray(np.concatenate(rec_step))
            self.j_tau = np.ascontiguousarray(np.concatenate(rec_tau))
            self.j_after = np.ascontiguousarray(
                np.concatenate(rec_after).astype(np.int64))
            self.j_z = np.ascontiguousarray(np.concatenate(rec_z))
        else:
            self.j_step = np.empty(0, dtype=np.int64)
            self.j_tau = np.empty(0)
            self.j_after = np.empty(0, dtype=np.int64)
            self.j_z = np.empty(0)


def _run(
    model: DecomposedModel,
    tables_list,
    cfg: SimulationConfig,
    *,
    checkpoints=None,
    store_paths: bool = False,
    shared_regime_path: RegimePath | None = None,
    cost_checkpoint_times=None,
    moment_checkpoint_times=None,
    gap_discount: float | None = None,
    normals_override=None,
    chunk_size: int = 8192,
):
    """Advance one or two controllers on shared noise; see module docstring."""
    n, m, m0 = model.n, model.m, model.m0
    S = len(tables_list)
    n_steps = cfg.n_steps
    dt = cfg.dt
    x0 = cfg.initial_state
    if x0.size != n:
        raise DimensionMismatchError("initial state dimension mismatch")
    if cfg.initial_regime < 0 or cfg.initial_regime >= m0:
        raise ValidationFailure("initial regime out of range")
    if shared_regime_path is not None and shared_regime_path.horizon < cfg.horizon - GRID_TOL:
        raise GridCoverageError("shared regime path shorter than the horizon")
    if normals_override is not None:
        normals_override = np.asarray(normals_override, dtype=float)
        if normals_override.shape != (cfg.n_paths, n_steps):
            raise DimensionMismatchError("normals override has the wrong shape")
        if m0 > 1 and shared_regime_path is None:
            raise ValidationFailure(
                "normals override requires a shared regime path or a single regime"
            )
    paired = gap_discount is not None
    if paired and S != 2:
        raise ValidationFailure("gap accumulation needs exactly two controllers")
    if store_paths and S != 1:
        raise ValidationFailure("path storage is only supported for single runs")

    tabs = [_Tables(model, tab, cfg) for tab in tables_list]
    sg = _SignalGrids(model, cfg)

    def stack(attr):
        return np.ascontiguousarray(np.stack([getattr(t, attr) for t in tabs]))

    Ab1, Cb1, Cb2, Ab2 = stack("Ab1"), stack("Cb1"), stack("Cb2"), stack("Ab2")
    Bv1, Bv2, Dv = stack("Bv1"), stack("Bv2"), stack("Dv")
    th1, th2 = stack("th1"), stack("th2")
    v1, v2 = stack("v1"), stack("v2")

    cp_times, cp_slot, ncp = _checkpoint_slots(checkpoints, cfg, "checkpoints")
    cc_times, cc_slot, ncc = _checkpoint_slots(
        cost_checkpoint_times, cfg, "cost checkpoints")
    mc_times, mc_slot, nmc = _checkpoint_slots(
        moment_checkpoint_times, cfg, "moment checkpoints")

    P_total = cfg.n_paths
    costs = np.zeros((S, P_total))
    X1cp = np.zeros((S, P_total, ncp, n))
    X2cp = np.zeros((S, P_total, ncp, n))
    u1cp = np.zeros((S, P_total, ncp, m))
    u2cp = np.zeros((S, P_total, ncp, m))
    cost_cp = np.zeros((S, P_total, ncc))
    mom_cp = np.zeros((S, P_total, nmc))
    gap_x = np.zeros((P_total, ncp if paired else 0))
    gap_u = np.zeros((P_total, ncp if paired else 0))
    gap_disc = math.exp(-gap_discount * dt) if paired else 1.0
    bundles = [] if store_paths else None

    for p_lo in range(0, P_total, chunk_size):
        p_hi = min(p_lo + chunk_size, P_total)
        P = p_hi - p_lo
        noise = _ChunkNoise(model, cfg, p_lo, p_hi, shared_regime_path,
                            normals_override, store_paths)
        c_costs = np.zeros((S, P))
        c_X1cp = np.zeros((S, P, ncp, n))
        c_X2cp = np.zeros((S, P, ncp, n))
        c_u1cp = np.zeros((S, P, ncp, m))
        c_u2cp = np.zeros((S, P, ncp, m))
        c_cost_cp = np.zeros((S, P, ncc))
        c_mom_cp = np.zeros((S, P, nmc))
        c_gap_x = np.zeros((P, ncp if paired else 0))
        c_gap_u = np.zeros((P, ncp if paired else 0))
        if store_paths:
            X1tr = np.zeros((P, n_steps + 1, n))
            X2tr = np.zeros((P, n_steps + 1, n))
            u1tr = np.zeros((P, n_steps + 1, m))
            u2tr = np.zeros((P, n_steps + 1, m))
            dWtr = np.zeros((P, n_steps))
        else:
            X1tr = np.zeros((0, 1, n))
            X2tr = np.zeros((0, 1, n))
            u1tr = np.zeros((0, 1, m))
            u2tr = np.zeros((0, 1, m))
            dWtr = np.zeros((0, 1))

        run_chunk(
            n_steps, dt, x0,
            noise.Z, noise.reg_node, noise.has_jump,
            noise.jp_off, noise.j_step, noise.j_tau, noise.j_after, noise.j_z,
            Ab1, Cb1, Cb2, Ab2,
            Bv1, Bv2, Dv,
            th1, th2, v1, v2,
            sg.sig, sg.b2, sg.b2m,
            sg.q1, sg.q2, sg.r1, sg.r2,
            model.Q1, model.Q2, model.S1, model.S2, model.R1, model.R2,
            cp_slot, cc_slot, mc_slot,
            paired, gap_disc,
            store_paths,
            c_costs,
            c_X1cp, c_X2cp, c_u1cp, c_u2cp,
            c_cost_cp, c_mom_cp,
            c_gap_x, c_gap_u,
            X1tr, X2tr, u1tr, u2tr, dWtr,
        )

        costs[:, p_lo:p_hi] = c_costs
        if ncp:
            X1cp[:, p_lo:p_hi] = c_X1cp
            X2cp[:, p_lo:p_hi] = c_X2cp
            u1cp[:, p_lo:p_hi] = c_u1cp
            u2cp[:, p_lo:p_hi] = c_u2cp
        if ncc:
            cost_cp[:, p_lo:p_hi] = c_cost_cp
        if nmc:
            mom_cp[:, p_lo:p_hi] = c_mom_cp
        if paired and ncp:
            gap_x[p_lo:p_hi] = c_gap_x
            gap_u[p_lo:p_hi] = c_gap_u
        if store_paths:
            for local in range(P):
                bundles.append(
                    PathBundle(
                        times=cfg.times,
                        regime_path=(shared_regime_path if shared_regime_path
                                     is not None else noise.paths[local]),
                        brownian_increments=dWtr[local].copy(),
                        X1=X1tr[local].copy(),
                        X2=X2tr[local].copy(),
                        u1=u1tr[local].copy(),
                        u2=u2tr[local].copy(),
                        cost=float(c_costs[0, local]),
                    )
                )

    return {
        "costs": costs,
        "checkpoint_times": cp_times,
        "X1cp": X1cp if ncp else None, "X2cp": X2cp if ncp else None,
        "u1cp": u1cp if ncp else None, "u2cp": u2cp if ncp else None,
        "cost_checkpoint_times": cc_times, "cost_cp": cost_cp if ncc else None,
        "moment_checkpoint_times": mc_times, "moment_cp": mom_cp if nmc else None,
        "gap_x": gap_x if paired and ncp else None,
        "gap_u": gap_u if paired and ncp else None,
        "bundles": tuple(bundles) if bundles is not None else None,
    }


def simulate_closed_loop(
    model: DecomposedModel,
    tables: ControlTables,
    cfg: SimulationConfig,
    checkpoints=None,
    store_paths: bool = False,
    shared_regime_path: RegimePath | None = None,
    cost_checkpoint_times=None,
    normals_override=None,
    chunk_size: int = 8192,
) -> Ensemble:
    """Simulate one closed-loop controller; see the module docstring.

    With a deterministic initial state the deviation component starts at
    zero and the mean component at the initial state.  ``checkpoints``
    requests per-path state/control snapshots at grid-aligned times;
    ``store_paths`` keeps full per-path trajectories (small runs only).
    """
    out = _run(
        model, [tables], cfg,
        checkpoints=checkpoints, store_paths=store_paths,
        shared_regime_path=shared_regime_path,
        cost_checkpoint_times=cost_checkpoint_times,
        normals_override=normals_override, chunk_size=chunk_size,
    )
    return Ensemble(
        config=cfg,
        costs=out["costs"][0],
        checkpoint_times=out["checkpoint_times"],
        X1_checkpoints=out["X1cp"][0] if out["X1cp"] is not None else None,
        X2_checkpoints=out["X2cp"][0] if out["X2cp"] is not None else None,
        u1_checkpoints=out["u1cp"][0] if out["u1cp"] is not None else None,
        u2_checkpoints=out["u2cp"][0] if out["u2cp"] is not None else None,
        cost_checkpoint_times=out["cost_checkpoint_times"],
        cost_checkpoints=out["cost_cp"][0] if out["cost_cp"] is not None else None,
        bundles=out["bundles"],
    )


def simulate_paired(
    model: DecomposedModel,
    tables_a: ControlTables,
    tables_b: ControlTables,
    cfg: SimulationConfig,
    checkpoints,
    gap_discount_rate: float,
    chunk_size: int = 8192,
) -> PairedGaps:
    """Simulate two controllers on identical noise and record their gaps.

    ``state_gap[p, l]`` is the summed squared subsystem state difference
    at checkpoint ``l``; ``control_gap`` is the running exponentially
    discounted integral of the squared control difference at the given
    discount rate, accumulated on the grid.
    """
    out = _run(
        model, [tables_a, tables_b], cfg,
        checkpoints=checkpoints, gap_discount=gap_discount_rate,
        chunk_size=chunk_size,
    )
    return PairedGaps(
        checkpoint_times=out["checkpoint_times"],
        state_gap=out["gap_x"],
        control_gap=out["gap_u"],
        costs_a=out["costs"][0],
        costs_b=out["costs"][1],
        discount_rate=gap_discount_rate,
    )


def evaluate_cost(ensemble: Ensemble, model=None, signals=None, T=None):
    """Monte Carlo estimate of the cost: ``(mean, standard error)``.

    When the ensemble stores full paths and the model and signals are
    supplied, the quadrature is recomputed from the trajectories (it
    reproduces the accumulated values); otherwise the per-path totals
    recorded during simulation are used.
    """
    if ensemble.bundles is not None and model is not None and signals is not None:
        horizon = T if T is not None else ensemble.config.horizon
        costs = np.array([running_cost(b, model, horizon) for b in ensemble.bundles])
    else:
        costs = ensemble.costs
    mean = float(costs.mean())
    se = float(costs.std(ddof=1) / math.sqrt(costs.size)) if costs.size > 1 else 0.0
    return mean, se


def running_cost(bundle: PathBundle, model: DecomposedModel, T=None) -> float:
    """Trapezoidal running cost of one stored path on ``[0, T]``."""
    times = bundle.times
    n_nodes = times.size if T is None else int(round(T / (times[1] - times[0]))) + 1
    regs = bundle.regime_path.regime_at(times[:n_nodes])
    ell = np.empty(n_nodes)
    m0 = model.m0
    sgq1 = _eval_grid(model.q1, times[:n_nodes], m0)
    sgq2 = _eval_grid(model.q2, times[:n_nodes], m0)
    sgr1 = _eval_grid(model.r1, times[:n_nodes], m0)
    sgr2 = _eval_grid(model.r2, times[:n_nodes], m0)
    for j in range(n_nodes):
        i = int(regs[j])
        x1, x2 = bundle.X1[j], bundle.X2[j]
        u1, u2 = bundle.u1[j], bundle.u2[j]
        ell[j] = (
            x1 @ model.Q1[i] @ x1 + 2.0 * (u1 @ model.S1[i] @ x1)
            + u1 @ model.R1[i] @ u1 + x1 @ sgq1[j, i] + u1 @ sgr1[j, i]
            + x2 @ model.Q2[i] @ x2 + 2.0 * (u2 @ model.S2[i] @ x2)
            + u2 @ model.R2[i] @ u2 + x2 @ sgq2[j, i] + u2 @ sgr2[j, i]
        )
    dt = float(times[1] - times[0]) if n_nodes > 1 else 0.0
    return float(np.trapezoid(ell, dx=dt)) if n_nodes > 1 else 0.0


def recompose(bundle: PathBundle):
    """Full state and control of one path: ``X = X1 + X2``, ``u = u1 + u2``."""
    return bundle.X1 + bundle.X2, bundle.u1 + bundle.u2


def evaluate_ergodic_cost(
    model: DecomposedModel,
    tables: ControlTables,
    signals: ForcingSignals,
    cfg: SimulationConfig,
    T_list,
    chunk_size: int = 8192,
):
    """Time-averaged costs of the stationary loop at several horizons.

    One ensemble is simulated to the largest horizon; the averages at
    every requested horizon come from the same paths.  Returns a list of
    ``(T, mean of J_T / T, standard error of the mean)``.
    """
    fc = classify_forcing(signals)
    if fc not in (ForcingClass.HOMOGENEOUS, ForcingClass.LOCAL_INTEGRABLE):
        raise ForcingClassError(
            f"ergodic evaluation expects bounded forcing, got {fc.value}"
        )
    T_sorted = sorted(float(T) for T in T_list)
    if abs(T_sorted[-1] - cfg.horizon) > GRID_TOL:
        raise GridMismatchError("config horizon must equal the largest requested T")
    out = _run(
        model, [tables], cfg,
        cost_checkpoint_times=T_sorted, chunk_size=chunk_size,
    )
    cc = out["cost_cp"][0]
    results = []
    for l, T in enumerate(T_sorted):
        vals = cc[:, l] / T
        se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        results.append((T, float(vals.mean()), se))
    return results
