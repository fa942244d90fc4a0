"""Command-line surface: scenario-driven batch runs.

Subcommands: ``check``, ``riccati``, ``are``, ``feedforward``,
``simulate``, ``turnpike``, ``ergodic``.  Every run reads one scenario
file, writes its artifacts into the output directory, and finishes with
a manifest.  Exit codes: 0 success, 1 validation failure, 2 numerical
failure, 3 I/O failure.  ``MFLQ_THREADS`` caps module-level
parallelism.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import __version__
from .errors import (
    NumericalFailure,
    OutputFailure,
    ToolkitError,
    ValidationFailure,
)
from .feedforward import integrate_eta, stationary_feedforward
from .model import check_positive_definiteness, classify_forcing, decompose
from .riccati import integrate_riccati, solve_are
from .reporting import (
    ReportWriter,
    feedforward_rows,
    gain_rows,
    path_rows,
    plot_script_text,
    riccati_rows,
    turnpike_rows,
)
from .scenario import parse_scenario
from .simulate import (
    ControlTables,
    SimulationConfig,
    evaluate_cost,
    evaluate_ergodic_cost,
    simulate_closed_loop,
)
from .stability import check_stabilizer
from .turnpike import run_turnpike_experiment

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mflq",
        description="Mean-field LQ control with regime switching: "
                    "solvers, simulation, and turnpike certification.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="path to a scenario JSON file")
        p.add_argument("--out", default="mflq_out", help="output directory")
        p.add_argument("--dt", type=float, default=None, help="grid step override")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--tol", type=float, default=None, help="tolerance override")
        p.add_argument("--diffusion-weight", choices=("p1", "pk"), default=None,
                       help="weight matrix in the diffusion quadratic term")
        return p

    common(sub.add_parser("check", help="assumption and stabilizability report"))

    p = common(sub.add_parser("riccati", help="finite-horizon value matrices"))
    p.add_argument("--horizon", type=float, default=None)

    common(sub.add_parser("are", help="stationary value matrices and certificate"))

    p = common(sub.add_parser("feedforward", help="offsets and feedforward controls"))
    p.add_argument("--horizon", type=float, default=None)

    p = common(sub.add_parser("simulate", help="Monte Carlo closed-loop ensemble"))
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--dump-paths", type=int, default=0,
                   help="store and export this many full paths")

    p = common(sub.add_parser("turnpike", help="finite- vs infinite-horizon gaps"))
    p.add_argument("--horizons", default="5,10,20",
                   help="comma-separated horizon list")
    p.add_argument("--paths", type=int, default=None)

    p = common(sub.add_parser("ergodic", help="time-averaged cost sequence"))
    p.add_argument("--horizons", default="50,100,200",
                   help="comma-separated horizon list")
    p.add_argument("--paths", type=int, default=None)
    return parser


def _load(args):
    scen = parse_scenario(args.scenario)
    solver = scen.solver
    if args.dt is not None or args.tol is not None or args.diffusion_weight is not None:
        solver = dataclasses.replace(
            solver,
            dt=args.dt if args.dt is not None else solver.dt,
            tol=args.tol if args.tol is not None else solver.tol,
            riccati_diffusion_weight=(
                args.diffusion_weight if args.diffusion_weight is not None
                else solver.riccati_diffusion_weight),
        )
    sim = scen.simulation
    if getattr(args, "paths", None) is not None or args.seed is not None:
        sim = dataclasses.replace(
            sim,
            n_paths=getattr(args, "paths", None) or sim.n_paths,
            master_seed=args.seed if args.seed is not None else sim.master_seed,
        )
    scen = dataclasses.replace(scen, solver=solver, simulation=sim)
    model = decompose(scen.raw, scen.signals)
    return scen, model


def _config(scen, horizon):
    return SimulationConfig(
        dt=scen.solver.dt,
        n_paths=scen.simulation.n_paths,
        master_seed=scen.simulation.master_seed,
        horizon=horizon,
        initial_state=np.asarray(scen.simulation.initial_state),
        initial_regime=scen.simulation.initial_regime,
    )


def _horizon(args, scen):
    return args.horizon if args.horizon is not None else scen.solver.horizon


def _horizon_list(args):
    try:
        values = [float(v) for v in args.horizons.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationFailure(f"bad --horizons list: {exc}") from exc
    if not values:
        raise ValidationFailure("--horizons list is empty")
    return values


def _cmd_check(args):
    scen, model = _load(args)
    writer = ReportWriter(args.out, scen, "check", scen.simulation.master_seed)
    pd_report = check_positive_definiteness(model)
    forcing_class = classify_forcing(scen.signals)
    zeros = np.zeros((scen.m0, scen.m, scen.n))
    stabilizable, cert = check_stabilizer(model, zeros, zeros)
    report = {
        "scenario": scen.name,
        "forcing_class": forcing_class.value,
        "positive_definiteness": pd_report.to_dict(),
        "open_loop_stabilizable": stabilizable,
    }
    if cert is not None:
        report["certificate"] = {
            "delta_star": cert.delta_star,
            "sigma1": cert.sigma1.tolist(),
            "sigma2": cert.sigma2.tolist(),
        }
    writer.add_json("report", report)
    writer.finish()
    state = "feasible" if stabilizable else "infeasible"
    print(f"check: assumptions pass, open-loop certificate {state}")
    return EXIT_OK


def _cmd_riccati(args):
    scen, model = _load(args)
    T = _horizon(args, scen)
    writer = ReportWriter(args.out, scen, "riccati", scen.simulation.master_seed)
    sol = integrate_riccati(model, T, scen.solver.dt,
                            diffusion_weight=scen.solver.riccati_diffusion_weight)
    writer.add_csv("P", ("t", "regime", "k", "row", "col", "value"),
                   riccati_rows(sol))
    writer.add_csv("theta", ("t", "regime", "k", "row", "col", "value"),
                   gain_rows(sol))
    writer.add_json("summary", {
        "horizon": sol.T, "dt": sol.dt,
        "diffusion_weight": sol.diffusion_weight,
        "gain_weight_min_eig": float(sol.gain_weight_min_eig.min()),
    })
    writer.finish()
    print(f"riccati: horizon {T:g}, {sol.n_steps} steps, "
          f"min control-weight eigenvalue {sol.gain_weight_min_eig.min():.3e}")
    return EXIT_OK


def _cmd_are(args):
    scen, model = _load(args)
    writer = ReportWriter(args.out, scen, "are", scen.simulation.master_seed)
    stat = solve_are(model, tol=scen.solver.tol,
                     diffusion_weight=scen.solver.riccati_diffusion_weight)
    writer.add_json("solution", {
        "P_inf": stat.P_inf.tolist(),
        "theta_inf": stat.theta_inf.tolist(),
        "residuals": stat.residuals.tolist(),
        "horizon_used": stat.horizon_used,
        "certificate": {
            "delta_star": stat.certificate.delta_star,
            "sigma1": stat.certificate.sigma1.tolist(),
            "sigma2": stat.certificate.sigma2.tolist(),
        },
    })
    writer.finish()
    print(f"are: converged at horizon {stat.horizon_used:g}, "
          f"residual {stat.residuals.max():.2e}, "
          f"delta_star {stat.certificate.delta_star:.4f}")
    return EXIT_OK


def _cmd_feedforward(args):
    scen, model = _load(args)
    T = _horizon(args, scen)
    writer = ReportWriter(args.out, scen, "feedforward", scen.simulation.master_seed)
    ric = integrate_riccati(model, T, scen.solver.dt,
                            diffusion_weight=scen.solver.riccati_diffusion_weight)
    ff = integrate_eta(model, ric, scen.signals)
    writer.add_csv("tables", ("t", "regime", "component", "value"),
                   feedforward_rows(ff))
    writer.finish()
    print(f"feedforward: horizon {T:g}, max |eta2| = "
          f"{float(np.max(np.abs(ff.eta2))):.6g}")
    return EXIT_OK


def _cmd_simulate(args):
    scen, model = _load(args)
    T = _horizon(args, scen)
    writer = ReportWriter(args.out, scen, "simulate", scen.simulation.master_seed)
    ric = integrate_riccati(model, T, scen.solver.dt,
                            diffusion_weight=scen.solver.riccati_diffusion_weight)
    ff = integrate_eta(model, ric, scen.signals)
    tables = ControlTables.from_finite_horizon(ric, ff)
    cfg = _config(scen, T)
    n_cp = 11
    checkpoints = np.round(
        np.linspace(0, cfg.n_steps, n_cp)).astype(int) * cfg.dt
    ens = simulate_closed_loop(model, tables, cfg, checkpoints=np.unique(checkpoints))
    mean, se = evaluate_cost(ens)
    moment = ((ens.X1_checkpoints + ens.X2_checkpoints) ** 2).sum(-1).mean(0)
    writer.add_json("summary", {
        "horizon": T, "n_paths": cfg.n_paths, "seed": cfg.master_seed,
        "cost_mean": mean, "cost_se": se,
        "checkpoints": ens.checkpoint_times.tolist(),
        "state_second_moment": moment.tolist(),
    })
    if args.dump_paths > 0:
        n_dump = min(args.dump_paths, cfg.n_paths)
        cfg_dump = dataclasses.replace(cfg, n_paths=n_dump)
        dump = simulate_closed_loop(model, tables, cfg_dump, store_paths=True)
        header = (["path_id", "t", "regime"]
                  + [f"X_{c}" for c in range(scen.n)]
                  + [f"u_{c}" for c in range(scen.m)])
        writer.add_csv("paths", header, path_rows(dump.bundles))
    writer.finish()
    print(f"simulate: {cfg.n_paths} paths to T={T:g}, "
          f"cost {mean:.6g} +- {se:.2g}")
    return EXIT_OK


def _cmd_turnpike(args):
    scen, model = _load(args)
    horizons = _horizon_list(args)
    writer = ReportWriter(args.out, scen, "turnpike", scen.simulation.master_seed)
    stat = solve_are(model, tol=scen.solver.tol,
                     diffusion_weight=scen.solver.riccati_diffusion_weight)
    cfg = _config(scen, max(horizons))
    report = run_turnpike_experiment(
        model, stat, scen.signals, cfg, horizons,
        comparison_time=min(horizons) / 2.0 if len(horizons) > 1 else None,
    )
    writer.add_json("report", report.to_dict())
    csv_path = writer.add_csv(
        "gaps", ("T", "t", "delta_x", "se_x", "delta_u", "se_u"),
        turnpike_rows(report))
    writer.add_text("plot", "py", plot_script_text(csv_path.split("/")[-1]))
    writer.finish()
    verdict = "pass" if report.passed else "fail"
    print(f"turnpike: horizons {horizons}, delta_star "
          f"{report.delta_star:.4f}, verdicts {verdict}")
    return EXIT_OK


def _cmd_ergodic(args):
    scen, model = _load(args)
    horizons = sorted(_horizon_list(args))
    writer = ReportWriter(args.out, scen, "ergodic", scen.simulation.master_seed)
    stat = solve_are(model, tol=scen.solver.tol,
                     diffusion_weight=scen.solver.riccati_diffusion_weight)
    cfg = _config(scen, max(horizons))
    sff = stationary_feedforward(model, stat, scen.signals, cfg.times)
    tables = ControlTables.from_stationary(stat, sff)
    seq = evaluate_ergodic_cost(model, tables, scen.signals, cfg, horizons)
    writer.add_json("report", {
        "horizons": horizons,
        "averages": [{"T": T, "avg_cost": avg, "se": se} for T, avg, se in seq],
    })
    writer.add_csv("averages", ("T", "avg_cost", "se"),
                   [(T, avg, se) for T, avg, se in seq])
    writer.finish()
    line = ", ".join(f"{T:g}: {avg:.6g}" for T, avg, _ in seq)
    print(f"ergodic: time-averaged costs {{{line}}}")
    return EXIT_OK


_HANDLERS = {
    "check": _cmd_check,
    "riccati": _cmd_riccati,
    "are": _cmd_are,
    "feedforward": _cmd_feedforward,
    "simulate": _cmd_simulate,
    "turnpike": _cmd_turnpike,
    "ergodic": _cmd_ergodic,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except ValidationFailure as exc:
        print(f"error (validation): {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        print(f"error (numerical): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OutputFailure, OSError) as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_IO
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
