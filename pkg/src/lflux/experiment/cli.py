"""Command-line driver: ``lflux <subcommand> [--config ...] [--out ...]``.

Exit status: 0 on success, 1 on numerical failure (or a failed ``check``),
2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .. import coarse_grain, statistics
from ..coarse_grain import Mollifier
from ..solver import NumericalError, Snapshot, Trajectory, run
from ..synthetic import SyntheticSpec, random_besov_field
from . import checks, config, io, sweep
from .config import ExperimentConfig

log = logging.getLogger("lflux")

SUBCOMMANDS = ("simulate", "budget", "structure", "flux-scaling", "sweep", "synth", "check")
DEFAULT_CONFIG = "taylor_green"


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG, help="config file or bundled config name")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--nu", type=_floats, help="viscosity list (overrides the config)")
    common.add_argument("--ell", type=_floats, help="filter-width list (overrides the config)")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(prog="lflux", description="Coarse-grained energy-flux toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")
    helps = {
        "simulate": "run the solver, write snapshots and the energy budget",
        "budget": "evaluate the filtered energy balances on stored snapshots",
        "structure": "structure functions and Besov estimates of stored snapshots",
        "flux-scaling": "flux, cumulant and dissipation scaling on synthetic ensembles",
        "sweep": "viscosity sweep and consistency report",
        "synth": "write synthetic fields as snapshot files",
        "check": "run the built-in exact-solution regression suite",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


# -- helpers ----------------------------------------------------------------------------


def _out(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.output)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _provenance(cfg: ExperimentConfig, command: str) -> dict:
    from .. import __version__

    return {"command": command, "version": __version__, "config": config.to_dict(cfg)}


def _say(args, msg: str):
    if not args.quiet:
        print(msg)


def _mollifier(cfg: ExperimentConfig) -> Mollifier:
    return Mollifier(cfg.analysis.mollifier)


def _snapshot_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output) / "snapshots"


def _load_trajectory(cfg: ExperimentConfig) -> Trajectory:
    files = sorted(_snapshot_dir(cfg).glob("*.lflx"))
    if not files:
        raise UsageError(f"no snapshot files in {_snapshot_dir(cfg)}; run 'simulate' first")
    snaps = [io.load_snapshot(f) for f in files]
    grid = snaps[0].u.grid
    if grid != cfg.solver.grid:
        raise UsageError(f"snapshots are on {grid}, config says {cfg.solver.grid}")
    forcing = cfg.solver.forcing.field(grid)
    # snapshots written by 'simulate' carry the solver's truncated dynamics
    return Trajectory(grid, cfg.solver.viscosity, snaps, forcing, galerkin_cutoff=grid.n / 3.0)


# -- subcommands --------------------------------------------------------------------------


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    traj, budget = run(cfg.solver)
    out = _out(cfg)
    snapdir = out / "snapshots"
    snapdir.mkdir(exist_ok=True)
    for old in snapdir.glob("*.lflx"):
        old.unlink()
    for i, s in enumerate(traj.snapshots):
        io.save_snapshot(snapdir / f"snap_{i:05d}.lflx", s)
    rows = [
        {
            "t": float(t),
            "kinetic_energy": float(e),
            "viscous_dissipation": float(d),
            "injection": float(j),
            "cumulative_dissipation": float(cd),
            "cumulative_injection": float(ci),
        }
        for t, e, d, j, cd, ci in zip(
            budget.times,
            budget.kinetic_energy,
            budget.viscous_dissipation,
            budget.injection,
            budget.cumulative_dissipation,
            budget.cumulative_injection,
        )
    ]
    io.write_csv(out / "energy_budget.csv", rows, _provenance(cfg, "simulate"))
    _say(args, f"wrote {len(traj)} snapshots to {snapdir}")
    _say(args, f"energy balance relative residual {budget.relative_balance_residual:.3e}")
    return 0


def cmd_budget(cfg: ExperimentConfig, args) -> int:
    traj = _load_trajectory(cfg)
    m = _mollifier(cfg)
    rows = []
    for ell in cfg.analysis.ells:
        fb = coarse_grain.global_identity(traj, ell, m)
        row = {
            "ell": float(ell),
            "flux_integral": fb.flux_integral,
            "resolved_dissipation": fb.resolved_dissipation,
            "initial_cumulant": fb.initial_cumulant,
            "final_cumulant": fb.final_cumulant,
            "forcing_cumulant": fb.forcing_cumulant,
            "total_dissipation": fb.lhs_total_dissipation,
            "global_residual": fb.residual,
            "global_relative_residual": fb.relative_residual,
            "local_relative_residual_max": math.nan,
        }
        if len(traj) >= 5:
            rb = coarse_grain.resolved_balance_residual(traj, ell, m)
            row["local_relative_residual_max"] = float(np.max(rb.relative))
        rows.append(row)
        _say(args, f"ell={ell:g}  global relative residual {fb.relative_residual:.3e}")
    io.write_csv(_out(cfg) / "flux_budget.csv", rows, _provenance(cfg, "budget"))
    return 0


def cmd_structure(cfg: ExperimentConfig, args) -> int:
    traj = _load_trajectory(cfg)
    a = cfg.analysis
    seps = a.separations or None
    srows, brows = [], []
    for s in traj.snapshots:
        tb = statistics.structure_function(s.u, a.orders, seps, t=s.t)
        for ri, r in enumerate(tb.separations):
            row = {"t": s.t, "r": float(r)}
            row.update({f"S{p:g}": float(tb.S(p)[ri]) for p in tb.orders})
            srows.append(row)
        for p in tb.orders:
            est = statistics.besov_estimate(tb, a.besov_sigma, order=p)
            brows.append({"t": s.t, "order": p, "sigma": a.besov_sigma, "C0": est.C0, "C1": est.C1, "norm": est.norm})
    out = _out(cfg)
    prov = _provenance(cfg, "structure")
    io.write_csv(out / "structure_functions.csv", srows, prov)
    io.write_csv(out / "besov_estimates.csv", brows, prov)
    _say(args, f"structure functions for {len(traj)} snapshots written to {out}")
    return 0


def cmd_flux_scaling(cfg: ExperimentConfig, args) -> int:
    grid = cfg.solver.grid
    m = _mollifier(cfg)
    rows, summary = [], {}
    for sigma in cfg.analysis.synthetic_sigmas:
        fields = [random_besov_field(grid, SyntheticSpec(sigma=sigma, seed=sd)) for sd in cfg.sweep.seeds]
        rep = statistics.flux_scaling_report(fields, cfg.analysis.ells, m)
        for fi, sd in enumerate(cfg.sweep.seeds):
            for li, ell in enumerate(rep.ells):
                row = {"sigma": float(sigma), "seed": sd, "ell": float(ell)}
                row.update({q: float(rep.norms[q][fi, li]) for q in statistics.QUANTITIES})
                rows.append(row)
        summary[f"{sigma:.17g}"] = {
            "status": rep.status,
            "mean_slopes": rep.mean_slopes,
            "predicted": {
                "flux_l1": 3 * sigma - 1,
                "cumulant_l1": 2 * sigma,
                "resolved_dissipation": 2 * (sigma - 1),
            },
        }
        _say(args, f"sigma={sigma:g} " + " ".join(f"{q}={v:.3f}" for q, v in rep.mean_slopes.items()))
    out = _out(cfg)
    prov = _provenance(cfg, "flux-scaling")
    io.write_csv(out / "flux_scaling.csv", rows, prov)
    io.write_json(out / "flux_scaling.json", {"sigmas": summary}, prov)
    return 0


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    members = sweep.run_sweep(cfg)
    rep = sweep.sweep_report(cfg, members)
    out = _out(cfg)
    prov = _provenance(cfg, "sweep")
    io.write_json(out / "onsager_report.json", rep.summary(), prov)
    io.write_csv(out / "onsager_report.csv", rep.rows(), prov)
    for mbr in members:
        b = mbr.budget
        io.write_csv(
            out / f"energy_budget_nu{mbr.viscosity:.6g}.csv",
            [
                {"t": float(t), "kinetic_energy": float(e), "viscous_dissipation": float(d)}
                for t, e, d in zip(b.times, b.kinetic_energy, b.viscous_dissipation)
            ],
            prov,
        )
    _say(args, f"alpha_hat={rep.alpha_hat:.4f} sigma_hat={rep.sigma_hat:.4f} margin={rep.consistency_margin:+.4f}")
    return 0


def cmd_synth(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg) / "synthetic"
    out.mkdir(exist_ok=True)
    grid = cfg.solver.grid
    count = 0
    for sigma in cfg.analysis.synthetic_sigmas:
        for sd in cfg.sweep.seeds:
            u = random_besov_field(grid, SyntheticSpec(sigma=sigma, seed=sd))
            io.save_snapshot(out / f"besov_sigma{sigma:.4f}_seed{sd}.lflx", Snapshot(0.0, u))
            count += 1
    _say(args, f"wrote {count} synthetic fields to {out}")
    return 0


def cmd_check(cfg: ExperimentConfig, args) -> int:
    return checks.main(quiet=args.quiet)


COMMANDS = {
    "simulate": cmd_simulate,
    "budget": cmd_budget,
    "structure": cmd_structure,
    "flux-scaling": cmd_flux_scaling,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
    "check": cmd_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = config.load(args.config).with_overrides(args.nu, args.ell, args.seed, args.out)
        return COMMANDS[args.command](cfg, args)
    except NumericalError as exc:
        print(f"lflux: numerical failure: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ValueError) as exc:
        # ConfigError and SnapshotFormatError are ValueErrors too
        print(f"lflux: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
