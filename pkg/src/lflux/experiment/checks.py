"""Built-in regression suite against closed-form solutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..coarse_grain import cumulant, global_identity
from ..solver import InitialSpec, SolverConfig, run
from ..spectral import Grid, SpectralField
from ..synthetic import shear, taylor_green


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<40s} {self.value:.3e}  (tol {self.tolerance:.0e})"


def _max_err(a: SpectralField, b: np.ndarray) -> float:
    return float(np.max(np.abs(a.values - b)))


def _decay_run(kind: str, n=64, nu=0.05, dt=1e-3, t_end=1.0):
    cfg = SolverConfig(Grid(2, n), nu, dt, t_end, initial=InitialSpec(kind=kind), snapshot_stride=100)
    return run(cfg)


def run_checks() -> list[CheckResult]:
    out = []
    nu = 0.05

    traj, budget = _decay_run("taylor_green")
    g = traj.grid
    last = traj[-1]
    exact = np.exp(-2 * nu * last.t) * taylor_green(g).values
    out.append(CheckResult("taylor_green velocity at t=1", _max_err(last.u, exact), 1e-8))
    x, y = g.coordinates()
    p_exact = 0.25 * np.exp(-4 * nu * last.t) * (np.cos(2 * x) + np.cos(2 * y))
    out.append(CheckResult("taylor_green pressure at t=1", _max_err(last.p, p_exact[None]), 1e-8))
    out.append(CheckResult("taylor_green energy balance", budget.relative_balance_residual, 1e-5))
    tau = cumulant(last.u, last.u, 0.3)
    tr = sum(tau[i, i] for i in range(g.dim))
    umax2 = float(np.max(np.sum(last.u.values**2, axis=0)))
    out.append(CheckResult("taylor_green cumulant trace >= 0", max(0.0, -float(tr.min())) / umax2, 1e-12))
    fb = global_identity(traj, 0.3)
    out.append(CheckResult("taylor_green global flux identity", fb.relative_residual, 1e-5))

    traj, budget = _decay_run("shear")
    last = traj[-1]
    exact = np.exp(-nu * last.t) * shear(traj.grid).values
    out.append(CheckResult("shear velocity at t=1", _max_err(last.u, exact), 1e-10))
    out.append(CheckResult("shear energy balance", budget.relative_balance_residual, 1e-5))
    return out


def main(quiet: bool = False) -> int:
    results = run_checks()
    if not quiet:
        for r in results:
            print(r.line())
    return 0 if all(r.passed for r in results) else 1
