"""Pseudo-spectral incompressible Navier-Stokes on the periodic box.

The projected equation ``du/dt = -P div(u u) + nu lap u + f`` is advanced by
classical RK4 in Lawson (integrating-factor) form, so the viscous term is
integrated exactly.  Quadratic products are formed in real space and
truncated by the 2/3 rule; for a velocity that is itself 2/3-truncated this
is the exact Galerkin truncation, which conserves energy mode-wise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from . import synthetic
from .spectral import (
    Grid,
    SpectralField,
    forward,
    inverse,
    leray_coeffs,
    pointwise_magnitude,
)

log = logging.getLogger(__name__)

CFL_NUMBER = 0.5
BLOWUP_FACTOR = 1e3


class NumericalError(RuntimeError):
    """Integration could not proceed (CFL violation, blow-up, NaN)."""


class CFLViolation(NumericalError):
    pass


class BlowUpError(NumericalError):
    pass


FORCING_KINDS = ("none", "fixed_low_mode")
INITIAL_KINDS = (
    "zero",
    "taylor_green",
    "perturbed_taylor_green",
    "shear",
    "single_mode",
    "random_besov",
)


@dataclass(frozen=True)
class ForcingSpec:
    """Deterministic time-independent body force.

    ``fixed_low_mode`` is the cellular force
    ``amplitude * (sin(k_f y), sin(k_f x)[, 0])``, solenoidal and mean-free.
    """

    kind: str = "none"
    amplitude: float = 0.0
    k_f: int = 1

    def __post_init__(self):
        if self.kind not in FORCING_KINDS:
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        if self.k_f < 1:
            raise ValueError(f"k_f must be >= 1, got {self.k_f}")

    def field(self, grid: Grid) -> SpectralField | None:
        if self.kind == "none" or self.amplitude == 0.0:
            return None
        xs = grid.coordinates()
        vals = np.zeros((grid.dim,) + grid.shape)
        vals[0] = self.amplitude * np.sin(self.k_f * xs[1])
        vals[1] = self.amplitude * np.sin(self.k_f * xs[0])
        return SpectralField.from_values(grid, vals)


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "taylor_green"
    amplitude: float = 1.0
    sigma: float = 0.5
    seed: int = 0
    k_min: int = 1
    k_max: int | None = None
    perturbation: float = 0.5

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"unknown initial condition kind {self.kind!r}")

    def field(self, grid: Grid) -> SpectralField:
        if self.kind == "zero":
            return SpectralField.zeros(grid, grid.dim)
        if self.kind == "taylor_green":
            return synthetic.taylor_green(grid) * self.amplitude
        if self.kind == "perturbed_taylor_green":
            k_max = 16 if self.k_max is None else self.k_max
            return synthetic.perturbed_taylor_green(
                grid, self.perturbation, self.seed, self.sigma, k_max
            )
        if self.kind == "shear":
            return synthetic.shear(grid) * self.amplitude
        if self.kind == "single_mode":
            k = (0, 1) + (0,) * (grid.dim - 2)
            return synthetic.single_mode(grid, k, axis=0, amplitude=self.amplitude)
        spec = synthetic.SyntheticSpec(
            kind="random_besov",
            sigma=self.sigma,
            seed=self.seed,
            k_min=self.k_min,
            k_max=self.k_max,
            amplitude=self.amplitude,
        )
        return synthetic.random_besov_field(grid, spec)


@dataclass(frozen=True)
class SolverConfig:
    grid: Grid
    viscosity: float
    dt: float
    t_end: float
    forcing: ForcingSpec = ForcingSpec()
    initial: InitialSpec = InitialSpec()
    snapshot_stride: int = 1

    def __post_init__(self):
        if not self.viscosity > 0:
            raise ValueError(f"viscosity must be positive, got {self.viscosity}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")

    @property
    def nsteps(self) -> int:
        steps = round(self.t_end / self.dt)
        if abs(steps * self.dt - self.t_end) > 1e-9 * max(self.t_end, 1.0):
            raise ValueError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        return steps


@dataclass(frozen=True, eq=False)
class Snapshot:
    t: float
    u: SpectralField
    p: SpectralField | None = None
    viscosity: float | None = None
    divergence_warning: bool = False


@dataclass(eq=False)
class Trajectory:
    """Stored snapshots at a uniform stride plus the data that generated them."""

    grid: Grid
    viscosity: float
    snapshots: list[Snapshot]
    forcing: SpectralField | None = None
    # truncation applied to u_i u_j by the dynamics (None: exact products)
    galerkin_cutoff: float | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]


@dataclass(eq=False)
class BudgetSeries:
    """Global energy budget sampled at every step.

    Cumulative integrals use cumulative Simpson quadrature over the samples.
    With D = 0 the balance reads
    ``E(T) - E(0) + cumulative_dissipation(T) = cumulative_injection(T)``.
    """

    times: np.ndarray
    kinetic_energy: np.ndarray
    viscous_dissipation: np.ndarray
    injection: np.ndarray
    cumulative_dissipation: np.ndarray = field(init=False)
    cumulative_injection: np.ndarray = field(init=False)

    def __post_init__(self):
        self.cumulative_dissipation = _cumulative(self.viscous_dissipation, self.times)
        self.cumulative_injection = _cumulative(self.injection, self.times)

    @property
    def balance_residual(self) -> float:
        de = self.kinetic_energy[-1] - self.kinetic_energy[0]
        return float(de + self.cumulative_dissipation[-1] - self.cumulative_injection[-1])

    @property
    def relative_balance_residual(self) -> float:
        scale = abs(self.cumulative_dissipation[-1])
        if scale == 0.0:
            return abs(self.balance_residual)
        return abs(self.balance_residual) / scale


def _cumulative(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    if len(t) < 2:
        return np.zeros_like(y)
    if len(t) == 2:
        return np.concatenate([[0.0], [0.5 * (y[0] + y[1]) * (t[1] - t[0])]])
    return cumulative_simpson(y, x=t, initial=0.0)


def _product_pairs(dim: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(dim) for j in range(i, dim)]


def truncated_products(u_real: np.ndarray, grid: Grid, cutoff: float | None = None) -> np.ndarray:
    """2/3-truncated spectra of ``u_i u_j``, shape ``(dim, dim, *spectral_shape)``."""
    pairs = _product_pairs(grid.dim)
    prods = np.stack([u_real[i] * u_real[j] for i, j in pairs])
    spec = forward(prods, grid) * grid.dealias_mask(cutoff)
    out = np.empty((grid.dim, grid.dim) + grid.spectral_shape, dtype=complex)
    for m, (i, j) in enumerate(pairs):
        out[i, j] = spec[m]
        out[j, i] = spec[m]
    return out


class NavierStokes:
    """Right-hand side and Lawson-RK4 stepper for one (grid, nu, dt, forcing)."""

    def __init__(self, grid: Grid, viscosity: float, dt: float, forcing: SpectralField | None = None):
        self.grid = grid
        self.viscosity = viscosity
        self.dt = dt
        self.mask = grid.dealias_mask()
        self.forcing = None if forcing is None else forcing.coeffs
        decay = -viscosity * grid.k2 * dt
        self.ef = np.exp(decay)
        self.ef_half = np.exp(0.5 * decay)

    def rhs(self, uhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Projected nonlinear term plus forcing; also returns real-space u."""
        g = self.grid
        u = inverse(uhat, g)
        prods = truncated_products(u, g)
        kd = g.derivative_wavenumbers
        div = np.stack([sum(1j * kd[j] * prods[i, j] for j in range(g.dim)) for i in range(g.dim)])
        nl = -leray_coeffs(div, g)
        if self.forcing is not None:
            nl = nl + self.forcing
        return nl, u

    def step(self, uhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Advance one dt; returns the new coefficients and real-space u at the old time."""
        dt, ef, eh = self.dt, self.ef, self.ef_half
        k1, u_real = self.rhs(uhat)
        k2, _ = self.rhs(eh * (uhat + 0.5 * dt * k1))
        k3, _ = self.rhs(eh * uhat + 0.5 * dt * k2)
        k4, _ = self.rhs(ef * uhat + dt * eh * k3)
        new = ef * uhat + (dt / 6.0) * (ef * k1 + 2.0 * eh * (k2 + k3) + k4)
        return new, u_real

    def check_cfl(self, u_real: np.ndarray):
        umax = float(pointwise_magnitude(u_real).max())
        if not math.isfinite(umax):
            raise BlowUpError("non-finite velocity encountered")
        if umax > 0 and self.dt > CFL_NUMBER * self.grid.spacing / umax:
            raise CFLViolation(
                f"dt={self.dt:g} exceeds CFL limit {CFL_NUMBER * self.grid.spacing / umax:g} "
                f"(max|u|={umax:g})"
            )
        return umax

    def budget(self, uhat: np.ndarray) -> tuple[float, float, float]:
        g = self.grid
        w = g.mode_weights
        e2 = np.sum(np.abs(uhat) ** 2, axis=0)
        energy = 0.5 * g.volume * float(np.sum(w * e2))
        diss = self.viscosity * g.volume * float(np.sum(w * g.k2 * e2))
        inj = 0.0
        if self.forcing is not None:
            inj = g.volume * float(np.sum(w * np.real(np.conj(uhat) * self.forcing)))
        return energy, diss, inj


def solve_pressure(
    u: SpectralField, f: SpectralField | None = None, cutoff: float | None = None
) -> SpectralField:
    """Mean-free pressure from ``-lap p = dd:(u u) - div f`` using truncated products."""
    g = u.grid
    prods = truncated_products(u.values, g, cutoff)
    ks = g.wavenumbers
    rhs = -sum(ks[i] * ks[j] * prods[i, j] for i in range(g.dim) for j in range(g.dim))
    if f is not None:
        rhs = rhs - 1j * sum(ks[j] * f.coeffs[j] for j in range(g.dim))
    k2 = g.k2.copy()
    k2[(0,) * g.dim] = 1.0
    p = rhs / k2
    p[(0,) * g.dim] = 0.0
    return SpectralField(g, p[None])


def step(s: Snapshot, cfg: SolverConfig) -> Snapshot:
    """Advance a snapshot by one ``cfg.dt``."""
    ns = NavierStokes(cfg.grid, cfg.viscosity, cfg.dt, cfg.forcing.field(cfg.grid))
    new, u_real = ns.step(s.u.coeffs)
    ns.check_cfl(u_real)
    if not np.all(np.isfinite(new)):
        raise BlowUpError(f"non-finite state after step at t={s.t + cfg.dt:g}")
    u = SpectralField(cfg.grid, new)
    return Snapshot(s.t + cfg.dt, u, solve_pressure(u), cfg.viscosity)


def initial_state(cfg: SolverConfig) -> SpectralField:
    u0 = cfg.initial.field(cfg.grid)
    # the dynamics live on the 2/3-truncated, solenoidal subspace
    coeffs = leray_coeffs(u0.coeffs * cfg.grid.dealias_mask(), cfg.grid)
    return SpectralField(cfg.grid, coeffs)


def run(cfg: SolverConfig, u0: SpectralField | None = None) -> tuple[Trajectory, BudgetSeries]:
    """Integrate to ``t_end`` storing every ``snapshot_stride``-th state."""
    grid = cfg.grid
    nsteps = cfg.nsteps
    if nsteps % cfg.snapshot_stride:
        raise ValueError(
            f"snapshot_stride={cfg.snapshot_stride} does not divide the {nsteps} steps"
        )
    forcing = cfg.forcing.field(grid)
    ns = NavierStokes(grid, cfg.viscosity, cfg.dt, forcing)
    if u0 is None:
        u0 = initial_state(cfg)
    uhat = u0.coeffs.copy()

    times = np.arange(nsteps + 1) * cfg.dt
    energy = np.empty(nsteps + 1)
    diss = np.empty(nsteps + 1)
    inj = np.empty(nsteps + 1)
    snaps = []
    umax0 = None

    def record(i, coeffs):
        energy[i], diss[i], inj[i] = ns.budget(coeffs)
        if i % cfg.snapshot_stride == 0:
            u = SpectralField(grid, coeffs)
            snaps.append(Snapshot(float(times[i]), u, solve_pressure(u), cfg.viscosity))

    record(0, uhat)
    for i in range(1, nsteps + 1):
        new, u_real = ns.step(uhat)
        umax = ns.check_cfl(u_real)
        if umax0 is None:
            umax0 = umax
        elif umax0 > 0 and umax > BLOWUP_FACTOR * umax0:
            raise BlowUpError(f"max|u| grew from {umax0:g} to {umax:g} by t={times[i - 1]:g}")
        if not np.all(np.isfinite(new)):
            raise BlowUpError(f"non-finite state at t={times[i]:g}")
        uhat = new
        record(i, uhat)
        if i % max(1, nsteps // 10) == 0:
            log.debug("t=%.4g E=%.6g", times[i], energy[i])

    trajectory = Trajectory(grid, cfg.viscosity, snaps, forcing, galerkin_cutoff=grid.n / 3.0)
    return trajectory, BudgetSeries(times, energy, diss, inj)
