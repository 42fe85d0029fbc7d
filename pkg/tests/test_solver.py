import math

import numpy as np
import pytest

from lflux.solver import (
    BlowUpError,
    CFLViolation,
    ForcingSpec,
    InitialSpec,
    NavierStokes,
    NumericalError,
    Snapshot,
    SolverConfig,
    initial_state,
    run,
    solve_pressure,
    step,
)
from lflux.spectral import Grid, SpectralField, divergence, leray_project, mean
from lflux.synthetic import SyntheticSpec, random_besov_field, shear, taylor_green


def cfg(kind="taylor_green", n=32, nu=0.05, dt=1e-2, t_end=0.1, stride=1, **kw):
    return SolverConfig(Grid(2, n), nu, dt, t_end, initial=InitialSpec(kind=kind), snapshot_stride=stride, **kw)


class TestConfig:
    def test_rejects_nonpositive_viscosity(self):
        with pytest.raises(ValueError):
            cfg(nu=0.0)

    def test_rejects_t_end_off_step(self):
        with pytest.raises(ValueError):
            cfg(dt=0.03, t_end=0.1).nsteps

    def test_stride_must_divide_steps(self):
        with pytest.raises(ValueError):
            run(cfg(dt=0.01, t_end=0.1, stride=3))

    def test_unknown_kinds(self):
        with pytest.raises(ValueError):
            InitialSpec(kind="vortex")
        with pytest.raises(ValueError):
            ForcingSpec(kind="stochastic")


class TestForcing:
    def test_solenoidal_and_mean_free(self):
        g = Grid(2, 32)
        f = ForcingSpec("fixed_low_mode", amplitude=0.3, k_f=2).field(g)
        assert np.max(np.abs(divergence(f).values)) < 1e-14
        assert np.max(np.abs(mean(f))) < 1e-15

    def test_none(self):
        assert ForcingSpec().field(Grid(2, 16)) is None


class TestExactSolutions:
    def test_zero_stays_zero(self):
        traj, budget = run(cfg("zero", t_end=1.0, dt=0.05))
        assert all(np.all(s.u.coeffs == 0) for s in traj)
        for series in (budget.kinetic_energy, budget.viscous_dissipation, budget.injection):
            assert np.all(series == 0)

    def test_shear_decay(self, shear_run):
        traj, _ = shear_run
        last = traj[-1]
        assert last.t == pytest.approx(1.0)
        exact = math.exp(-0.1 * last.t) * shear(traj.grid).values
        assert np.max(np.abs(last.u.values - exact)) < 1e-10

    def test_taylor_green_decay(self, tg_run):
        traj, budget = tg_run
        last = traj[-1]
        exact = math.exp(-2 * 0.05 * last.t) * taylor_green(traj.grid).values
        assert np.max(np.abs(last.u.values - exact)) < 1e-8
        e_exact = math.pi**2 * np.exp(-4 * 0.05 * budget.times)
        assert np.max(np.abs(budget.kinetic_energy - e_exact) / e_exact) < 1e-6
        assert budget.kinetic_energy[0] == pytest.approx(math.pi**2, rel=1e-14)

    def test_single_step_matches_run(self):
        c = cfg(t_end=0.01)
        traj, _ = run(c)
        s = step(Snapshot(0.0, initial_state(c), viscosity=c.viscosity), c)
        assert np.max(np.abs(s.u.coeffs - traj[-1].u.coeffs)) == 0.0


class TestPressure:
    def test_shear_has_zero_pressure(self):
        p = solve_pressure(shear(Grid(2, 32)))
        assert np.max(np.abs(p.values)) < 1e-15

    def test_taylor_green_pressure(self):
        # oracle: Euler residual u.grad u + grad p = 0 by second-order finite differences
        g = Grid(2, 64)
        x, y = g.coordinates()
        p = solve_pressure(taylor_green(g)).values[0]
        expected = 0.25 * (np.cos(2 * x) + np.cos(2 * y))
        assert np.max(np.abs(p - expected)) < 1e-14

        h = 1e-4
        u = lambda x, y: np.sin(x) * np.cos(y)  # noqa: E731
        v = lambda x, y: -np.cos(x) * np.sin(y)  # noqa: E731
        pp = lambda x, y: 0.25 * (np.cos(2 * x) + np.cos(2 * y))  # noqa: E731
        dx = lambda f: (f(x + h, y) - f(x - h, y)) / (2 * h)  # noqa: E731
        dy = lambda f: (f(x, y + h) - f(x, y - h)) / (2 * h)  # noqa: E731
        rx = u(x, y) * dx(u) + v(x, y) * dy(u) + dx(pp)
        ry = u(x, y) * dx(v) + v(x, y) * dy(v) + dy(pp)
        assert max(np.abs(rx).max(), np.abs(ry).max()) < 1e-7

    def test_poisson_residual_random_field(self):
        # oracle: alias-free products on a 2n numpy grid, truncated to the solver band
        g = Grid(2, 64)
        u = random_besov_field(g, SyntheticSpec(sigma=0.5, seed=2))
        p = solve_pressure(u)
        n, m = g.n, 2 * g.n
        k = np.fft.fftfreq(m, 1 / m)
        KX, KY = np.meshgrid(k, k, indexing="ij")
        up = []
        for i in range(2):
            full = np.zeros((m, m), dtype=complex)
            src = np.fft.fft2(u.values[i]) / n**2
            idx = np.r_[0 : n // 2, m - n // 2 : m]
            sidx = np.r_[0 : n // 2, n - n // 2 : n]
            full[np.ix_(idx, idx)] = src[np.ix_(sidx, sidx)]
            up.append(np.real(np.fft.ifft2(full) * m**2))
        ks = (KX, KY)
        div2 = sum(-ks[i] * ks[j] * np.fft.fft2(up[i] * up[j]) / m**2 for i in range(2) for j in range(2))
        band = (np.abs(KX) <= n / 3) & (np.abs(KY) <= n / 3)
        lap_p = np.zeros((m, m), dtype=complex)
        pc = np.fft.fft2(p.values[0]) / n**2
        idx = np.r_[0 : n // 2, m - n // 2 : m]
        sidx = np.r_[0 : n // 2, n - n // 2 : n]
        lap_p[np.ix_(idx, idx)] = pc[np.ix_(sidx, sidx)]
        lap_p *= -(KX**2 + KY**2)
        resid = (lap_p + div2) * band
        l2 = math.sqrt((2 * math.pi) ** 2 * np.sum(np.abs(resid) ** 2))
        cell = (2 * math.pi / n) ** 2
        l3sq = (cell * np.sum(np.sqrt(np.sum(u.values**2, axis=0)) ** 3)) ** (2 / 3)
        assert l2 / l3sq < 1e-12

    def test_mean_free(self):
        g = Grid(2, 32)
        u = random_besov_field(g, SyntheticSpec(sigma=0.5, seed=5))
        assert mean(solve_pressure(u))[0] == 0.0


class TestInvariants:
    def test_energy_balance_regression_runs(self, tg_run, shear_run, perturbed_tg_run, forced_run, small_forced_run):
        for _, budget in (tg_run, shear_run, perturbed_tg_run, forced_run, small_forced_run):
            assert budget.relative_balance_residual < 1e-5

    def test_divergence_free_every_snapshot(self, perturbed_tg_run, small_forced_run):
        for traj, _ in (perturbed_tg_run, small_forced_run):
            for s in traj:
                assert np.max(np.abs(divergence(s.u).values)) < 1e-12

    def test_forced_plateau(self, forced_run):
        _, b = forced_run
        half = len(b.times) // 2
        dedt = np.gradient(b.kinetic_energy, b.times)[half:]
        assert np.mean(np.abs(dedt)) < 0.05 * np.mean(b.injection[half:])
        # laminar steady state (A / nu) (sin y, sin x): energy A^2 / nu^2 * (2 pi)^2 / 2
        e_steady = (0.1 / 0.2) ** 2 * (2 * math.pi) ** 2 / 2
        assert b.kinetic_energy[-1] == pytest.approx(e_steady, rel=1e-3)

    def test_fourth_order_in_time(self):
        g = Grid(2, 32)

        def final(dt):
            c = SolverConfig(
                g,
                0.01,
                dt,
                1.0,
                initial=InitialSpec(kind="perturbed_taylor_green", perturbation=0.5, k_max=8),
                snapshot_stride=round(1.0 / dt),
            )
            return run(c)[0][-1].u.values

        ref = final(0.0625 / 16)
        errs = [np.max(np.abs(final(dt) - ref)) for dt in (0.0625, 0.03125, 0.015625)]
        for a, b in zip(errs, errs[1:]):
            assert 12 <= a / b <= 20

    def test_taylor_green_is_integrated_exactly(self):
        # the integrating factor makes the linear decay exact at any stable dt
        errs = []
        for dt in (0.02, 0.01):
            traj, _ = run(cfg(dt=dt, t_end=0.2, stride=round(0.2 / dt)))
            exact = math.exp(-2 * 0.05 * 0.2) * taylor_green(traj.grid).values
            errs.append(np.max(np.abs(traj[-1].u.values - exact)))
        assert max(errs) < 1e-13


class TestThreeDimensions:
    def test_taylor_green_energy_balance(self):
        g = Grid(3, 16)
        c = SolverConfig(g, 0.05, 0.01, 0.2, initial=InitialSpec(kind="taylor_green"), snapshot_stride=20)
        traj, budget = run(c)
        assert budget.relative_balance_residual < 1e-5
        assert np.max(np.abs(divergence(traj[-1].u).values)) < 1e-12
        assert budget.kinetic_energy[-1] < budget.kinetic_energy[0]


class TestFailures:
    def test_cfl_violation(self):
        c = SolverConfig(Grid(2, 32), 0.01, 0.5, 1.0, initial=InitialSpec(kind="taylor_green", amplitude=5.0))
        with pytest.raises(CFLViolation):
            run(c)

    def test_cfl_is_numerical_error(self):
        assert issubclass(CFLViolation, NumericalError)
        assert issubclass(BlowUpError, NumericalError)

    def test_blowup_on_nonfinite_state(self):
        g = Grid(2, 16)
        ns = NavierStokes(g, 0.1, 0.01)
        bad = np.full((2,) + g.shape, np.nan)
        with pytest.raises(BlowUpError):
            ns.check_cfl(bad)

    def test_initial_state_is_projected_and_dealiased(self):
        c = cfg("random_besov", n=32)
        u0 = initial_state(c)
        assert np.max(np.abs(leray_project(u0).coeffs - u0.coeffs)) < 1e-15
        assert np.all(u0.coeffs * (1 - c.grid.dealias_mask()) == 0)
        assert isinstance(u0, SpectralField)
