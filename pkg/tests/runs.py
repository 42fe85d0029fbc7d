"""Regression runs shared by the fixtures and the acceptance script (computed once per process)."""

import time
from functools import cache, wraps

from lflux.solver import ForcingSpec, InitialSpec, SolverConfig, run
from lflux.spectral import Grid

ELAPSED: dict[str, float] = {}


def timed(fn):
    """Cache ``fn`` and record the wall time of its single evaluation."""

    @cache
    @wraps(fn)
    def wrapper():
        t0 = time.perf_counter()
        out = fn()
        ELAPSED[fn.__name__] = time.perf_counter() - t0
        return out

    return wrapper


@timed
def taylor_green_run():
    return run(SolverConfig(Grid(2, 64), 0.05, 1e-3, 1.0, initial=InitialSpec(kind="taylor_green"), snapshot_stride=10))


@timed
def shear_run():
    return run(SolverConfig(Grid(2, 64), 0.1, 1e-3, 1.0, initial=InitialSpec(kind="shear"), snapshot_stride=100))


@timed
def perturbed_taylor_green_run():
    cfg = SolverConfig(
        Grid(2, 128),
        1e-3,
        1e-3,
        1.0,
        initial=InitialSpec(kind="perturbed_taylor_green", perturbation=0.5, k_max=16),
        snapshot_stride=10,
    )
    return run(cfg)


@timed
def forced_run():
    cfg = SolverConfig(
        Grid(2, 64),
        0.2,
        0.02,
        40.0,
        forcing=ForcingSpec("fixed_low_mode", amplitude=0.1, k_f=1),
        initial=InitialSpec(kind="zero"),
        snapshot_stride=100,
    )
    return run(cfg)


@timed
def small_forced_run():
    """Short forced run with a rough start; exercises the forcing terms."""
    cfg = SolverConfig(
        Grid(2, 32),
        0.02,
        5e-3,
        0.5,
        forcing=ForcingSpec("fixed_low_mode", amplitude=1.0, k_f=2),
        initial=InitialSpec(kind="random_besov", sigma=0.5, amplitude=3.0, seed=3),
        snapshot_stride=5,
    )
    return run(cfg)


REGRESSION_RUNS = {
    "taylor_green": taylor_green_run,
    "shear": shear_run,
    "perturbed_taylor_green": perturbed_taylor_green_run,
    "forced": forced_run,
    "small_forced": small_forced_run,
}
