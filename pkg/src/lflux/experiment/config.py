"""Experiment configuration and its TOML file form.

Grammar (all sections optional except ``[solver]``)::

    [solver]
    dim = 2                 # 2 or 3
    n = 64                  # power of two >= 8
    viscosity = 0.05
    dt = 0.001
    t_end = 1.0
    snapshot_stride = 100

    [solver.initial]        # kind: zero | taylor_green | perturbed_taylor_green
    kind = "taylor_green"   #       | shear | single_mode | random_besov
    amplitude = 1.0         # sigma, seed, k_min, k_max, perturbation as needed

    [solver.forcing]        # kind: none | fixed_low_mode
    kind = "none"

    [analysis]
    ells = [0.1, 0.3, 0.6]
    orders = [2.0, 3.0]
    separations = []        # empty: dyadic multiples of the grid spacing
    fit_window = []         # empty: [4 dx, ell0 / 4]
    mollifier = "bump"      # or "gaussian"
    besov_sigma = 0.5
    synthetic_sigmas = [0.5]

    [sweep]
    viscosities = [1e-3, 5e-4, 2.5e-4, 1.25e-4]
    seeds = [0]

    [output]
    directory = "out"

Comments start with ``#``.  Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..solver import ForcingSpec, InitialSpec, SolverConfig
from ..spectral import Grid


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class AnalysisConfig:
    ells: tuple[float, ...] = (0.1, 0.3, 0.6)
    orders: tuple[float, ...] = (2.0, 3.0)
    separations: tuple[float, ...] = ()
    fit_window: tuple[float, ...] = ()
    mollifier: str = "bump"
    besov_sigma: float = 0.5
    synthetic_sigmas: tuple[float, ...] = (0.5,)

    def __post_init__(self):
        if self.mollifier not in ("bump", "gaussian"):
            raise ConfigError(f"unknown mollifier {self.mollifier!r}")
        if self.fit_window and (len(self.fit_window) != 2 or not 0 < self.fit_window[0] < self.fit_window[1]):
            raise ConfigError(f"fit_window must be [lo, hi] with 0 < lo < hi, got {list(self.fit_window)}")
        if any(not e > 0 for e in self.ells):
            raise ConfigError("filter widths must be positive")

    @property
    def window(self) -> tuple[float, float] | None:
        return tuple(self.fit_window) if self.fit_window else None


@dataclass(frozen=True)
class SweepConfig:
    viscosities: tuple[float, ...] = ()
    seeds: tuple[int, ...] = (0,)


@dataclass(frozen=True)
class ExperimentConfig:
    solver: SolverConfig
    analysis: AnalysisConfig = AnalysisConfig()
    sweep: SweepConfig = SweepConfig()
    output: str = "out"

    def with_overrides(self, nu=None, ell=None, seed=None, out=None) -> ExperimentConfig:
        cfg = self
        if nu:
            solver = dataclasses.replace(cfg.solver, viscosity=float(nu[0]))
            cfg = dataclasses.replace(cfg, solver=solver, sweep=dataclasses.replace(cfg.sweep, viscosities=tuple(nu)))
        if ell:
            cfg = dataclasses.replace(cfg, analysis=dataclasses.replace(cfg.analysis, ells=tuple(ell)))
        if seed is not None:
            initial = dataclasses.replace(cfg.solver.initial, seed=int(seed))
            cfg = dataclasses.replace(
                cfg,
                solver=dataclasses.replace(cfg.solver, initial=initial),
                sweep=dataclasses.replace(cfg.sweep, seeds=(int(seed),)),
            )
        if out is not None:
            cfg = dataclasses.replace(cfg, output=str(out))
        return cfg


# -- dict form -----------------------------------------------------------------------


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def to_dict(cfg: ExperimentConfig) -> dict:
    s = cfg.solver
    return {
        "solver": {
            "dim": s.grid.dim,
            "n": s.grid.n,
            "viscosity": s.viscosity,
            "dt": s.dt,
            "t_end": s.t_end,
            "snapshot_stride": s.snapshot_stride,
            "initial": _drop_none(dataclasses.asdict(s.initial)),
            "forcing": dataclasses.asdict(s.forcing),
        },
        "analysis": {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(cfg.analysis).items()},
        "sweep": {"viscosities": list(cfg.sweep.viscosities), "seeds": list(cfg.sweep.seeds)},
        "output": {"directory": cfg.output},
    }


def _take(section: dict, cls, name: str, convert=None) -> dict:
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    out = dict(section)
    if convert:
        for k, fn in convert.items():
            if k in out:
                out[k] = fn(out[k])
    return out


def _floats(v) -> tuple[float, ...]:
    return tuple(float(x) for x in v)


def from_dict(d: dict) -> ExperimentConfig:
    unknown = set(d) - {"solver", "analysis", "sweep", "output"}
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    if "solver" not in d:
        raise ConfigError("missing [solver] section")
    try:
        s = dict(d["solver"])
        initial = InitialSpec(**_take(s.pop("initial", {}), InitialSpec, "solver.initial"))
        forcing = ForcingSpec(**_take(s.pop("forcing", {}), ForcingSpec, "solver.forcing"))
        allowed = {"dim", "n", "viscosity", "dt", "t_end", "snapshot_stride"}
        if set(s) - allowed:
            raise ConfigError(f"unknown key(s) in [solver]: {sorted(set(s) - allowed)}")
        missing = {"n", "viscosity", "dt", "t_end"} - set(s)
        if missing:
            raise ConfigError(f"missing key(s) in [solver]: {sorted(missing)}")
        solver = SolverConfig(
            grid=Grid(int(s.get("dim", 2)), int(s["n"])),
            viscosity=float(s["viscosity"]),
            dt=float(s["dt"]),
            t_end=float(s["t_end"]),
            forcing=forcing,
            initial=initial,
            snapshot_stride=int(s.get("snapshot_stride", 1)),
        )
        solver.nsteps  # t_end must be a multiple of dt
        conv = {k: _floats for k in ("ells", "orders", "separations", "fit_window", "synthetic_sigmas")}
        analysis = AnalysisConfig(**_take(d.get("analysis", {}), AnalysisConfig, "analysis", conv))
        sweep = SweepConfig(
            **_take(
                d.get("sweep", {}),
                SweepConfig,
                "sweep",
                {"viscosities": _floats, "seeds": lambda v: tuple(int(x) for x in v)},
            )
        )
        out = d.get("output", {})
        if set(out) - {"directory"}:
            raise ConfigError(f"unknown key(s) in [output]: {sorted(set(out) - {'directory'})}")
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    vs = sweep.viscosities
    if any(not (v > 0 and math.isfinite(v)) for v in vs):
        raise ConfigError("sweep viscosities must be positive")
    return ExperimentConfig(solver, analysis, sweep, str(out.get("directory", "out")))


# -- files ---------------------------------------------------------------------------------


def loads(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return from_dict(data)


def dumps(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def bundled_configs() -> list[str]:
    root = resources.files(__package__) / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load(path_or_name: str | Path) -> ExperimentConfig:
    """Read a config file, or a bundled config by bare name (e.g. ``taylor_green``)."""
    path = Path(path_or_name)
    if path.is_file():
        return loads(path.read_text())
    name = str(path_or_name)
    if name in bundled_configs():
        return loads((resources.files(__package__) / "configs" / f"{name}.toml").read_text())
    raise ConfigError(f"no config file or bundled config named {name!r} (bundled: {bundled_configs()})")


def save(cfg: ExperimentConfig, path: str | Path):
    Path(path).write_text(dumps(cfg))
