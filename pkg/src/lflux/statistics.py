"""Structure functions, Besov estimates, exponent calculus and scaling fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .coarse_grain import Mollifier, scale_terms
from .spectral import TWO_PI, SpectralField, pointwise_magnitude

# -- structure functions -------------------------------------------------------------


def default_directions(dim: int) -> tuple[tuple[int, ...], ...]:
    """Axis directions plus the diagonals of every coordinate plane."""
    axes = [tuple(int(i == a) for i in range(dim)) for a in range(dim)]
    diags = []
    for a in range(dim):
        for b in range(a + 1, dim):
            for sign in (1, -1):
                e = [0] * dim
                e[a], e[b] = 1, sign
                diags.append(tuple(e))
    return tuple(axes + diags)


def dyadic_separations(n: int, r_max: float = math.pi) -> np.ndarray:
    """``dx * 2^j`` up to ``r_max``."""
    dx = TWO_PI / n
    out = []
    s = 1
    while s * dx <= r_max * (1 + 1e-12) and s <= n // 2:
        out.append(s * dx)
        s *= 2
    return np.array(out)


@dataclass(frozen=True, eq=False)
class StructureFunctionTable:
    """``S_p(r) = <|u(x + r) - u(x)|^p>`` averaged over x and directions.

    Separation ``r`` is ``s * dx`` for an integer step count ``s``; along a
    diagonal direction ``e`` the lattice shift is ``s * e``, so the physical
    separation is ``|e| r``.  Power laws are unaffected (only their prefactor
    is), and ``per_direction`` keeps the unaveraged values.
    """

    orders: tuple[float, ...]
    separations: np.ndarray
    directions: tuple[tuple[int, ...], ...]
    values: np.ndarray  # (orders, separations)
    per_direction: np.ndarray  # (orders, directions, separations)
    moments: np.ndarray  # <|u|^p> per order
    t: float | None = None

    def order_index(self, p: float) -> int:
        for i, q in enumerate(self.orders):
            if math.isclose(q, p):
                return i
        raise KeyError(f"order {p} not tabulated (have {self.orders})")

    def S(self, p: float) -> np.ndarray:
        return self.values[self.order_index(p)]

    def moment(self, p: float) -> float:
        return float(self.moments[self.order_index(p)])


def _steps(separations, dx: float) -> np.ndarray:
    r = np.asarray(separations, dtype=float)
    steps = np.rint(r / dx)
    if np.any(np.abs(steps * dx - r) > 1e-9 * np.maximum(r, dx)) or np.any(r < 0):
        raise ValueError("separations must be non-negative integer multiples of the grid spacing")
    return steps.astype(int)


def structure_function(
    u: SpectralField,
    orders=(2, 3),
    separations=None,
    directions=None,
    t: float | None = None,
) -> StructureFunctionTable:
    grid = u.grid
    vals = u.values
    if separations is None:
        separations = dyadic_separations(grid.n)
    steps = _steps(separations, grid.spacing)
    directions = tuple(default_directions(grid.dim) if directions is None else directions)
    orders = tuple(float(p) for p in orders)

    per = np.zeros((len(orders), len(directions), len(steps)))
    for di, e in enumerate(directions):
        for si, s in enumerate(steps):
            if s == 0:
                continue
            shifted = np.roll(vals, shift=tuple(-s * c for c in e), axis=grid.axes)
            inc = pointwise_magnitude(shifted - vals)
            for pi, p in enumerate(orders):
                per[pi, di, si] = np.mean(inc**p)
    mag = pointwise_magnitude(vals)
    moments = np.array([np.mean(mag**p) for p in orders])
    return StructureFunctionTable(
        orders=orders,
        separations=steps * grid.spacing,
        directions=directions,
        values=per.mean(axis=1),
        per_direction=per,
        moments=moments,
        t=t,
    )


def mean_table(tables: list[StructureFunctionTable]) -> StructureFunctionTable:
    """Average of tables sharing orders, separations and directions."""
    if not tables:
        raise ValueError("no tables to average")
    first = tables[0]
    return StructureFunctionTable(
        orders=first.orders,
        separations=first.separations,
        directions=first.directions,
        values=np.mean([tb.values for tb in tables], axis=0),
        per_direction=np.mean([tb.per_direction for tb in tables], axis=0),
        moments=np.mean([tb.moments for tb in tables], axis=0),
    )


# -- Besov estimates -----------------------------------------------------------------


@dataclass(frozen=True)
class BesovEstimate:
    sigma: float
    order: float
    C0: float
    C1: float
    argmax_r: float | None

    @property
    def norm(self) -> float:
        return (self.C0 + self.C1) ** (1.0 / self.order)


def _check_sigma(sigma: float):
    if not 0.0 < sigma <= 1.0:
        raise ValueError(f"sigma must lie in (0, 1], got {sigma}")


def besov_estimate(
    table: StructureFunctionTable, sigma: float, ell0: float = TWO_PI, order: float = 3
) -> BesovEstimate:
    """Optimal constants in ``<|u|^p> <= C0`` and ``S_p(r) <= C1 |r/ell0|^(sigma p)``."""
    _check_sigma(sigma)
    S = table.S(order)
    r = table.separations
    sel = (r > 0) & (r <= ell0 * (1 + 1e-12))
    C1, arg = 0.0, None
    if np.any(sel):
        weighted = S[sel] * (r[sel] / ell0) ** (-sigma * order)
        i = int(np.argmax(weighted))
        C1, arg = float(weighted[i]), float(r[sel][i])
    return BesovEstimate(sigma, float(order), table.moment(order), C1, arg)


@dataclass(frozen=True, eq=False)
class C0Ratio:
    separations: np.ndarray
    ratio: np.ndarray
    small_r_slope: float
    trend: str  # "decreasing" as r -> 0 signals the vanishing-ratio subspace


def c0_ratio(table: StructureFunctionTable, sigma: float, order: float = 3, flat_tol: float = 0.1) -> C0Ratio:
    """``S_p(r)^(1/p) / r^sigma`` and its log-slope over the three smallest r."""
    _check_sigma(sigma)
    r = table.separations
    sel = r > 0
    r = r[sel]
    ratio = table.S(order)[sel] ** (1.0 / order) / r**sigma
    good = ratio > 0
    if good.sum() < 2:
        return C0Ratio(r, ratio, float("nan"), "zero")
    rs, qs = r[good][:3], ratio[good][:3]
    slope = float(np.polyfit(np.log(rs), np.log(qs), 1)[0])
    if slope > flat_tol:
        trend = "decreasing"
    elif slope < -flat_tol:
        trend = "increasing"
    else:
        trend = "flat"
    return C0Ratio(r, ratio, slope, trend)


# -- exponent calculus ------------------------------------------------------------------


def sigma_of_alpha(alpha: float) -> float:
    """Critical smoothness ``(1 + alpha) / (3 - alpha)`` for dissipation ~ nu^alpha."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    return (1.0 + alpha) / (3.0 - alpha)


def alpha_of_sigma(sigma: float) -> float:
    """Dissipation exponent ``(3 sigma - 1) / (sigma + 1)`` of the upper bound."""
    _check_sigma(sigma)
    return (3.0 * sigma - 1.0) / (sigma + 1.0)


def dissipation_length(nu: float, sigma: float) -> float:
    """``nu^(1/(sigma+1))`` with unit prefactor."""
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    _check_sigma(sigma)
    return nu ** (1.0 / (sigma + 1.0))


def model_flux(ell: float, sigma: float) -> float:
    """Flux model ``ell^(3 sigma - 1)`` with unit prefactor."""
    return ell ** (3.0 * sigma - 1.0)


def model_dissipation(nu: float, ell: float, sigma: float) -> float:
    """Resolved-dissipation model ``nu ell^(2 (sigma - 1))`` with unit prefactor."""
    return nu * ell ** (2.0 * (sigma - 1.0))


# -- ensemble accumulation ------------------------------------------------------------


@dataclass
class Accumulator:
    """Running count, mean and sum of squared deviations of array samples.

    ``merge`` combines two accumulators with the pairwise update, so partial
    results from independent workers can be joined in any order.
    """

    count: int = 0
    mean: np.ndarray | float = 0.0
    m2: np.ndarray | float = 0.0

    def add(self, x) -> Accumulator:
        return self.merge(Accumulator(1, np.asarray(x, dtype=float), np.zeros_like(np.asarray(x, dtype=float))))

    def merge(self, other: Accumulator) -> Accumulator:
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, np.copy(other.mean), np.copy(other.m2)
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.count / n)
        self.m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        self.count = n
        return self

    @property
    def variance(self):
        if self.count < 2:
            return np.zeros_like(self.mean)
        return self.m2 / (self.count - 1)


# -- scaling fits ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScalingFit:
    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    local_slopes: np.ndarray
    drift: bool

    @property
    def fit_range(self) -> tuple[float, float]:
        return float(self.x.min()), float(self.x.max())

    def predict(self, x) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def scaling_fit(xs, ys, window: tuple[float, float] | None = None, drift_tol: float = 0.05) -> ScalingFit:
    """Least-squares power law ``y = A x^slope`` in log-log coordinates.

    ``local_slopes`` are fits over consecutive triples.  ``drift`` is raised
    when they change monotonically by more than ``drift_tol`` across the
    range, the signature of a slowly varying correction to the power law.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ValueError("xs and ys must have the same length")
    if window is not None:
        lo, hi = window
        sel = (x >= lo * (1 - 1e-12)) & (x <= hi * (1 + 1e-12))
        x, y = x[sel], y[sel]
    if x.size < 3:
        raise ValueError(f"need at least 3 points for a scaling fit, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("scaling fit requires positive values")
    order = np.argsort(x)
    x, y = x[order], y[order]
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = intercept + slope * lx
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    local = np.array([np.polyfit(lx[i : i + 3], ly[i : i + 3], 1)[0] for i in range(x.size - 2)])
    steps = np.diff(local)
    monotone = local.size >= 2 and (np.all(steps > 0) or np.all(steps < 0))
    drift = bool(monotone and np.ptp(local) > drift_tol)
    return ScalingFit(x, y, float(slope), float(intercept), r2, local, drift)


# -- flux scaling across filter widths ---------------------------------------------


QUANTITIES = ("flux_l1", "cumulant_l1", "resolved_dissipation")


@dataclass(frozen=True, eq=False)
class FluxScalingReport:
    """Norms of flux, cumulant and resolved dissipation versus ell.

    ``norms[q]`` has shape ``(fields, ells)``; ``slopes[q]`` holds the
    per-field fitted exponents and ``mean_slopes[q]`` their ensemble mean.
    """

    ells: np.ndarray
    norms: dict[str, np.ndarray]
    slopes: dict[str, np.ndarray]
    status: str
    viscosity: float
    fits: dict[str, list[ScalingFit]] = field(default_factory=dict)

    @property
    def mean_slopes(self) -> dict[str, float]:
        return {q: float(np.mean(s)) if s.size else float("nan") for q, s in self.slopes.items()}


def flux_scaling_report(
    fields: list[SpectralField],
    ells,
    m: Mollifier | None = None,
    viscosity: float = 1.0,
    degenerate_tol: float = 1e-14,
) -> FluxScalingReport:
    if not fields:
        raise ValueError("no fields given")
    grid = fields[0].grid
    ells = np.sort(np.asarray(ells, dtype=float))
    lo, hi = 4 * grid.spacing, math.pi / 2
    if ells.size < 3:
        raise ValueError("need at least 3 filter widths")
    if ells[0] < lo * (1 - 1e-9) or ells[-1] > hi * (1 + 1e-9):
        raise ValueError(f"filter widths must lie in [{lo:.6g}, {hi:.6g}] for n={grid.n}")

    cell = grid.spacing**grid.dim
    norms = {q: np.zeros((len(fields), ells.size)) for q in QUANTITIES}
    for fi, u in enumerate(fields):
        if u.grid != grid:
            raise ValueError("all fields must share one grid")
        for li, ell in enumerate(ells):
            terms = scale_terms(u, ell, m)
            norms["flux_l1"][fi, li] = cell * np.sum(np.abs(terms.flux))
            norms["cumulant_l1"][fi, li] = cell * np.sum(np.abs(terms.cumulant_trace))
            norms["resolved_dissipation"][fi, li] = viscosity * cell * np.sum(terms.resolved_dissipation)

    scale = max(1.0, max(float(np.max(v)) for v in norms.values()))
    if any(np.any(v <= degenerate_tol * scale) for v in norms.values()):
        empty = {q: np.array([]) for q in QUANTITIES}
        return FluxScalingReport(ells, norms, empty, "degenerate", viscosity)

    fits = {q: [scaling_fit(ells, row) for row in norms[q]] for q in QUANTITIES}
    slopes = {q: np.array([f.slope for f in fits[q]]) for q in QUANTITIES}
    return FluxScalingReport(ells, norms, slopes, "ok", viscosity, fits)


# -- viscosity sweep report ------------------------------------------------------------


@dataclass(eq=False)
class SweepMember:
    """One run of a viscosity sweep.

    ``total_dissipation`` overrides the value otherwise taken from ``budget``
    (or, failing that, integrated from the trajectory snapshots).
    """

    viscosity: float
    trajectory: object = None
    budget: object = None
    tables: list[StructureFunctionTable] | None = None
    total_dissipation: float | None = None

    def dissipation(self) -> float:
        if self.total_dissipation is not None:
            return float(self.total_dissipation)
        if self.budget is not None:
            return float(self.budget.cumulative_dissipation[-1])
        tr = self.trajectory
        g = tr.grid
        rates = [
            self.viscosity * g.volume * float(np.sum(g.mode_weights * g.k2 * np.sum(np.abs(s.u.coeffs) ** 2, axis=0)))
            for s in tr.snapshots
        ]
        return float(simpson(rates, x=tr.times))

    def structure_tables(self, orders=(2, 3)) -> list[StructureFunctionTable]:
        if self.tables is None:
            self.tables = [structure_function(s.u, orders, t=s.t) for s in self.trajectory.snapshots]
        return self.tables


REPORT_SCHEMA = {
    "type": "object",
    "required": ["alpha_hat", "sigma_hat", "consistency_margin", "besov_trend", "verdicts", "per_nu"],
    "properties": {
        "alpha_hat": {"type": "number"},
        "sigma_hat": {"type": "number"},
        "consistency_margin": {"type": "number"},
        "consistency_tolerance": {"type": "number"},
        "bound_exponent": {"type": "number"},
        "besov_trend": {
            "type": "object",
            "required": ["sigma", "slope", "label"],
            "properties": {
                "sigma": {"type": "number"},
                "slope": {"type": ["number", "null"]},
                "label": {"type": "string"},
            },
        },
        "verdicts": {"type": "object", "additionalProperties": {"type": "string"}},
        "per_nu": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["nu", "total_dissipation", "sigma", "besov_norm"],
                "properties": {
                    "nu": {"type": "number"},
                    "total_dissipation": {"type": "number"},
                    "sigma": {"type": "number"},
                    "zeta": {"type": "number"},
                    "besov_norm": {"type": "number"},
                },
            },
        },
        "notes": {"type": "array", "items": {"type": "string"}},
    },
}


@dataclass(eq=False)
class OnsagerReport:
    viscosities: np.ndarray
    dissipation: np.ndarray
    alpha_fit: ScalingFit
    sigmas: np.ndarray  # per-viscosity zeta_p / p
    zetas: np.ndarray
    sigma_hat: float
    bound_exponent: float
    consistency_margin: float
    tolerance: float
    besov_sigma: float
    besov_norms: np.ndarray
    besov_slope: float | None
    besov_label: str
    mean_tables: list[StructureFunctionTable]
    order: float
    notes: list[str]

    @property
    def alpha_hat(self) -> float:
        return self.alpha_fit.slope

    @property
    def consistent(self) -> bool:
        return self.consistency_margin >= -self.tolerance

    def summary(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "sigma_hat": self.sigma_hat,
            "consistency_margin": self.consistency_margin,
            "consistency_tolerance": self.tolerance,
            "bound_exponent": self.bound_exponent,
            "besov_trend": {"sigma": self.besov_sigma, "slope": self.besov_slope, "label": self.besov_label},
            "verdicts": {
                "upper_bound_consistency": "consistent" if self.consistent else "inconsistent",
                "besov_norm_trend": self.besov_label,
                "dissipation_local_slope_drift": "drift" if self.alpha_fit.drift else "none",
                "asymptotic_regime": "not established at finite viscosity",
            },
            "per_nu": [
                {
                    "nu": float(nu),
                    "total_dissipation": float(d),
                    "sigma": float(s),
                    "zeta": float(z),
                    "besov_norm": float(b),
                }
                for nu, d, s, z, b in zip(
                    self.viscosities, self.dissipation, self.sigmas, self.zetas, self.besov_norms
                )
            ],
            "notes": list(self.notes),
        }

    def rows(self) -> list[dict]:
        """One row per (nu, r) cell of the time-averaged structure functions."""
        out = []
        for nu, table in zip(self.viscosities, self.mean_tables):
            for ri, r in enumerate(table.separations):
                row = {"nu": float(nu), "r": float(r)}
                for p in table.orders:
                    row[f"S{p:g}"] = float(table.S(p)[ri])
                out.append(row)
        return out


def _time_l3(norms: np.ndarray, times: np.ndarray) -> float:
    if len(times) < 2:
        return float(norms[0])
    return float(simpson(norms**3, x=times)) ** (1.0 / 3.0)


def onsager_report(
    sweep: list[SweepMember],
    order: float = 3,
    fit_window: tuple[float, float] | None = None,
    ell0: float = TWO_PI,
    epsilon: float = 0.05,
    tolerance: float = 0.2,
) -> OnsagerReport:
    """Finite-viscosity consistency report for a viscosity sweep.

    Fits the dissipation exponent, estimates the smoothness from the
    time-averaged ``S_p`` over ``fit_window`` (default ``[4 dx, ell0/4]``),
    compares with the upper-bound exponent, and tabulates time-integrated
    Besov norms just above the critical smoothness.  The verdicts describe
    the data at the simulated viscosities only.
    """
    if len(sweep) < 4:
        raise ValueError(f"need at least 4 viscosities, got {len(sweep)}")
    nus = np.array([mbr.viscosity for mbr in sweep], dtype=float)
    steps = np.diff(nus)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValueError("viscosities must be strictly monotone")
    notes = []

    diss = np.array([mbr.dissipation() for mbr in sweep])
    alpha_fit = scaling_fit(nus, diss)

    zetas, sigmas, mean_tables = [], [], []
    for mbr in sweep:
        tables = mbr.structure_tables(orders=sorted({2.0, float(order)}))
        avg = mean_table(tables)
        mean_tables.append(avg)
        pos = avg.separations > 0
        rs, Sp = avg.separations[pos], avg.S(order)[pos]
        lo, hi = fit_window or (4 * rs.min(), ell0 / 4)
        inside = (rs >= lo * (1 - 1e-12)) & (rs <= hi * (1 + 1e-12))
        if inside.sum() < 3:
            notes.append(
                f"nu={mbr.viscosity:g}: fit window [{lo:.4g}, {hi:.4g}] holds {int(inside.sum())} "
                "separations; fitted over all tabulated separations instead"
            )
            inside = np.ones_like(rs, dtype=bool)
        zeta = scaling_fit(rs[inside], Sp[inside]).slope
        zetas.append(zeta)
        sigmas.append(zeta / order)
    sigmas = np.array(sigmas)
    sigma_hat = float(np.mean(sigmas))
    sigma_c = min(max(sigma_hat, 1e-9), 1.0)
    if sigma_c != sigma_hat:
        notes.append(f"sigma_hat={sigma_hat:.6g} clipped to {sigma_c:.6g} for the exponent relation")
    bound_exp = alpha_of_sigma(sigma_c)
    margin = alpha_fit.slope - bound_exp

    alpha_c = min(max(alpha_fit.slope, 0.0), 1.0 - 1e-12)
    besov_sigma = sigma_of_alpha(alpha_c) + epsilon
    if besov_sigma > 1.0:
        notes.append(f"Besov smoothness {besov_sigma:.6g} capped at 1")
        besov_sigma = 1.0
    besov = []
    for mbr in sweep:
        tables = mbr.structure_tables()
        norms = np.array([besov_estimate(tb, besov_sigma, ell0, order).norm for tb in tables])
        times = np.array([tb.t if tb.t is not None else i for i, tb in enumerate(tables)], dtype=float)
        besov.append(_time_l3(norms, times))
    besov = np.array(besov)
    slope, label = None, "undetermined"
    if np.all(besov > 0):
        slope = scaling_fit(nus, besov).slope
        # negative slope: the norm grows as viscosity decreases
        label = "growing" if slope < -0.05 else ("decaying" if slope > 0.05 else "flat")
    notes.append(
        "finite-viscosity data; exponents are effective values over the simulated range, "
        "not limits as viscosity tends to zero"
    )
    return OnsagerReport(
        viscosities=nus,
        dissipation=diss,
        alpha_fit=alpha_fit,
        sigmas=sigmas,
        zetas=np.array(zetas),
        sigma_hat=sigma_hat,
        bound_exponent=bound_exp,
        consistency_margin=float(margin),
        tolerance=tolerance,
        besov_sigma=besov_sigma,
        besov_norms=besov,
        besov_slope=slope,
        besov_label=label,
        mean_tables=mean_tables,
        order=float(order),
        notes=notes,
    )
