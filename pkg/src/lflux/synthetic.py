"""Closed-form test flows and random fields of prescribed Besov regularity.

Random fields draw from numpy's PCG64 bit generator seeded through
``SeedSequence(seed)``, so a given spec reproduces bit-identical
coefficients on any platform with the same numpy FFT backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    Grid,
    SpectralField,
    l2_norm_parseval,
    leray_coeffs,
    to_real,
    to_spectral,
)

KINDS = ("random_besov", "single_mode", "shear", "taylor_green")


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "random_besov"
    sigma: float = 0.5
    seed: int = 0
    k_min: int = 1
    k_max: int | None = None  # None -> floor(n / 3)
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}; expected one of {KINDS}")


def generate(grid: Grid, spec: SyntheticSpec) -> SpectralField:
    if spec.kind == "random_besov":
        return random_besov_field(grid, spec)
    if spec.kind == "taylor_green":
        return taylor_green(grid) * spec.amplitude
    if spec.kind == "shear":
        return shear(grid) * spec.amplitude
    return single_mode(grid, (1,) + (0,) * (grid.dim - 1), axis=1) * spec.amplitude


def random_besov_field(grid: Grid, spec: SyntheticSpec) -> SpectralField:
    """Solenoidal random-phase field with shell spectrum ``E(k) ~ k^-(2σ+1)``.

    Each retained mode carries a fixed amplitude ``k^-(2σ+1) / shell_density``
    and a uniformly random direction and phase in the plane orthogonal to
    ``k``, so ensemble-mean second-order increments scale as ``r^(2σ)`` for
    ``2π/k_max << r << 2π/k_min``.  The result has unit L^2 norm times
    ``spec.amplitude``.
    """
    sigma = spec.sigma
    k_max = grid.n // 3 if spec.k_max is None else spec.k_max
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    if spec.k_min < 1 or k_max > grid.n // 3 or k_max <= spec.k_min:
        raise ValueError(
            f"band [{spec.k_min}, {k_max}] invalid for n={grid.n} (need 1 <= k_min < k_max <= n/3)"
        )

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))
    d = grid.dim
    kmag = grid.kmag
    band = (kmag >= spec.k_min) & (kmag <= k_max)
    # per-mode energy: shell spectrum divided by the number of modes per shell (~k^(d-1))
    energy = np.zeros(grid.spectral_shape)
    energy[band] = kmag[band] ** (-(2.0 * sigma + 1.0) - (d - 1))

    shape = (d,) + grid.spectral_shape
    w = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    # real-space round trip makes the noise Hermitian before the amplitudes are fixed
    w = to_spectral(to_real(SpectralField(grid, w))).coeffs
    w = leray_coeffs(w, grid)
    norm = np.sqrt(np.sum(np.abs(w) ** 2, axis=0))
    norm[norm == 0] = 1.0
    u = SpectralField(grid, w / norm * np.sqrt(energy))
    scale = spec.amplitude / l2_norm_parseval(u)
    return SpectralField(grid, u.coeffs * scale)


def taylor_green(grid: Grid) -> SpectralField:
    """``(sin x cos y, -cos x sin y)``; in 3D the same times ``cos z`` with zero w."""
    xs = grid.coordinates()
    x, y = xs[0], xs[1]
    if grid.dim == 2:
        vals = np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)])
    else:
        cz = np.cos(xs[2])
        vals = np.stack(
            [np.sin(x) * np.cos(y) * cz, -np.cos(x) * np.sin(y) * cz, np.zeros_like(x)]
        )
    return SpectralField.from_values(grid, vals)


def shear(grid: Grid) -> SpectralField:
    """``(sin y, 0[, 0])``."""
    xs = grid.coordinates()
    vals = np.zeros((grid.dim,) + grid.shape)
    vals[0] = np.sin(xs[1])
    return SpectralField.from_values(grid, vals)


def single_mode(grid: Grid, k, axis: int, amplitude: float = 1.0) -> SpectralField:
    """``amplitude * sin(k.x) e_axis``; requires ``k_axis == 0`` for solenoidality."""
    k = tuple(int(v) for v in k)
    if len(k) != grid.dim or not 0 <= axis < grid.dim:
        raise ValueError(f"wavevector {k} / axis {axis} invalid for dim={grid.dim}")
    if k[axis] != 0:
        raise ValueError(f"single mode k={k} along axis {axis} is not divergence-free")
    xs = grid.coordinates()
    phase = sum(kj * xj for kj, xj in zip(k, xs))
    vals = np.zeros((grid.dim,) + grid.shape)
    vals[axis] = amplitude * np.sin(phase)
    return SpectralField.from_values(grid, vals)


def perturbed_taylor_green(
    grid: Grid, amplitude: float = 0.5, seed: int = 0, sigma: float = 0.5, k_max: int = 16
) -> SpectralField:
    """Taylor-Green plus a smooth random solenoidal perturbation of L^2 norm ``amplitude``."""
    k_max = min(k_max, grid.n // 3)
    noise = random_besov_field(
        grid, SyntheticSpec(sigma=sigma, seed=seed, k_min=1, k_max=k_max, amplitude=amplitude)
    )
    return taylor_green(grid) + noise


def shell_spectrum(u: SpectralField) -> tuple[np.ndarray, np.ndarray]:
    """Energy per integer shell ``k - 1/2 <= |k| < k + 1/2``, k = 1 .. n/2."""
    grid = u.grid
    e = 0.5 * grid.volume * grid.mode_weights * np.sum(np.abs(u.coeffs) ** 2, axis=0)
    shells = np.rint(grid.kmag).astype(int)
    kmax = grid.n // 2
    spec = np.bincount(shells.ravel(), weights=e.ravel(), minlength=kmax + 1)
    ks = np.arange(1, kmax + 1)
    return ks, spec[1 : kmax + 1]
