"""Periodic grids, Fourier-space fields and spectral calculus on the 2π-torus.

Fields are stored as half spectra (``rfftn`` layout along the last spatial
axis) normalized so that ``f(x) = sum_k c_k exp(i k.x)``.  Hermitian symmetry
of the discarded half is implicit in that layout, so every real field is
represented exactly once.  Component axis comes first:
``coeffs.shape == (components, n, ..., n // 2 + 1)`` and real samples have
``values.shape == (components, n, ..., n)`` with ``values[c, i, j]`` the
value at ``(x_i, y_j)``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

TWO_PI = 2.0 * np.pi


def fft_workers() -> int:
    """Thread cap for FFTs, read from ``LFLX_THREADS`` (default 1)."""
    raw = os.environ.get("LFLX_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Grid:
    """Uniform collocation lattice on the torus of side 2π."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")

    @property
    def box_length(self) -> float:
        return TWO_PI

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def npoints(self) -> int:
        return self.n**self.dim

    @property
    def volume(self) -> float:
        return TWO_PI**self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        # spatial axes of a (components, *shape) array
        return tuple(range(1, self.dim + 1))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per axis, shaped to broadcast over the half spectrum."""
        full = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)
        half = np.arange(self.n // 2 + 1, dtype=np.int64)
        ks = []
        for axis in range(self.dim):
            k = half if axis == self.dim - 1 else full
            shape = [1] * self.dim
            shape[axis] = k.size
            ks.append(k.reshape(shape))
        return tuple(ks)

    @cached_property
    def derivative_wavenumbers(self) -> tuple[np.ndarray, ...]:
        # Nyquist zeroed: an odd derivative of the Nyquist mode is not real
        out = []
        for k in self.wavenumbers:
            kd = k.astype(float)
            kd[np.abs(k) == self.n // 2] = 0.0
            out.append(kd)
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        total = np.zeros(self.spectral_shape)
        for k in self.wavenumbers:
            total = total + k.astype(float) ** 2
        return total

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def mode_weights(self) -> np.ndarray:
        """Multiplicity of each stored mode in the full spectrum (1 or 2)."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        return w

    def dealias_mask(self, cutoff: float | None = None) -> np.ndarray:
        """True where every ``|k_axis| <= cutoff`` (default ``n / 3``)."""
        cutoff = self.n / 3.0 if cutoff is None else cutoff
        mask = np.ones(self.spectral_shape, dtype=bool)
        for k in self.wavenumbers:
            mask = mask & (np.abs(k) <= cutoff)
        return mask

    def coordinates(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.n) * self.spacing
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def _mode_index(self, k) -> tuple[tuple[int, ...], bool]:
        """Storage index of wavevector ``k`` and whether it is the conjugate."""
        k = tuple(int(v) for v in k)
        if len(k) != self.dim:
            raise ValueError(f"wavevector {k} does not match dim={self.dim}")
        half = self.n // 2
        for v in k:
            if not -half <= v < half:
                raise ValueError(f"wavevector {k} outside [-{half}, {half})")
        conj = k[-1] < 0
        if conj:
            k = tuple(-v for v in k)
        return tuple(v % self.n for v in k[:-1]) + (k[-1],), conj


@dataclass(frozen=True, eq=False)
class RealSamples:
    """Real values of a field on the collocation lattice."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == self.grid.dim:
            v = v[None]
        if v.shape[1:] != self.grid.shape:
            raise ValueError(
                f"values of shape {v.shape} inconsistent with grid shape {self.grid.shape}"
            )
        object.__setattr__(self, "values", v)

    @property
    def components(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real scalar or vector field held as Fourier coefficients.

    The real-space view is computed lazily and cached; a field built by
    :func:`to_spectral` keeps the exact samples it came from.
    """

    grid: Grid
    coeffs: np.ndarray
    _real: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == self.grid.dim:
            c = c[None]
        if c.shape[1:] != self.grid.spectral_shape:
            raise ValueError(
                f"coefficients of shape {c.shape} inconsistent with grid {self.grid}"
            )
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid, components: int = 1) -> SpectralField:
        return cls(grid, np.zeros((components,) + grid.spectral_shape, dtype=complex))

    @classmethod
    def from_values(cls, grid: Grid, values) -> SpectralField:
        return to_spectral(RealSamples(grid, values))

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_vector(self) -> bool:
        return self.components == self.grid.dim

    @property
    def values(self) -> np.ndarray:
        """Real samples, shape ``(components, *grid.shape)``."""
        return to_real(self).values

    def coeff(self, k) -> np.ndarray:
        """Coefficients of wavevector ``k`` (one per component)."""
        idx, conj = self.grid._mode_index(k)
        c = self.coeffs[(slice(None),) + idx]
        return np.conj(c) if conj else c.copy()

    def component(self, i: int) -> SpectralField:
        return SpectralField(self.grid, self.coeffs[i : i + 1])

    def with_coeffs(self, coeffs) -> SpectralField:
        return SpectralField(self.grid, coeffs)

    def __add__(self, other: SpectralField) -> SpectralField:
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: SpectralField) -> SpectralField:
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> SpectralField:
        return SpectralField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> SpectralField:
        return SpectralField(self.grid, -self.coeffs)


def _check_same_grid(a: SpectralField, b: SpectralField):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")
    if a.components != b.components:
        raise ValueError(f"component mismatch: {a.components} vs {b.components}")


def forward(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Raw real-to-spectral transform of a ``(components, *shape)`` array."""
    return scipy.fft.rfftn(
        values, axes=grid.axes, norm="forward", workers=fft_workers()
    )


def inverse(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Raw spectral-to-real transform of a ``(components, *spectral_shape)`` array."""
    return scipy.fft.irfftn(
        coeffs, s=grid.shape, axes=grid.axes, norm="forward", workers=fft_workers()
    )


def to_real(f: SpectralField) -> RealSamples:
    if f._real is None:
        object.__setattr__(f, "_real", inverse(f.coeffs, f.grid))
    return RealSamples(f.grid, f._real)


def to_spectral(v: RealSamples) -> SpectralField:
    coeffs = forward(v.values, v.grid)
    # the mean mode of a real field is real; rfftn leaves roundoff there
    coeffs[(slice(None),) + (0,) * v.grid.dim] = coeffs[
        (slice(None),) + (0,) * v.grid.dim
    ].real
    return SpectralField(v.grid, coeffs, _real=v.values)


def derivative(f: SpectralField, axis: int) -> SpectralField:
    if not 0 <= axis < f.grid.dim:
        raise ValueError(f"axis {axis} out of range for dim={f.grid.dim}")
    return SpectralField(f.grid, 1j * f.grid.derivative_wavenumbers[axis] * f.coeffs)


def gradient_coeffs(f: SpectralField) -> np.ndarray:
    """Spectral gradient, shape ``(dim, components, *spectral_shape)``.

    Entry ``[j, i]`` is the coefficient array of ``d f_i / d x_j``.
    """
    kd = f.grid.derivative_wavenumbers
    return np.stack([1j * kd[j] * f.coeffs for j in range(f.grid.dim)])


def divergence(u: SpectralField) -> SpectralField:
    _require_vector(u)
    kd = u.grid.derivative_wavenumbers
    div = sum(1j * kd[j] * u.coeffs[j] for j in range(u.grid.dim))
    return SpectralField(u.grid, div[None])


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -f.grid.k2 * f.coeffs)


def _require_vector(u: SpectralField):
    if not u.is_vector:
        raise ValueError(
            f"expected a vector field with {u.grid.dim} components, got {u.components}"
        )


def leray_coeffs(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Apply ``I - k k^T / |k|^2`` mode-wise; the mean mode passes through.

    Uses the integer wavenumbers, including on the Nyquist planes where
    :func:`derivative` is zero, so ``divergence`` of the result vanishes
    exactly only for fields without Nyquist content (all solver states).
    """
    ks = grid.wavenumbers
    k2 = grid.k2.copy()
    k2[(0,) * grid.dim] = 1.0
    kdotu = sum(ks[j] * coeffs[j] for j in range(grid.dim))
    return np.stack([coeffs[i] - ks[i] * kdotu / k2 for i in range(grid.dim)])


def leray_project(u: SpectralField) -> SpectralField:
    _require_vector(u)
    return SpectralField(u.grid, leray_coeffs(u.coeffs, u.grid))


def dealias(f: SpectralField, cutoff: float | None = None) -> SpectralField:
    """Zero every mode with some ``|k_axis| > cutoff`` (default ``n / 3``)."""
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask(cutoff))


def pointwise_magnitude(values: np.ndarray) -> np.ndarray:
    """Euclidean norm over the component axis."""
    if values.shape[0] == 1:
        return np.abs(values[0])
    return np.sqrt(np.sum(values**2, axis=0))


def lp_norm(f: SpectralField, p: float) -> float:
    """L^p norm over the torus by equal-weight collocation quadrature.

    Vector fields use the pointwise Euclidean magnitude.  The quadrature is
    exact for ``p = 2`` on band-limited fields and spectrally accurate for
    smooth fields otherwise.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    mag = pointwise_magnitude(f.values)
    if math.isinf(p):
        return float(mag.max())
    cell = f.grid.spacing**f.grid.dim
    return float((cell * np.sum(mag**p)) ** (1.0 / p))


def l2_norm_parseval(f: SpectralField) -> float:
    """L^2 norm from the coefficients: ``(2π)^d sum_k |c_k|^2``."""
    return math.sqrt(inner(f, f))


def inner(f: SpectralField, g: SpectralField) -> float:
    """L^2 inner product over the torus, summed over components."""
    _check_same_grid(f, g)
    s = np.sum(f.grid.mode_weights * np.real(np.conj(f.coeffs) * g.coeffs))
    return float(f.grid.volume * s)


def mean(f: SpectralField) -> np.ndarray:
    return f.coeffs[(slice(None),) + (0,) * f.grid.dim].real.copy()


def resample(f: SpectralField, n: int) -> SpectralField:
    """Same band-limited field on an ``n``-point grid (zero-pad or truncate).

    The source Nyquist planes are dropped, so the result is exact for
    fields whose spectrum avoids ``|k_axis| = n_src / 2``.
    """
    src = f.grid
    dst = Grid(src.dim, n)
    keep = min(src.n, n) // 2  # |k| < keep survives
    out = np.zeros((f.components,) + dst.spectral_shape, dtype=complex)
    pos = np.arange(keep)
    neg = np.arange(-keep + 1, 0)
    full_idx_src = np.concatenate([pos, neg % src.n])
    full_idx_dst = np.concatenate([pos, neg % n])
    src_idx = [full_idx_src] * (src.dim - 1) + [pos]
    dst_idx = [full_idx_dst] * (src.dim - 1) + [pos]
    out[(slice(None),) + np.ix_(*dst_idx)] = f.coeffs[(slice(None),) + np.ix_(*src_idx)]
    return SpectralField(dst, out)
