"""Periodic box discretization, Fourier transforms and spectral quadrature.

The box ``[-L/2, L/2)^d`` is sampled at ``N`` points per axis, with
``x_j = (j - N/2) * dx``; the box center sits on a grid point.  The Fourier
coefficients approximate the continuum transform

    f_hat(xi) = int f(x) exp(-i xi.x) dx,

so that Parseval reads ``int |f|^2 dx = (2 pi)^-d int |f_hat|^2 dxi``; on the
lattice the frequency weight is ``(dxi / 2 pi)^d = L^-d``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "SpectralField",
    "make_grid",
    "to_spectral",
    "to_physical",
    "hdot1_norm",
    "l2_norm",
    "lp_norm",
    "laplacian",
    "dealias_mask",
    "zero_mode",
]


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Periodic box with ``N**d`` points and side length ``L``."""

    d: int
    N: int
    L: float

    def __post_init__(self):
        if self.d not in (3, 4):
            raise ValueError(f"dimension must be 3 or 4, got d={self.d}")
        if not isinstance(self.N, (int, np.integer)) or not _is_power_of_two(int(self.N)):
            raise ValueError(f"N must be a power of two, got N={self.N}")
        if self.N < 8:
            raise ValueError(f"N must be at least 8, got N={self.N}")
        if not self.L > 0:
            raise ValueError(f"box length must be positive, got L={self.L}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N**self.d

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def volume(self) -> float:
        return self.L**self.d

    @property
    def dk(self) -> float:
        """Smallest nonzero wavenumber, ``2 pi / L``."""
        return 2.0 * np.pi / self.L

    @property
    def spectral_weight(self) -> float:
        """Quadrature weight ``(dk / 2 pi)^d`` of one lattice frequency."""
        return self.L ** (-self.d)

    @cached_property
    def x(self) -> np.ndarray:
        """Per-axis coordinates, centered so that index ``N//2`` is 0."""
        return (np.arange(self.N) - self.N // 2) * self.dx

    @cached_property
    def modes(self) -> np.ndarray:
        """Per-axis integer frequencies in FFT order (``-N/2 .. N/2-1``)."""
        return np.fft.fftfreq(self.N, 1.0 / self.N).astype(np.int64)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Per-axis wavenumbers ``2 pi m / L`` in FFT order."""
        return self.dk * self.modes

    def coords(self) -> list[np.ndarray]:
        """Sparse broadcastable coordinate arrays, one per axis."""
        return np.meshgrid(*([self.x] * self.d), indexing="ij", sparse=True)

    def kvecs(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.wavenumbers] * self.d), indexing="ij", sparse=True)

    @cached_property
    def mode_sq(self) -> np.ndarray:
        """Integer ``|m|^2`` on the full lattice; ``|xi|^2 = dk^2 * mode_sq``."""
        m = np.meshgrid(*([self.modes] * self.d), indexing="ij", sparse=True)
        out = np.zeros(self.shape, dtype=np.int64)
        for a in m:
            out = out + a * a
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        return self.dk**2 * self.mode_sq

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(i xi L/2) per axis = (-1)^m; moves the origin of the transform to the box center
        sign = np.where(self.modes % 2 == 0, 1.0, -1.0)
        s = np.meshgrid(*([sign] * self.d), indexing="ij", sparse=True)
        out = np.ones(self.shape)
        for a in s:
            out = out * a
        return out

    def radius(self, center=None) -> np.ndarray:
        """Minimal-image distance from ``center`` to every grid point."""
        center = np.zeros(self.d) if center is None else np.asarray(center, dtype=float)
        r2 = np.zeros(self.shape)
        for axis, xa in enumerate(self.coords()):
            diff = xa - center[axis]
            diff = diff - self.L * np.round(diff / self.L)
            r2 = r2 + diff * diff
        return np.sqrt(r2)

    def describe(self) -> dict:
        return {"d": self.d, "N": self.N, "L": self.L}


def make_grid(d: int, N: int, L: float) -> Grid:
    return Grid(d, N, L)


@dataclass(frozen=True, eq=False)
class Field:
    """Complex amplitudes on the grid points (physical representation)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    def __add__(self, other: "Field") -> "Field":
        _check_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients on the frequency lattice, in FFT order."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != self.grid.shape:
            raise ValueError(f"coeffs shape {c.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coeffs", c)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2) * self.grid.spectral_weight))


def _check_same_grid(a: Grid, b: Grid):
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def to_spectral(f: Field) -> SpectralField:
    g = f.grid
    return SpectralField(g, np.fft.fftn(f.values) * (g.cell_volume * g._phase))


def to_physical(F: SpectralField) -> Field:
    g = F.grid
    return Field(g, np.fft.ifftn(F.coeffs * (g._phase / g.cell_volume)))


def hdot1_norm(f: Field) -> float:
    """Homogeneous H^1 norm, ``(sum |xi|^2 |f_hat|^2 w)^(1/2)``."""
    g = f.grid
    fh = np.fft.fftn(f.values)
    return float(np.sqrt(np.sum(g.k2 * (fh.real**2 + fh.imag**2)) * g.cell_volume / g.size))


def l2_norm(f: Field) -> float:
    return lp_norm(f, 2.0)


def lp_norm(f: Field, p: float) -> float:
    """Grid quadrature ``(sum |f|^p dx^d)^(1/p)``; requires ``p >= 1``."""
    if not p >= 1:
        raise ValueError(f"L^p norm needs p >= 1, got p={p}")
    a = np.abs(f.values)
    if p == 2:
        s = np.sum(a * a)
    else:
        s = np.sum(a**p)
    return float((s * f.grid.cell_volume) ** (1.0 / p))


def laplacian(f: Field) -> Field:
    g = f.grid
    return Field(g, np.fft.ifftn(-g.k2 * np.fft.fftn(f.values)))


def dealias_mask(grid: Grid) -> np.ndarray:
    """2/3-rule mask: keep frequencies with ``|m_j| <= N/3`` on every axis."""
    keep = np.abs(grid.modes) <= grid.N // 3
    parts = np.meshgrid(*([keep] * grid.d), indexing="ij", sparse=True)
    out = np.ones(grid.shape, dtype=bool)
    for a in parts:
        out = out & a
    return out


def zero_mode(f: Field) -> complex:
    """Spatial mean of the field (the xi = 0 coefficient divided by the volume)."""
    return complex(np.mean(f.values))
