"""Ground state W, the variational functionals, and radial reference constants.

``W(x) = (1 + |x|^2 / (d(d-2)))^(-(d-2)/2)`` solves ``-Delta W = W^((d+2)/(d-2))``
on R^d and extremizes the sharp Sobolev inequality.  Reference values of its
integrals come from one-dimensional radial quadrature and never touch the FFT
code path.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import chebyshev, legendre
from scipy import integrate

from .grid import Field, Grid, hdot1_norm, laplacian, lp_norm

__all__ = [
    "GroundStateParams",
    "ReferenceConstants",
    "ResolutionError",
    "QuadratureError",
    "W_profile",
    "W_derivative",
    "half_max_radius",
    "critical_exponent",
    "nonlinearity",
    "make_W",
    "stationary_residual",
    "energy",
    "potential_integral",
    "sobolev_ratio",
    "reference_constants",
]


class ResolutionError(ValueError):
    """The requested profile is too narrow for the grid spacing."""


class QuadratureError(RuntimeError):
    """Radial quadrature did not reach the requested tolerance."""


def critical_exponent(d: int) -> float:
    """Sobolev exponent ``2d/(d-2)``: 6 for d = 3, 4 for d = 4."""
    return 2.0 * d / (d - 2)


def W_profile(r, d: int):
    return (1.0 + np.asarray(r, dtype=float) ** 2 / (d * (d - 2))) ** (-(d - 2) / 2.0)


def W_derivative(r, d: int):
    r = np.asarray(r, dtype=float)
    return -(r / d) * (1.0 + r**2 / (d * (d - 2))) ** (-d / 2.0)


def half_max_radius(d: int, lam: float = 1.0) -> float:
    """Radius where ``lam^(-(d-2)/2) W(r/lam)`` drops to half its peak."""
    return lam * math.sqrt(d * (d - 2) * (2.0 ** (2.0 / (d - 2)) - 1.0))


def nonlinearity(values: np.ndarray, d: int) -> np.ndarray:
    """``|u|^(4/(d-2)) u`` as an exact polynomial: ``|u|^4 u`` (d=3), ``|u|^2 u`` (d=4)."""
    a = values.real * values.real + values.imag * values.imag
    if d == 3:
        return (a * a) * values
    if d == 4:
        return a * values
    raise ValueError(f"unsupported dimension d={d}")


@dataclass(frozen=True)
class GroundStateParams:
    """Scale ``lam`` and center ``x0`` of ``lam^(-(d-2)/2) W((x - x0)/lam)``."""

    lam: float = 1.0
    x0: Optional[tuple] = None
    d: Optional[int] = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")


def make_W(grid: Grid, params: GroundStateParams = GroundStateParams()) -> Field:
    """Sample the rescaled, translated ground state with minimal-image distances."""
    d = grid.d
    if params.d is not None and params.d != d:
        raise ValueError(f"params.d={params.d} does not match grid d={d}")
    if half_max_radius(d, params.lam) < 2.0 * grid.dx:
        raise ResolutionError(
            f"lambda={params.lam}: the core of W spans fewer than two cells (dx={grid.dx:.4g})"
        )
    x0 = np.zeros(d) if params.x0 is None else np.asarray(params.x0, dtype=float)
    if x0.shape != (d,):
        raise ValueError(f"x0 must have {d} components")
    if np.any(x0 < -grid.L / 2) or np.any(x0 >= grid.L / 2):
        raise ValueError(f"x0={tuple(x0)} lies outside the box [-L/2, L/2)")
    r = grid.radius(x0)
    lam = params.lam
    return Field(grid, lam ** (-(d - 2) / 2.0) * W_profile(r / lam, d))


def potential_integral(f: Field) -> float:
    """``int |f|^(2d/(d-2)) dx`` by grid quadrature."""
    a = np.abs(f.values) ** 2
    if f.grid.d == 3:
        s = np.sum(a * a * a)
    else:
        s = np.sum(a * a)
    return float(s * f.grid.cell_volume)


def energy(f: Field) -> float:
    d = f.grid.d
    return 0.5 * hdot1_norm(f) ** 2 - (d - 2) / (2.0 * d) * potential_integral(f)


def stationary_residual(f: Field) -> float:
    """Relative residual ``||Delta f + |f|^(4/(d-2)) f||_2 / ||f||_Hdot1``."""
    if not np.any(f.values):
        raise ValueError("undefined residual for the zero field")
    h1 = hdot1_norm(f)
    if h1 == 0.0:
        return math.inf
    res = laplacian(f).values + nonlinearity(f.values, f.grid.d)
    return float(np.sqrt(np.sum(np.abs(res) ** 2) * f.grid.cell_volume) / h1)


def sobolev_ratio(f: Field) -> float:
    """``||f||_{L^{2d/(d-2)}} / ||f||_Hdot1``; bounded above by C_d."""
    h1 = hdot1_norm(f)
    if h1 == 0.0:
        raise ValueError("Sobolev ratio undefined for a field with zero gradient")
    return lp_norm(f, critical_exponent(f.grid.d)) / h1


@dataclass(frozen=True)
class ReferenceConstants:
    """Integrals of W over R^d, or over a centered cube when ``box_length`` is set.

    On R^d the pairing identity ``gradW_l2_sq == W_crit_norm**(2d/(d-2))`` holds;
    on a cube it fails by the boundary flux, which is the point of having both.
    """

    d: int
    gradW_l2_sq: float
    W_crit_norm: float
    energy_W: float
    sobolev_Cd: float
    provenance: dict = field(default_factory=dict)

    @property
    def gradW_norm(self) -> float:
        return math.sqrt(self.gradW_l2_sq)

    @property
    def potential(self) -> float:
        return self.W_crit_norm ** critical_exponent(self.d)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


_OMEGA = {3: 4.0 * math.pi, 4: 2.0 * math.pi**2}  # area of the unit sphere S^{d-1}


def _grad_density(r, d):
    return W_derivative(r, d) ** 2 * np.asarray(r, dtype=float) ** (d - 1)


def _pot_density(r, d):
    return W_profile(r, d) ** critical_exponent(d) * np.asarray(r, dtype=float) ** (d - 1)


def _radial_integral(density, d, R, rtol):
    breaks = [b for b in (0.0, 1.0, 4.0, 16.0, 64.0, 256.0, 1024.0, 4096.0) if b < R] + [R]
    total, err = 0.0, 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        v, e = integrate.quad(density, a, b, args=(d,), epsabs=0.0, epsrel=rtol * 1e-2, limit=200)
        total += v
        err += e
    if err > rtol * abs(total):
        raise QuadratureError(f"radial quadrature reached only {err / abs(total):.2e} relative accuracy")
    return total, err


def _rd_constants(d: int, R: float, rtol: float):
    c2 = (d * (d - 2.0)) ** (d - 2.0)  # W ~ sqrt(c2) r^{-(d-2)} at large r
    g_in, g_err = _radial_integral(_grad_density, d, R, rtol)
    p_in, p_err = _radial_integral(_pot_density, d, R, rtol)
    g_tail = (d - 2.0) * c2 * R ** (-(d - 2.0))
    p_tail = (d * (d - 2.0)) ** d * R ** (-float(d)) / d
    om = _OMEGA[d]
    prov = {
        "domain": "R^d",
        "R": R,
        "rtol": rtol,
        "grad_abserr": om * g_err,
        "pot_abserr": om * p_err,
        "grad_tail": om * g_tail,
        "pot_tail": om * p_tail,
    }
    return om * (g_in + g_tail), om * (p_in + p_tail), prov


def _cube_integral(density, d: int, a: float, nodes: int, rtol: float):
    """Integral of a radial density over the cube ``[-a, a]^d``.

    The cube splits into 2d pyramids over its faces; on the face point
    ``p = (a, y)`` the ray ends at ``|p|`` and contributes ``a F(|p|)/|p|^d``,
    where ``F(R) = int_0^R density``.
    """
    F_a, _ = _radial_integral(density, d, a, rtol)
    hi = a * math.sqrt(d)
    cheb_nodes = 0.5 * (a + hi) + 0.5 * (hi - a) * np.cos(np.pi * (np.arange(64) + 0.5) / 64)
    vals = []
    for rr in cheb_nodes:
        v, _ = integrate.quad(density, a, rr, args=(d,), epsabs=0.0, epsrel=rtol * 1e-2, limit=200)
        vals.append(F_a + v)
    F = chebyshev.Chebyshev.fit(cheb_nodes, vals, 48, domain=[a, hi])
    t, w = legendre.leggauss(nodes)
    y = 0.5 * a * (t + 1.0)
    wy = 0.5 * a * w
    mesh = np.meshgrid(*([y] * (d - 1)), indexing="ij", sparse=True)
    wmesh = np.meshgrid(*([wy] * (d - 1)), indexing="ij", sparse=True)
    p2 = a * a
    wt = 1.0
    for m, wm in zip(mesh, wmesh):
        p2 = p2 + m * m
        wt = wt * wm
    p = np.sqrt(p2)
    face = np.sum(wt * a * F(p) / p**d)
    return 2 * d * 2 ** (d - 1) * face


def reference_constants(
    d: int,
    box_length: Optional[float] = None,
    lam: float = 1.0,
    R: float = 1.0e4,
    rtol: float = 1.0e-10,
) -> ReferenceConstants:
    """Integrals of W by radial quadrature.

    With ``box_length=None`` the domain is R^d: quadrature on ``[0, R]`` plus the
    analytic power-law tail.  Otherwise the domain is the cube of side
    ``box_length`` centered on a ground state of scale ``lam`` (the set the
    minimal-image grid sampling covers).
    """
    if d not in (3, 4):
        raise ValueError(f"dimension must be 3 or 4, got d={d}")
    p_exp = critical_exponent(d)
    if box_length is None:
        G, P, prov = _rd_constants(d, R, rtol)
    else:
        if not box_length > 0 or not lam > 0:
            raise ValueError("box_length and lam must be positive")
        a = 0.5 * box_length / lam  # Hdot1 and L^{2*} are scale invariant
        G = _cube_integral(_grad_density, d, a, 48, rtol)
        P = _cube_integral(_pot_density, d, a, 48, rtol)
        prov = {"domain": "cube", "box_length": box_length, "lam": lam, "half_width_scaled": a,
                "rtol": rtol, "face_nodes": 48}
    crit = P ** (1.0 / p_exp)
    return ReferenceConstants(
        d=d,
        gradW_l2_sq=G,
        W_crit_norm=crit,
        energy_W=0.5 * G - (d - 2) / (2.0 * d) * P,
        sobolev_Cd=crit / math.sqrt(G),
        provenance=prov,
    )
