"""Decay character of initial data, predicted decay exponents, and rate fitting.

The decay character ``r*`` measures how ``|xi|^2 |u0_hat|^2`` behaves near the
origin: ``S(rho) = int_{|xi| <= rho} |xi|^2 |u0_hat|^2 dxi ~ rho^(2 r* + d)``.
On the box the limit ``rho -> 0`` is out of reach, so ``r*`` is read off a
log-log regression over the resolvable lattice shells.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .evolution import Trajectory
from .grid import Field, to_spectral

__all__ = [
    "DecayCharacterEstimate",
    "RatePrediction",
    "DecayFit",
    "SplitResult",
    "shell_spectrum",
    "decay_indicator",
    "decay_character",
    "predicted_gamma",
    "fit_decay_exponent",
    "fit_power_law",
    "fourier_split",
    "splitting_radius",
    "splitting_exponent",
    "decay_report",
]


def shell_spectrum(u: Field) -> tuple[np.ndarray, np.ndarray]:
    """Lattice shells ``|m|^2`` and the summed ``|xi|^2 |u_hat|^2`` weight on each.

    Weights carry the lattice quadrature factor, so their total is ``|u|_Hdot1^2``.
    """
    g = u.grid
    coeffs = to_spectral(u).coeffs
    w = g.k2 * (coeffs.real**2 + coeffs.imag**2) * g.spectral_weight
    shells, inv = np.unique(g.mode_sq, return_inverse=True)
    return shells, np.bincount(inv.ravel(), weights=w.ravel(), minlength=shells.size)


def _ball_sum(u: Field, rho: float) -> float:
    shells, w = shell_spectrum(u)
    radii = u.grid.dk * np.sqrt(shells)
    return float(np.sum(w[(shells > 0) & (radii <= rho * (1 + 1e-12))]))


def decay_indicator(u0: Field, r: float, rho: float) -> float:
    """``rho^(-2r-d) sum_{0 < |xi| <= rho} |xi|^2 |u0_hat|^2`` (lattice weights)."""
    d = u0.grid.d
    if not r > -d / 2:
        raise ValueError(f"r must exceed -d/2 = {-d / 2}")
    if rho < u0.grid.dk * (1 - 1e-12):
        raise ValueError(f"unresolved ball: rho={rho} is below 2 pi / L = {u0.grid.dk}")
    return rho ** (-2.0 * r - d) * _ball_sum(u0, rho)


@dataclass(frozen=True)
class DecayCharacterEstimate:
    """Fitted decay character.

    ``sentinel`` is ``None`` for an interior estimate, ``"+inf"`` when the ball
    holds no spectral mass anywhere in the window, and ``"unstable"`` when the
    log-log fit is poor (``fit_r2 < 0.9``).
    """

    r_star: float
    rho_window: tuple
    slope: float
    fit_r2: float
    P_r: float
    n_shells: int
    slope_stderr: float = 0.0
    sentinel: Optional[str] = None

    @property
    def interior(self) -> bool:
        return self.sentinel is None


_ROUNDOFF = 1e-20


def default_window(u0: Field) -> tuple[float, float]:
    """``[2 dk, 8 dk]``, two octaves of lattice radii above the fundamental."""
    dk = u0.grid.dk
    nyq = dk * (u0.grid.N // 2)
    return 2.0 * dk, min(8.0 * dk, nyq)


def decay_character(u0: Field, window: Optional[Sequence[float]] = None) -> DecayCharacterEstimate:
    """Regress ``log S(rho)`` on ``log rho`` over the lattice shells inside ``window``."""
    g = u0.grid
    d = g.d
    rho_min, rho_max = default_window(u0) if window is None else (float(window[0]), float(window[1]))
    if not (0 < rho_min < rho_max):
        raise ValueError("empty window: need 0 < rho_min < rho_max")
    if rho_min < g.dk * (1 - 1e-12):
        raise ValueError(f"unresolved ball: rho_min={rho_min} is below 2 pi / L = {g.dk}")
    shells, w = shell_spectrum(u0)
    if not np.any(w[shells > 0] > 0):
        raise ValueError("all spectral mass sits in the zero mode")
    radii = g.dk * np.sqrt(shells)
    S = np.cumsum(w)  # w[0] is the zero shell and carries no weight
    sel = (shells > 0) & (radii >= rho_min * (1 - 1e-12)) & (radii <= rho_max * (1 + 1e-12))
    if np.count_nonzero(sel) < 2:
        raise ValueError("empty window: fewer than two lattice shells inside")
    rho, S = radii[sel], S[sel]
    # mass at transform roundoff level relative to the whole spectrum counts as none
    S = np.where(S > _ROUNDOFF * float(np.sum(w)), S, 0.0)
    if not np.any(S > 0):
        return DecayCharacterEstimate(math.inf, (rho_min, rho_max), math.inf, 0.0, 0.0, int(rho.size),
                                      sentinel="+inf")
    pos = S > 0
    x, y = np.log(rho[pos]), np.log(S[pos])
    if x.size < 2:
        return DecayCharacterEstimate(math.inf, (rho_min, rho_max), math.inf, 0.0, 0.0, int(x.size),
                                      sentinel="unstable")
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), res, *_ = np.linalg.lstsq(A, y, rcond=None)
    yhat = A @ np.array([slope, icpt])
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if x.size > 2:
        se = math.sqrt(ss_res / (x.size - 2) / float(np.sum((x - x.mean()) ** 2)))
    else:
        se = 0.0
    sentinel = None if (r2 >= 0.9 and pos.all()) else "unstable"
    return DecayCharacterEstimate(
        r_star=0.5 * (float(slope) - d),
        rho_window=(rho_min, rho_max),
        slope=float(slope),
        fit_r2=r2,
        P_r=float(math.exp(icpt)),
        n_shells=int(x.size),
        slope_stderr=se,
        sentinel=sentinel,
    )


@dataclass(frozen=True)
class RatePrediction:
    r_star: float
    gamma: float
    regime: str  # "SlowSpectral" when 2 + r* < 1, else "Saturated"


def predicted_gamma(r_star: float) -> RatePrediction:
    """Hdot1 decay exponent ``gamma = min(1 + r*/2, 1/2)`` for ``r* > -2``."""
    if not r_star > -2:
        raise ValueError(f"r*={r_star} is outside the theorem hypothesis r* > -2")
    gamma = min(1.0 + 0.5 * r_star, 0.5)
    return RatePrediction(r_star, gamma, "SlowSpectral" if 2.0 + r_star < 1.0 else "Saturated")


@dataclass(frozen=True)
class DecayFit:
    gamma_hat: float
    confidence: float  # standard error of the slope
    n_samples: int
    t_window: tuple


def fit_power_law(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Slope and its standard error for ``log y`` against ``log(1 + t)``."""
    x = np.log1p(np.asarray(t, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    slope, icpt = np.polyfit(x, ly, 1)
    resid = ly - (slope * x + icpt)
    n = x.size
    sxx = float(np.sum((x - x.mean()) ** 2))
    se = math.sqrt(float(np.sum(resid**2)) / (n - 2) / sxx) if n > 2 and sxx > 0 else 0.0
    return float(slope), se


def fit_decay_exponent(traj, t_window: Sequence[float], min_samples: int = 10) -> DecayFit:
    """``gamma_hat = -slope`` of ``log |u|_Hdot1`` against ``log(1 + t)`` on the window.

    ``traj`` is a ``Trajectory`` or a pair ``(times, h1)``.
    """
    if isinstance(traj, Trajectory):
        t, h = traj.array("times"), traj.array("h1")
    else:
        t, h = (np.asarray(a, dtype=float) for a in traj)
    t1, t2 = float(t_window[0]), float(t_window[1])
    if not t1 < t2:
        raise ValueError("t_window must satisfy t1 < t2")
    sel = (t >= t1) & (t <= t2)
    if np.count_nonzero(sel) < min_samples:
        raise ValueError(f"insufficient samples: {np.count_nonzero(sel)} in [{t1}, {t2}], need {min_samples}")
    if not np.all(h[sel] > 0) or not np.all(np.isfinite(h[sel])):
        raise ValueError("Hdot1 norm must be positive and finite on the window")
    slope, se = fit_power_law(t[sel], h[sel])
    return DecayFit(-slope, se, int(np.count_nonzero(sel)), (t1, t2))


@dataclass(frozen=True)
class SplitResult:
    low: float
    high: float

    @property
    def total(self) -> float:
        return self.low + self.high


def fourier_split(u: Field, rho: float) -> SplitResult:
    """Split ``|u|_Hdot1^2`` into the ball ``|xi| <= rho`` and its complement."""
    if not rho >= 0:
        raise ValueError("rho must be non-negative")
    g = u.grid
    coeffs = np.fft.fftn(u.values)
    w = g.k2 * (coeffs.real**2 + coeffs.imag**2) * (g.cell_volume / g.size)
    inside = g.k2 <= rho * rho * (1 + 1e-12) if math.isfinite(rho) else np.ones(g.shape, dtype=bool)
    return SplitResult(float(np.sum(w[inside])), float(np.sum(w[~inside])))


def splitting_exponent(d: int) -> float:
    """``2(d+4) / (d(3d-4))``: 14/15 for d = 3, 1/2 for d = 4."""
    return 2.0 * (d + 4) / (d * (3 * d - 4))


def splitting_radius(t: float, g_choice: str, C0: float, d: int, alpha: Optional[float] = None) -> float:
    """Radius ``(g'(t) / (C0 g(t)))^(2(d+4)/(d(3d-4)))`` of the Fourier-splitting ball.

    ``g_choice`` is ``"log_cubed"`` (``g = ln(e+t)^3``) or ``"power"``
    (``g = (1+t)^alpha``, needs ``alpha > 0``).
    """
    if not t >= 0:
        raise ValueError("t must be non-negative")
    if not C0 > 0:
        raise ValueError("C0 must be positive")
    if d not in (3, 4):
        raise ValueError(f"dimension must be 3 or 4, got d={d}")
    if g_choice == "log_cubed":
        log_ratio = math.log(3.0) - math.log(math.e + t) - math.log(math.log(math.e + t))
    elif g_choice == "power":
        if alpha is None or not alpha > 0:
            raise ValueError("power(alpha) needs alpha > 0")
        log_ratio = math.log(alpha) - math.log1p(t)
    else:
        raise ValueError(f"unknown g_choice {g_choice!r}")
    # log space keeps the t = 0 values exact (e^(-14/15) and 1 for the standard choices)
    return math.exp(splitting_exponent(d) * (log_ratio - math.log(C0)))


def decay_report(
    u0: Field,
    traj: Trajectory,
    t_window: Sequence[float],
    rho_window: Optional[Sequence[float]] = None,
) -> dict:
    """JSON-ready decay summary: r*, predicted and fitted exponents, fit diagnostics."""
    est = decay_character(u0, rho_window)
    pred = predicted_gamma(est.r_star) if est.interior and est.r_star > -2 else None
    fit = fit_decay_exponent(traj, t_window)
    return {
        "r_star": est.r_star,
        "rho_window": list(est.rho_window),
        "decay_character": {k: v for k, v in asdict(est).items() if k not in ("rho_window",)},
        "gamma_predicted": None if pred is None else pred.gamma,
        "regime": None if pred is None else pred.regime,
        "gamma_hat": fit.gamma_hat,
        "fit_window": list(fit.t_window),
        "fit": {"stderr": fit.confidence, "n_samples": fit.n_samples},
    }


def dumps_report(report: dict) -> str:
    # infinities become strings so that the file stays strict JSON
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v

    return json.dumps(clean(report), indent=2, sort_keys=True, allow_nan=False)
