"""Initial-data families around the ground state and the classification suites.

Every W-based family is built from the sampled, rescaled ground state
``W_lam``.  Reference constants enter only through ``ReferenceConstants``; pass
the cube-domain constants of the box to compare against what the grid can
actually represent, or the R^d constants for the textbook ratios.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .evolution import FlowParams, StepControl, Trajectory, Verdict, dissipation_residual, run
from .grid import Field, Grid, hdot1_norm, to_physical, SpectralField
from .ground_state import (
    GroundStateParams,
    ReferenceConstants,
    critical_exponent,
    energy,
    make_W,
    potential_integral,
    reference_constants,
    stationary_residual,
)

__all__ = [
    "InitialDataSpec",
    "InitialData",
    "ClassificationReport",
    "SearchError",
    "KINDS",
    "build_initial_data",
    "scaled_w_ratios",
    "classify_run",
    "run_scenario",
    "dichotomy_suite",
    "trichotomy_suite",
    "threshold_search",
    "calibrate_threshold",
    "worker_count",
    "default_grid",
    "dichotomy_control",
]

KINDS = ("ScaledW", "RescaledW", "Gaussian", "SpectralProfile", "WPlusBump")


class SearchError(RuntimeError):
    """The secant search did not reach the threshold-energy shell."""


def default_grid(d: int) -> Grid:
    """64^3 on a box of side 60 for d = 3, 32^4 on side 40 for d = 4."""
    return Grid(3, 64, 60.0) if d == 3 else Grid(4, 32, 40.0)


@dataclass(frozen=True)
class InitialDataSpec:
    """Declarative initial data.

    Parameters used per kind:

    - ``ScaledW``: ``c * W_lam`` (``c > 0``)
    - ``RescaledW``: ``W_lam``
    - ``Gaussian``: ``amplitude * exp(-|x|^2 / width^2)``
    - ``SpectralProfile``: ``u_hat = amplitude |xi|^k exp(-width^2 |xi|^2 / 4)``
    - ``WPlusBump``: ``c * W_lam + eps * exp(-|x - offset|^2 / bump_width^2)``

    ``hdot1``, when set, rescales Gaussian and SpectralProfile data to that
    Hdot1 norm (the amplitude is then ignored).
    """

    kind: str
    c: float = 1.0
    lam: float = 1.0
    width: float = 1.0
    amplitude: float = 1.0
    k: float = 0.0
    eps: float = 0.0
    bump_width: float = 2.0
    offset: Optional[tuple] = None
    hdot1: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown initial-data kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "ScaledW" and not self.c > 0:
            raise ValueError("ScaledW(c) requires c > 0")
        if not self.lam > 0 or not self.width > 0 or not self.bump_width > 0:
            raise ValueError("lam, width and bump_width must be positive")
        if self.kind == "SpectralProfile" and not self.k >= 0:
            raise ValueError("SpectralProfile needs k >= 0")
        if self.hdot1 is not None and not self.hdot1 > 0:
            raise ValueError("hdot1 target must be positive")
        if self.offset is not None:
            object.__setattr__(self, "offset", tuple(float(v) for v in self.offset))

    def label(self) -> str:
        if self.kind == "ScaledW":
            return f"ScaledW(c={self.c:g},lam={self.lam:g})"
        if self.kind == "RescaledW":
            return f"RescaledW(lam={self.lam:g})"
        if self.kind == "Gaussian":
            return f"Gaussian(width={self.width:g})"
        if self.kind == "SpectralProfile":
            return f"SpectralProfile(k={self.k:g},width={self.width:g})"
        return f"WPlusBump(c={self.c:g},eps={self.eps:.6g},bump_width={self.bump_width:g})"


@dataclass(frozen=True, eq=False)
class InitialData:
    field: Field
    energy_ratio: float
    kinetic_ratio: float
    closed_form: bool  # ratios from the analytic formula rather than quadrature


def scaled_w_ratios(c: float, refs: ReferenceConstants) -> tuple[float, float]:
    """``(E(cW)/E(W), c)`` from the reference integrals.

    ``E(cW) = c^2 G/2 - (d-2)/(2d) c^p P`` with ``G = |grad W|^2``, ``P = |W|_p^p``.
    On R^d, ``G = P`` and the ratio reduces to ``(d c^2 - (d-2) c^p) / 2``.
    """
    d = refs.d
    p = critical_exponent(d)
    G, P = refs.gradW_l2_sq, refs.potential
    e = 0.5 * c * c * G - (d - 2) / (2.0 * d) * c**p * P
    return e / refs.energy_W, c


def _bump(grid: Grid, width: float, offset) -> np.ndarray:
    r = grid.radius(offset)
    return np.exp(-(r / width) ** 2)


def _bump_offset(spec: InitialDataSpec, grid: Grid) -> tuple:
    if spec.offset is not None:
        if len(spec.offset) != grid.d:
            raise ValueError(f"offset needs {grid.d} components")
        return spec.offset
    if spec.seed is not None:
        rng = np.random.default_rng(spec.seed)
        return tuple(rng.uniform(-grid.L / 4, grid.L / 4, grid.d))
    return (grid.L / 4,) + (0.0,) * (grid.d - 1)


def _spectral_profile(grid: Grid, k: float, width: float) -> Field:
    kk = np.sqrt(grid.k2)
    coeffs = kk**k * np.exp(-(width**2) * grid.k2 / 4.0)
    return Field(grid, to_physical(SpectralField(grid, coeffs)).values.real)


def build_initial_data(spec: InitialDataSpec, grid: Grid, refs: Optional[ReferenceConstants] = None) -> InitialData:
    """Sample the initial data and report its energy and kinetic ratios against W.

    ``refs`` defaults to the R^d constants.  ScaledW and RescaledW ratios come
    from the closed form; the other kinds use grid quadrature.
    """
    d = grid.d
    if refs is None:
        refs = reference_constants(d)
    if refs.d != d:
        raise ValueError("reference constants are for a different dimension")
    kind = spec.kind
    if kind in ("ScaledW", "RescaledW"):
        c = spec.c if kind == "ScaledW" else 1.0
        f = c * make_W(grid, GroundStateParams(lam=spec.lam))
        er, kr = scaled_w_ratios(c, refs)
        return InitialData(f, er, kr, True)
    if kind == "Gaussian":
        x2 = grid.radius() ** 2
        f = Field(grid, spec.amplitude * np.exp(-x2 / spec.width**2))
    elif kind == "SpectralProfile":
        f = spec.amplitude * _spectral_profile(grid, spec.k, spec.width)
    else:
        W = make_W(grid, GroundStateParams(lam=spec.lam))
        f = spec.c * W + Field(grid, spec.eps * _bump(grid, spec.bump_width, _bump_offset(spec, grid)))
    if spec.hdot1 is not None and kind in ("Gaussian", "SpectralProfile"):
        h = hdot1_norm(f)
        if h == 0:
            raise ValueError("cannot rescale a field with zero gradient")
        f = f * (spec.hdot1 / h)
    if not f.is_finite():
        raise ValueError("initial data is not finite")
    return InitialData(f, energy(f) / refs.energy_W, hdot1_norm(f) / refs.gradW_norm, False)


@dataclass
class ClassificationReport:
    scenario_id: str
    energy_ratio: float
    kinetic_ratio: float
    verdict: str  # Dissipated | StationaryPersist | BlowUp | Undecided
    evidence: dict = field(default_factory=dict)
    reason: Optional[str] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict == "Undecided" and not self.reason:
            raise ValueError("an Undecided verdict needs a reason")

    def to_json(self) -> str:
        return json.dumps(_json_safe(asdict(self)), sort_keys=True, allow_nan=False)


def _json_safe(v):
    if isinstance(v, float):
        return v if math.isfinite(v) else str(v)
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag}
    if isinstance(v, dict):
        return {str(k): _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, np.generic):
        return _json_safe(v.item())
    return v


def classify_run(
    traj: Trajectory,
    refs: ReferenceConstants,
    *,
    scenario_id: str = "run",
    energy_ratio: Optional[float] = None,
    kinetic_ratio: Optional[float] = None,
    persist_tol: float = 0.05,
    dissipated_fraction: float = 0.5,
) -> ClassificationReport:
    """Map a finished run onto Dissipated / StationaryPersist / BlowUp / Undecided.

    A run that reached the horizon counts as

    - StationaryPersist if every sample keeps Hdot1 within ``persist_tol`` of
      ``|grad W|`` and the final stationary residual is below twice the initial;
    - Dissipated if Hdot1 never increases over the last quarter of the samples
      and ends below ``dissipated_fraction`` of its initial value.
    """
    h = traj.array("h1")
    t = traj.array("times")
    h0 = float(h[0]) if h.size else 0.0
    ev = {
        "h1_initial": h0,
        "h1_final": float(h[-1]) if h.size else math.nan,
        "t_final": float(t[-1]) if t.size else 0.0,
        "run_verdict": traj.verdict.value,
        "steps_accepted": traj.steps_accepted,
        "steps_rejected": traj.steps_rejected,
    }
    if kinetic_ratio is None:
        kinetic_ratio = h0 / refs.gradW_norm
    if energy_ratio is None:
        energy_ratio = float(traj.energy[0]) / refs.energy_W if traj.energy else math.nan
    rep = dict(scenario_id=scenario_id, energy_ratio=energy_ratio, kinetic_ratio=kinetic_ratio)
    if traj.verdict == Verdict.BLOWUP:
        ev["blowup_time"] = traj.last_reliable_time
        ev["h1_max_ratio"] = float(np.nanmax(h) / h0) if h0 > 0 else math.inf
        return ClassificationReport(verdict="BlowUp", evidence=ev, **rep)
    if traj.verdict == Verdict.DISSIPATED:
        ev.update(_decay_evidence(traj, t, h))
        return ClassificationReport(verdict="Dissipated", evidence=ev, **rep)
    if traj.verdict == Verdict.STEP_UNDERFLOW:
        ev["last_reliable_time"] = traj.last_reliable_time
        return ClassificationReport(verdict="Undecided", evidence=ev,
                                    reason="resolution loss: step size underflow without blow-up", **rep)
    if traj.verdict != Verdict.REACHED_HORIZON or h.size < 2:
        return ClassificationReport(verdict="Undecided", evidence=ev, reason="run did not complete", **rep)
    dev = float(np.max(np.abs(h / refs.gradW_norm - 1.0)))
    ev["max_rel_dev_from_W"] = dev
    snaps = traj.snapshots
    res0 = res1 = math.nan
    if len(snaps) >= 2 and np.any(snaps[0][1].values) and np.any(snaps[-1][1].values):
        res0 = stationary_residual(snaps[0][1])
        res1 = stationary_residual(snaps[-1][1])
        ev["residual_initial"], ev["residual_final"] = res0, res1
    if dev <= persist_tol and res1 < 2.0 * res0:
        return ClassificationReport(verdict="StationaryPersist", evidence=ev, **rep)
    tail = h[-max(2, h.size // 4):]
    non_increasing = bool(np.all(np.diff(tail) <= 0))
    ev["tail_non_increasing"] = non_increasing
    if non_increasing and h[-1] < dissipated_fraction * h0:
        ev.update(_decay_evidence(traj, t, h))
        return ClassificationReport(verdict="Dissipated", evidence=ev, **rep)
    return ClassificationReport(verdict="Undecided", evidence=ev,
                                reason="horizon reached without a clear trend", **rep)


def _decay_evidence(traj: Trajectory, t: np.ndarray, h: np.ndarray) -> dict:
    from .decay import fit_power_law

    out = {}
    if len(traj) >= 3 and len(traj.diss) == len(traj) == len(traj.energy):
        out["dissipation_residual"] = dissipation_residual(traj)
    sel = (t >= 0.5 * t[-1]) & (h > 0) & np.isfinite(h)
    if np.count_nonzero(sel) >= 3:
        slope, se = fit_power_law(t[sel], h[sel])
        out["late_decay_exponent"] = -slope
        out["late_decay_stderr"] = se
    return out


def dichotomy_control(t_max: float = 400.0) -> StepControl:
    """Run control for the ScaledW suites: dense early samples, sparse late ones."""
    return StepControl(dt_init=1e-2, dt_min=1e-10, dt_max=5.0, tol=1e-8, t_max=t_max,
                       dt_out=0.05, out_growth=1.05, dt_out_max=5.0)


def worker_count(n_jobs: int) -> int:
    """Pool size: ``CGLLAB_THREADS`` if set, else the available parallelism."""
    env = os.environ.get("CGLLAB_THREADS")
    try:
        cap = int(env) if env else (len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity")
                                    else (os.cpu_count() or 1))
    except ValueError:
        raise ValueError(f"CGLLAB_THREADS must be an integer, got {env!r}") from None
    return max(1, min(cap, n_jobs))


@dataclass(frozen=True)
class _Job:
    scenario_id: str
    spec: InitialDataSpec
    grid: Grid
    flow: FlowParams
    ctrl: StepControl
    refs: ReferenceConstants
    energy_ratio: Optional[float] = None
    kinetic_ratio: Optional[float] = None


def run_scenario(job: _Job) -> ClassificationReport:
    data = build_initial_data(job.spec, job.grid, job.refs)
    traj = run(data.field, job.flow, job.ctrl)
    er = data.energy_ratio if job.energy_ratio is None else job.energy_ratio
    kr = data.kinetic_ratio if job.kinetic_ratio is None else job.kinetic_ratio
    rep = classify_run(traj, job.refs, scenario_id=job.scenario_id, energy_ratio=er, kinetic_ratio=kr)
    rep.params = {"initial_data": asdict(job.spec), "grid": job.grid.describe(),
                  "z": [job.flow.z.real, job.flow.z.imag]}
    return rep


def _run_jobs(jobs: Sequence[_Job], workers: Optional[int]) -> list[ClassificationReport]:
    n = worker_count(len(jobs)) if workers is None else max(1, min(workers, len(jobs)))
    if n == 1:
        reports = [run_scenario(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            reports = list(pool.map(run_scenario, jobs))
    return sorted(reports, key=lambda r: r.scenario_id)


def dichotomy_suite(
    d: int,
    z: complex,
    c_values: Sequence[float],
    *,
    grid: Optional[Grid] = None,
    lam: float = 1.0,
    ctrl: Optional[StepControl] = None,
    refs: Optional[ReferenceConstants] = None,
    workers: Optional[int] = None,
) -> list[ClassificationReport]:
    """Run ``ScaledW(c)`` for every ``c`` and classify.

    Below-threshold energies need ``c != 1``.  ``refs`` defaults to the cube
    constants of the box, the threshold the sampled W actually sees.
    """
    if any(c == 1 for c in c_values):
        raise ValueError("dichotomy suite needs c != 1 (strictly below-threshold energy)")
    if any(not c > 0 for c in c_values):
        raise ValueError("scale factors must be positive")
    flow = FlowParams(z)
    grid = default_grid(d) if grid is None else grid
    if grid.d != d:
        raise ValueError("grid dimension does not match d")
    refs = reference_constants(d, box_length=grid.L, lam=lam) if refs is None else refs
    ctrl = dichotomy_control() if ctrl is None else ctrl
    jobs = [_Job(f"dichotomy-z{flow.z.real:g}{flow.z.imag:+g}i-c{c:.4f}",
                 InitialDataSpec("ScaledW", c=c, lam=lam), grid, flow, ctrl, refs) for c in c_values]
    return _run_jobs(jobs, workers)


def threshold_search(
    grid: Grid,
    refs: ReferenceConstants,
    base_c: float,
    *,
    lam: float = 1.0,
    bump_width: float = 4.0,
    offset: Optional[tuple] = None,
    eps1: Optional[float] = None,
    target: float = 1.0,
    rtol: float = 1e-8,
    max_iter: int = 50,
    shell: float = 1e-3,
) -> tuple[InitialDataSpec, float, int]:
    """Secant search for the bump amplitude putting ``E(c W + eps B)`` at ``target * E(W)``.

    ``eps1`` is the second starting amplitude (the first is 0); by default it
    comes from the bump's own kinetic energy.
    Returns the WPlusBump ``InitialDataSpec``, the achieved energy ratio, and the number of iterations.
    Raises ``SearchError`` if the ratio is not within ``shell`` after ``max_iter``.
    """
    W = make_W(grid, GroundStateParams(lam=lam))
    off = (grid.L / 4,) + (0.0,) * (grid.d - 1) if offset is None else tuple(offset)
    B = _bump(grid, bump_width, off)

    # energy is even to leading order in eps, so search in s = eps^2 where it is nearly linear
    def f(s):
        return energy(base_c * W + Field(grid, math.sqrt(s) * B)) / refs.energy_W - target

    a = 0.0
    fa = f(a)
    kin_B = 0.5 * hdot1_norm(Field(grid, B)) ** 2
    b = max(-fa * refs.energy_W / kin_B, 1e-12) if eps1 is None else eps1**2
    fb = f(b)
    it = 0
    for it in range(1, max_iter + 1):
        if abs(fb) <= rtol:
            break
        if fb == fa:
            raise SearchError("secant search stalled: flat energy along the bump direction")
        nxt = b - fb * (b - a) / (fb - fa)
        if nxt < 0:
            nxt = 0.5 * b
        a, b, fa = b, nxt, fb
        fb = f(b)
    ratio = fb + target
    if not abs(ratio - target) <= shell:
        raise SearchError(f"energy ratio {ratio:.6g} not within {shell} of {target} after {max_iter} iterations")
    spec = InitialDataSpec("WPlusBump", c=base_c, lam=lam, eps=math.sqrt(b), bump_width=bump_width, offset=off)
    return spec, ratio, it


def trichotomy_suite(
    d: int,
    z: complex,
    *,
    grid: Optional[Grid] = None,
    lam: float = 3.0,
    c_below: float = 0.75,
    c_above: float = 1.1,
    bump_width: Optional[float] = None,
    horizon_A: float = 10.0,
    horizon_B: float = 200.0,
    horizon_C: float = 200.0,
    refs: Optional[ReferenceConstants] = None,
    workers: Optional[int] = None,
) -> list[ClassificationReport]:
    """Three threshold-energy scenarios: A = W, B below and C above in kinetic energy.

    B and C are ``c W + eps * bump`` with ``eps`` found by secant search so that
    ``E(u0) = E(W)`` to 1e-8; the kinetic ratio must then clear 1 by at least 1e-2.
    """
    flow = FlowParams(z)
    grid = default_grid(d) if grid is None else grid
    refs = reference_constants(d, box_length=grid.L, lam=lam) if refs is None else refs
    bw = 1.5 * lam if bump_width is None else bump_width
    off = (grid.L / 4,) + (0.0,) * (d - 1)
    spec_B, er_B, _ = threshold_search(grid, refs, c_below, lam=lam, bump_width=bw, offset=off)
    spec_C, er_C, _ = threshold_search(grid, refs, c_above, lam=lam, bump_width=bw, offset=off)
    for name, spec, side in (("B", spec_B, -1), ("C", spec_C, +1)):
        kr = build_initial_data(spec, grid, refs).kinetic_ratio
        if side * (kr - 1.0) < 1e-2:
            raise SearchError(f"case {name}: kinetic ratio {kr:.4f} is not on the declared side of 1 by 1e-2")

    def ctrl(t_max, dense):
        if dense:
            return StepControl(dt_init=1e-2, dt_max=1.0, tol=1e-8, t_max=t_max, dt_out=0.25, snapshot_every=0)
        return StepControl(dt_init=1e-2, dt_max=5.0, tol=1e-8, t_max=t_max, dt_out=0.05,
                           out_growth=1.05, dt_out_max=5.0)

    jobs = [
        _Job("trichotomy-A", InitialDataSpec("ScaledW", c=1.0, lam=lam), grid, flow, ctrl(horizon_A, True), refs),
        _Job("trichotomy-B", spec_B, grid, flow, ctrl(horizon_B, False), refs),
        _Job("trichotomy-C", spec_C, grid, flow, ctrl(horizon_C, False), refs),
    ]
    return _run_jobs(jobs, workers)


def calibrate_threshold(
    grid: Grid,
    z: complex,
    *,
    lam: float = 1.0,
    c_lo: float = 0.95,
    c_hi: float = 1.15,
    iterations: int = 10,
    t_max: float = 10.0,
    tol: float = 1e-7,
) -> dict:
    """Bisect along the ray ``c W`` for the discrete threshold ``c*``.

    The sampled W on a box is not a fixed point of the discrete flow; the
    stable-manifold crossing of the ray sits at ``c* != 1``.  A trial counts as
    above threshold if it blows up and as below if Hdot1 falls under 80% of its
    initial value; a trial that does neither by ``t_max`` ends the bisection.
    Returns ``c*`` and the Hdot1 excursion (relative to its own start) of a
    run from ``c* W``.
    """
    W = make_W(grid, GroundStateParams(lam=lam))
    flow = FlowParams(z)
    ctrl = StepControl(dt_init=1e-2, dt_max=0.5, tol=tol, t_max=t_max, dt_out=0.2)
    history = []

    def trial(c):
        traj = run(c * W, flow, ctrl)
        rel = traj.array("h1") / traj.h1[0]
        if traj.verdict == Verdict.BLOWUP:
            side = +1
        elif np.nanmin(rel) < 0.8:
            side = -1
        else:
            side = 0
        return side, traj, rel

    for _ in range(iterations):
        c = 0.5 * (c_lo + c_hi)
        side, traj, rel = trial(c)
        history.append({"c": c, "side": side, "t_final": float(traj.times[-1])})
        if side > 0:
            c_hi = c
        elif side < 0:
            c_lo = c
        else:
            break
    c_star = c if side == 0 else 0.5 * (c_lo + c_hi)
    if side != 0:
        side, traj, rel = trial(c_star)
    finite = rel[np.isfinite(rel)]
    return {
        "c_star": c_star,
        "bracket": [c_lo, c_hi],
        "history": history,
        "final_side": side,
        "t_final": float(traj.times[-1]),
        "persist_min_rel": float(finite.min()),
        "persist_max_rel": float(finite.max()),
        "h1_initial": float(traj.h1[0]),
    }
