"""Pseudo-spectral simulation and analysis of the energy-critical complex Ginzburg-Landau flow.

``u_t = z (Delta u + |u|^(4/(d-2)) u)``, ``Re z > 0``, on a periodic box in d = 3, 4.
"""

__version__ = "0.1.0"

from .grid import Field, Grid, SpectralField, hdot1_norm, l2_norm, lp_norm, make_grid  # noqa: E402
from .ground_state import (  # noqa: E402
    GroundStateParams,
    ReferenceConstants,
    energy,
    make_W,
    reference_constants,
    stationary_residual,
)
from .evolution import FlowParams, StepControl, Trajectory, Verdict, run, step  # noqa: E402

__all__ = [
    "Field",
    "Grid",
    "SpectralField",
    "make_grid",
    "hdot1_norm",
    "l2_norm",
    "lp_norm",
    "GroundStateParams",
    "ReferenceConstants",
    "energy",
    "make_W",
    "reference_constants",
    "stationary_residual",
    "FlowParams",
    "StepControl",
    "Trajectory",
    "Verdict",
    "run",
    "step",
]
