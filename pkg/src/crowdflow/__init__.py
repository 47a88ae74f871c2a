"""Pseudospectral simulation and verification lab for a nonlocal
crowding-diffusion model on the unit torus.

Layering: :mod:`crowdflow.spectral` (transforms, smoothing, Sobolev norms)
-> :mod:`crowdflow.model` (data, nonlinearities, right-hand sides)
-> :mod:`crowdflow.integrate` (guarded RK4 runs)
-> :mod:`crowdflow.analysis` (envelopes, audits, ladders, property suites)
-> :mod:`crowdflow.scenario` (files, validation, orchestration, outputs)
-> :mod:`crowdflow.cli`.
"""

from .spectral import (
    GridField,
    SpectralField,
    TorusGrid,
    forward_transform,
    inverse_transform,
    laplacian,
    mollify,
    sobolev_inner,
    sobolev_norm,
)
from .model import (
    ModelData,
    ModelParams,
    PositivityError,
    rhs_classical,
    rhs_regularized,
)
from .integrate import SolverConfig, Trajectory, integrate, stable_dt
from .analysis import envelope, existence_horizon, mollifier_lemma_suite
from .scenario import Scenario, load_scenario, run_scenario

__version__ = "0.1.0"

__all__ = [
    "TorusGrid",
    "GridField",
    "SpectralField",
    "forward_transform",
    "inverse_transform",
    "mollify",
    "laplacian",
    "sobolev_inner",
    "sobolev_norm",
    "ModelParams",
    "ModelData",
    "PositivityError",
    "rhs_classical",
    "rhs_regularized",
    "SolverConfig",
    "Trajectory",
    "integrate",
    "stable_dt",
    "envelope",
    "existence_horizon",
    "mollifier_lemma_suite",
    "Scenario",
    "load_scenario",
    "run_scenario",
    "__version__",
]
