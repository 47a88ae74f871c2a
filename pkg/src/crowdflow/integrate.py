"""Method-of-lines integration of the smoothed evolution with guard events.

The semi-discrete system rho' = A_eps[rho] is stepped with classical RK4.
The smoothing caps the diffusion symbol, so an explicit method with the
stability-derived step below is adequate; the eps = 0 limit stays feasible at
desk-scale resolutions.

A run lives inside the guarded set

    { rho : ||rho||_{H^m} < K  and  min rho > rho_floor / 2 },

with rho_floor the minimum of the initial condition.  Leaving the set is an
outcome, not an error: the trajectory terminates with a guard event naming
which boundary was hit.  A positivity failure inside an RK4 stage terminates
with a step-failure carrying the offending stage time.

Runs are deterministic: the step sequence is a pure function of the
configuration and data, and no randomness enters the loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelData, PositivityError, rhs_regularized
from .spectral import (
    GridField,
    SpectralField,
    TorusGrid,
    forward_transform,
    inverse_transform,
    min_value,
    order_weights,
    sobolev_norm,
    sup_norm,
)

__all__ = [
    "RK4_STABILITY_EXTENT",
    "FixedDt",
    "AutoDt",
    "SolverConfig",
    "Diagnostics",
    "RunState",
    "TerminalStatus",
    "Trajectory",
    "StepFailure",
    "stable_dt",
    "step_rk4",
    "guard_check",
    "integrate",
]

#: Real-axis extent of the classical RK4 stability region.
RK4_STABILITY_EXTENT = 2.785


@dataclass(frozen=True)
class FixedDt:
    dt: float

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("fixed step size must be positive")


@dataclass(frozen=True)
class AutoDt:
    safety: float = 0.8

    def __post_init__(self) -> None:
        if not 0.0 < self.safety <= 1.0:
            raise ValueError("safety factor must lie in (0, 1]")


DtPolicy = FixedDt | AutoDt


@dataclass(frozen=True)
class SolverConfig:
    """Run settings: smoothing strength, horizon, guard ball and cadence.

    guard_m is the Sobolev index of the norm guard (default: smallest integer
    exceeding d + 3, chosen per grid at scenario build time); guard_k is the
    ball radius.  record_every controls how often full diagnostics snapshots
    are kept; the initial and final states are always recorded.
    """

    epsilon: float
    t_end: float
    guard_k: float
    guard_m: int
    dt_policy: DtPolicy = AutoDt()
    record_every: int = 1
    dealias: bool = False

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.guard_k > 0:
            raise ValueError("guard radius must be positive")
        if not (isinstance(self.guard_m, int) and 1 <= self.guard_m <= 11):
            raise ValueError("guard Sobolev index must be an integer in [1, 11]")
        if not (isinstance(self.record_every, int) and self.record_every >= 1):
            raise ValueError("record_every must be a positive integer")


def default_guard_m(d: int) -> int:
    """Smallest integer exceeding d + 3."""
    return d + 4


@dataclass(frozen=True)
class Diagnostics:
    """Per-record measurements.

    sup_rhs is the running sup of ||rho_t||_inf over every right-hand-side
    evaluation so far (all RK4 stages included) -- the observed bound used by
    the lower-bound certificate.  dissipation is the smoothed top-order
    Dirichlet integrand sum_{|alpha| = m+1} ||d^alpha J_eps rho||_{L2}^2,
    reported as a monitored quantity only.
    """

    mass: float
    min_rho: float
    max_rho: float
    energy_m: float
    sup_rhs: float
    dt: float
    dissipation: float


@dataclass(frozen=True)
class RunState:
    t: float
    rho: SpectralField
    rho_floor: float
    sobolev_index: int
    kstar: float
    diagnostics: Diagnostics


@dataclass(frozen=True)
class TerminalStatus:
    kind: str  # "completed" | "guard" | "step-failure"
    t: float
    guard_kind: str | None = None
    detail: str = ""


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered snapshots plus the terminal status of one run."""

    records: tuple[RunState, ...]
    status: TerminalStatus
    rho_floor: float
    guard_m: int
    epsilon: float

    def __post_init__(self) -> None:
        if not self.records:
            raise ValueError("a trajectory needs at least one record")
        times = [r.t for r in self.records]
        if times[0] != 0.0:
            raise ValueError("first record must sit at t = 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("record times must be strictly increasing")

    @property
    def final(self) -> RunState:
        return self.records[-1]

    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])


class StepFailure(Exception):
    """An RK4 stage hit a nonpositive density."""

    def __init__(self, stage_time: float, reason: str):
        super().__init__(f"step failure at stage time {stage_time:.6e}: {reason}")
        self.stage_time = stage_time
        self.reason = reason


# ---------------------------------------------------------------------------

def stable_dt(epsilon: float, grid: TorusGrid, data: ModelData, safety: float = 1.0) -> float:
    """Largest stable RK4 step for the linearized symbol.

    dt = safety * 2.785 / (lam_diff + lam_react) with
    lam_diff = delta u_plus max_k 4 pi^2 |k|^2 exp(-2 eps |k|^2) over resolved
    modes and lam_react = sup omega + sup gamma.  Returns inf when both
    vanish (callers cap at the horizon).
    """
    if not 0.0 < safety <= 1.0:
        raise ValueError("safety factor must lie in (0, 1]")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    k2 = grid.wavenumber_sq()
    sym = 4.0 * np.pi**2 * k2
    if epsilon > 0:
        sym = sym * np.exp(-2.0 * epsilon * k2)
    lam_diff = data.params.delta * data.params.u_plus * float(sym.max())
    lam_react = sup_norm(data.omega) + sup_norm(data.gamma)
    lam = lam_diff + lam_react
    if lam == 0.0:
        return math.inf
    return safety * RK4_STABILITY_EXTENT / lam


def _rhs_or_fail(coeffs: np.ndarray, grid: TorusGrid, t_stage: float,
                 epsilon: float, data: ModelData, dealias: bool) -> SpectralField:
    try:
        return rhs_regularized(SpectralField(grid, coeffs), epsilon, data, dealias=dealias)
    except PositivityError as exc:
        raise StepFailure(t_stage, str(exc)) from exc


def _diagnostics(rho: SpectralField, vals: np.ndarray, m: int, epsilon: float,
                 kstar: float, dt: float) -> Diagnostics:
    g = rho.grid
    flat0 = (0,) * g.d
    absq = np.abs(rho.coeffs) ** 2
    top = order_weights(g, m + 1)
    if epsilon > 0:
        absq_top = absq * np.exp(-2.0 * epsilon * g.wavenumber_sq())
    else:
        absq_top = absq
    return Diagnostics(
        mass=float(rho.coeffs[flat0].real),
        min_rho=float(vals.min()),
        max_rho=float(vals.max()),
        energy_m=0.5 * sobolev_norm(rho, m) ** 2,
        sup_rhs=kstar,
        dt=dt,
        dissipation=float(np.sum(top * absq_top)),
    )


def step_rk4(state: RunState, dt: float, epsilon: float, data: ModelData,
             *, dealias: bool = False) -> RunState:
    """One classical fourth-order step; refreshes diagnostics and the running
    sup of ||rho_t||_inf over the four stage evaluations."""
    if not dt > 0:
        raise ValueError("step size must be positive")
    g = state.rho.grid
    c = state.rho.coeffs
    t = state.t

    k1 = _rhs_or_fail(c, g, t, epsilon, data, dealias)
    k2 = _rhs_or_fail(c + 0.5 * dt * k1.coeffs, g, t + 0.5 * dt, epsilon, data, dealias)
    k3 = _rhs_or_fail(c + 0.5 * dt * k2.coeffs, g, t + 0.5 * dt, epsilon, data, dealias)
    k4 = _rhs_or_fail(c + dt * k3.coeffs, g, t + dt, epsilon, data, dealias)

    kstar = state.kstar
    for stage in (k1, k2, k3, k4):
        kstar = max(kstar, sup_norm(inverse_transform(stage)))

    new_coeffs = c + (dt / 6.0) * (k1.coeffs + 2.0 * k2.coeffs + 2.0 * k3.coeffs + k4.coeffs)
    new_rho = SpectralField(g, new_coeffs)
    new_vals = inverse_transform(new_rho).values
    diag = _diagnostics(new_rho, new_vals, state.sobolev_index, epsilon, kstar, dt)
    return RunState(
        t=t + dt,
        rho=new_rho,
        rho_floor=state.rho_floor,
        sobolev_index=state.sobolev_index,
        kstar=kstar,
        diagnostics=diag,
    )


def guard_check(state: RunState, config: SolverConfig) -> str | None:
    """Outcome of the guarded-set membership test: None while inside,
    otherwise "nonfinite", "norm-exit" or "positivity-exit"."""
    d = state.diagnostics
    scalars = (d.mass, d.min_rho, d.max_rho, d.energy_m)
    if not all(np.isfinite(s) for s in scalars) or not np.all(np.isfinite(state.rho.coeffs)):
        return "nonfinite"
    if math.sqrt(max(2.0 * d.energy_m, 0.0)) >= config.guard_k:
        return "norm-exit"
    if d.min_rho <= 0.5 * state.rho_floor:
        return "positivity-exit"
    return None


def integrate(rho0: GridField, data: ModelData, config: SolverConfig) -> Trajectory:
    """Run the smoothed system from rho0 until t_end or a guard event.

    Deterministic for a given (rho0, data, config): the step sequence is
    fixed up front (fixed dt, or the stability bound times the safety factor)
    and the final step is shortened to land on t_end exactly.
    """
    if rho0.grid != data.grid:
        raise ValueError("initial condition and model data live on different grids")
    floor = min_value(rho0)
    if floor <= 0:
        raise ValueError(f"initial density must be strictly positive (min = {floor:.6e})")
    m = config.guard_m

    if isinstance(config.dt_policy, FixedDt):
        dt = config.dt_policy.dt
    else:
        dt = stable_dt(config.epsilon, rho0.grid, data, config.dt_policy.safety)
    dt = min(dt, config.t_end)  # the no-stiffness sentinel is capped at the horizon

    rho = forward_transform(rho0)
    vals = rho0.values
    try:
        rhs0 = rhs_regularized(rho, config.epsilon, data, dealias=config.dealias)
        kstar = sup_norm(inverse_transform(rhs0))
    except PositivityError as exc:
        state = RunState(0.0, rho, floor, m, 0.0,
                         _diagnostics(rho, vals, m, config.epsilon, 0.0, 0.0))
        return Trajectory((state,), TerminalStatus("step-failure", 0.0, detail=str(exc)),
                          floor, m, config.epsilon)

    state = RunState(0.0, rho, floor, m, kstar,
                     _diagnostics(rho, vals, m, config.epsilon, kstar, 0.0))
    records = [state]

    kind = guard_check(state, config)
    if kind is not None:
        return Trajectory(tuple(records), TerminalStatus("guard", 0.0, guard_kind=kind),
                          floor, m, config.epsilon)

    steps = 0
    eps_t = 1e-12 * config.t_end
    while True:
        remaining = config.t_end - state.t
        if remaining <= eps_t:
            status = TerminalStatus("completed", state.t)
            break
        dt_step = dt if remaining > dt * (1.0 + 1e-12) else remaining
        try:
            state = step_rk4(state, dt_step, config.epsilon, data, dealias=config.dealias)
        except StepFailure as exc:
            status = TerminalStatus("step-failure", exc.stage_time, detail=exc.reason)
            break
        steps += 1
        final = (config.t_end - state.t) <= eps_t
        kind = guard_check(state, config)
        if steps % config.record_every == 0 or final or kind is not None:
            records.append(state)
        if kind is not None:
            status = TerminalStatus("guard", state.t, guard_kind=kind)
            break

    return Trajectory(tuple(records), status, floor, m, config.epsilon)
