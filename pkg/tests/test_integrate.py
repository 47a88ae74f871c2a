import numpy as np
import pytest

from crowdflow.integrate import (
    AutoDt,
    FixedDt,
    RK4_STABILITY_EXTENT,
    SolverConfig,
    default_guard_m,
    guard_check,
    integrate,
    stable_dt,
    step_rk4,
)
from crowdflow.model import ModelParams
from crowdflow.spectral import (
    GridField,
    SpectralField,
    forward_transform,
    sobolev_norm,
)
from conftest import smooth_field, toy_data


def constant_field(grid, c):
    return GridField(grid, np.full(grid.shape, c))


def steady_data(grid, rho_c=2.0, omega_c=0.05):
    return toy_data(grid,
                    kappa=constant_field(grid, 0.7),
                    eta=constant_field(grid, omega_c * rho_c),
                    omega=constant_field(grid, omega_c),
                    gamma=constant_field(grid, 0.4))


def make_config(**kw):
    args = dict(epsilon=0.05, t_end=0.2, guard_k=1e9, guard_m=5)
    args.update(kw)
    return SolverConfig(**args)


# ---------------------------------------------------------------------------
# configuration

def test_solver_config_validation():
    with pytest.raises(ValueError):
        make_config(epsilon=-0.1)
    with pytest.raises(ValueError):
        make_config(t_end=0.0)
    with pytest.raises(ValueError):
        make_config(guard_k=0.0)
    with pytest.raises(ValueError):
        make_config(guard_m=12)
    with pytest.raises(ValueError):
        make_config(record_every=0)
    with pytest.raises(ValueError):
        SolverConfig(epsilon=0.0, t_end=1.0, guard_k=1.0, guard_m=5,
                     dt_policy=AutoDt(1.5))
    with pytest.raises(ValueError):
        FixedDt(0.0)


def test_default_guard_m():
    assert default_guard_m(1) == 5
    assert default_guard_m(2) == 6


# ---------------------------------------------------------------------------
# stable_dt

def test_stable_dt_formula_unsmoothed(grid1d):
    # formula-evaluation oracle: d=1, n=64, eps=0, delta=0.1, u+=0.9,
    # omega = gamma = 0 -> lam = 0.09 * 4 pi^2 * 32^2, dt = 2.785 / lam
    zero = constant_field(grid1d, 0.0)
    data = toy_data(grid1d, omega=zero, gamma=zero,
                    params=ModelParams(0.1, 0.9, 0.5, 1.0))
    lam = 0.1 * 0.9 * 4 * np.pi**2 * 32**2
    assert lam == pytest.approx(3.64e3, rel=2e-3)
    got = stable_dt(0.0, grid1d, data)
    assert got == pytest.approx(RK4_STABILITY_EXTENT / lam, rel=1e-12)
    assert got == pytest.approx(7.65e-4, rel=2e-3)


def test_stable_dt_smoothed_below_analytic_sup(grid1d):
    # discrete max over modes never exceeds delta u+ 2 pi^2 / (e eps)
    zero = constant_field(grid1d, 0.0)
    data = toy_data(grid1d, omega=zero, gamma=zero,
                    params=ModelParams(0.1, 0.9, 0.5, 1.0))
    eps = 0.01
    analytic = 0.1 * 0.9 * 2 * np.pi**2 / (np.e * eps)
    assert analytic == pytest.approx(65.3, rel=2e-3)
    got = stable_dt(eps, grid1d, data)
    assert got >= RK4_STABILITY_EXTENT / analytic
    assert got == pytest.approx(0.0426, rel=5e-2)


def test_stable_dt_infinite_when_no_stiffness(grid1d):
    zero = constant_field(grid1d, 0.0)
    data = toy_data(grid1d, omega=zero, gamma=zero)
    # strong smoothing underflows every k != 0 multiplier to zero
    assert stable_dt(500.0, grid1d, data) == np.inf
    cfg = make_config(epsilon=500.0, t_end=0.7, guard_m=5)
    data_steady = steady_data(grid1d)
    traj = integrate(constant_field(grid1d, 2.0),
                     toy_data(grid1d, omega=zero, gamma=zero,
                              eta=zero, kappa=constant_field(grid1d, 0.7)),
                     cfg)
    # the infinite step is capped at the horizon: a single step completes it
    assert traj.status.kind == "completed"
    assert len(traj.records) == 2


def test_stable_dt_safety_window(grid1d):
    data = toy_data(grid1d)
    with pytest.raises(ValueError):
        stable_dt(0.0, grid1d, data, safety=0.0)
    with pytest.raises(ValueError):
        stable_dt(0.0, grid1d, data, safety=1.1)


# ---------------------------------------------------------------------------
# stepping

def test_step_preserves_steady_state(grid1d):
    data = steady_data(grid1d)
    cfg = make_config()
    traj = integrate(constant_field(grid1d, 2.0), data, cfg)
    state = traj.records[0]
    out = step_rk4(state, 1e-3, 0.05, data)
    assert np.array_equal(out.rho.coeffs, state.rho.coeffs)
    assert out.t == pytest.approx(1e-3)


def test_step_pure_decay_matches_exponential(grid1d):
    # scalar ODE oracle: rho_t = -omega rho with delta-free dynamics is not
    # reachable (delta > 0), but a constant state with kappa = 0, gamma = 0
    # and eta = 0 decays pointwise like exp(-omega t)
    omega_c = 0.8
    zero = constant_field(grid1d, 0.0)
    data = toy_data(grid1d, kappa=zero, eta=zero, gamma=zero,
                    omega=constant_field(grid1d, omega_c))
    cfg = make_config(epsilon=0.0, t_end=1.0)
    traj = integrate(constant_field(grid1d, 1.0), data, cfg)
    dt = 0.125
    state = step_rk4(traj.records[0], dt, 0.0, data)
    got = state.rho.mode((0,)).real
    exact = np.exp(-omega_c * dt)
    assert abs(got - exact) / exact <= (omega_c * dt) ** 5


def test_step_richardson_order(grid1d):
    # one-step Richardson oracle: local error drops by about 2^5 per halving
    data = toy_data(grid1d)
    rho0 = smooth_field(grid1d, np.random.default_rng(8), offset=1.5)
    cfg = make_config(epsilon=0.05, t_end=1.0)
    base = integrate(rho0, data, make_config(epsilon=0.05, t_end=1e-6)).records[0]
    dt0 = 0.02

    def one_step_error(dt):
        coarse = step_rk4(base, dt, 0.05, data)
        fine = base
        for _ in range(64):
            fine = step_rk4(fine, dt / 64, 0.05, data)
        return np.max(np.abs(coarse.rho.coeffs - fine.rho.coeffs))

    e1, e2 = one_step_error(dt0), one_step_error(dt0 / 2)
    order = np.log2(e1 / e2)
    assert 4.5 <= order <= 5.5


def test_step_failure_reports_stage_time(grid1d):
    # strong sink drives the density negative inside the step
    zero = constant_field(grid1d, 0.0)
    data = toy_data(grid1d, kappa=zero, eta=zero, gamma=zero,
                    omega=constant_field(grid1d, 50.0))
    cfg = make_config(epsilon=0.0, t_end=2.0, dt_policy=FixedDt(0.5))
    rho0 = constant_field(grid1d, 1.0)
    traj = integrate(rho0, data, cfg)
    assert traj.status.kind == "step-failure"
    assert traj.status.t > 0.0


# ---------------------------------------------------------------------------
# guards

def test_guard_check_fresh_state_ok(grid1d):
    data = steady_data(grid1d)
    cfg = make_config(guard_k=1e9)
    traj = integrate(constant_field(grid1d, 2.0), data, cfg)
    assert guard_check(traj.records[0], cfg) is None


def test_guard_norm_exit_on_scaled_state(grid1d):
    data = steady_data(grid1d)
    cfg = make_config(guard_k=10.0)
    traj = integrate(constant_field(grid1d, 2.0), data, cfg)
    state = traj.records[0]
    big = SpectralField(grid1d, state.rho.coeffs * 1e6)
    from dataclasses import replace
    diag = replace(state.diagnostics, energy_m=0.5 * sobolev_norm(big, 5) ** 2)
    scaled = replace(state, rho=big, diagnostics=diag)
    assert guard_check(scaled, cfg) == "norm-exit"


def test_guard_positivity_exit_on_shifted_state(grid1d):
    data = steady_data(grid1d)
    cfg = make_config()
    traj = integrate(constant_field(grid1d, 2.0), data, cfg)
    state = traj.records[0]
    from dataclasses import replace
    shifted = replace(state, diagnostics=replace(state.diagnostics, min_rho=0.9))
    assert guard_check(shifted, cfg) == "positivity-exit"  # floor is 2.0


def test_guard_nonfinite(grid1d):
    data = steady_data(grid1d)
    cfg = make_config()
    traj = integrate(constant_field(grid1d, 2.0), data, cfg)
    state = traj.records[0]
    from dataclasses import replace
    broken = replace(state, diagnostics=replace(state.diagnostics, energy_m=np.nan))
    assert guard_check(broken, cfg) == "nonfinite"


# ---------------------------------------------------------------------------
# integrate

def test_integrate_requires_positive_initial(grid1d):
    data = steady_data(grid1d)
    with pytest.raises(ValueError, match="strictly positive"):
        integrate(constant_field(grid1d, 0.0), data, make_config())


def test_integrate_steady_state_constant_trajectory(grid1d):
    data = steady_data(grid1d)
    for eps in (0.0, 0.05):
        traj = integrate(constant_field(grid1d, 2.0), data,
                         make_config(epsilon=eps, t_end=0.4))
        assert traj.status.kind == "completed"
        drift = np.max(np.abs(traj.final.rho.coeffs - traj.records[0].rho.coeffs))
        assert drift <= 1e-12


def test_integrate_mass_conserved_without_sources(grid1d):
    zero = constant_field(grid1d, 0.0)
    data = toy_data(grid1d, eta=zero, omega=zero)
    rho0 = smooth_field(grid1d, np.random.default_rng(1), offset=1.5)
    traj = integrate(rho0, data, make_config(epsilon=0.05, t_end=0.5))
    assert traj.status.kind == "completed"
    m0 = traj.records[0].diagnostics.mass
    mT = traj.final.diagnostics.mass
    assert abs(mT - m0) <= 1e-8 * abs(m0)


def test_integrate_immediate_norm_exit(grid1d):
    data = steady_data(grid1d)
    traj = integrate(constant_field(grid1d, 2.0), data, make_config(guard_k=1.0))
    assert traj.status.kind == "guard"
    assert traj.status.guard_kind == "norm-exit"
    assert traj.status.t == 0.0
    assert len(traj.records) == 1


def test_integrate_determinism(grid1d):
    data = toy_data(grid1d)
    rho0 = smooth_field(grid1d, np.random.default_rng(17), offset=1.4)
    cfg = make_config(epsilon=0.05, t_end=0.3)
    a = integrate(rho0, data, cfg)
    b = integrate(rho0, data, cfg)
    assert np.array_equal(a.final.rho.coeffs, b.final.rho.coeffs)
    assert a.times().tolist() == b.times().tolist()


def test_integrate_epsilon_continuity_at_zero(grid1d):
    # eps = 0 and eps = 1e-12 stay within 1e-8 in L2 at the final time
    data = toy_data(grid1d)
    rho0 = smooth_field(grid1d, np.random.default_rng(23), offset=1.4)
    dt = 0.5 * stable_dt(0.0, grid1d, data)
    a = integrate(rho0, data, make_config(epsilon=0.0, t_end=0.1,
                                          dt_policy=FixedDt(dt)))
    b = integrate(rho0, data, make_config(epsilon=1e-12, t_end=0.1,
                                          dt_policy=FixedDt(dt)))
    gap = sobolev_norm(SpectralField(grid1d, a.final.rho.coeffs - b.final.rho.coeffs), 0)
    assert gap <= 1e-8


def test_integrate_global_order(grid1d):
    # Richardson oracle over a dt ladder: observed global order near 4
    data = toy_data(grid1d)
    rho0 = smooth_field(grid1d, np.random.default_rng(30), offset=1.4)
    t_end = 0.2
    dt = 0.005

    def final(dt_step):
        cfg = make_config(epsilon=0.05, t_end=t_end, dt_policy=FixedDt(dt_step))
        traj = integrate(rho0, data, cfg)
        assert traj.status.kind == "completed"
        return traj.final.rho.coeffs

    s1, s2, s3 = final(dt), final(dt / 2), final(dt / 4)
    d1 = np.linalg.norm(s1 - s2)
    d2 = np.linalg.norm(s2 - s3)
    order = np.log2(d1 / d2)
    assert 3.7 <= order <= 4.3


def test_record_cadence_and_monotone_times(grid1d):
    data = toy_data(grid1d)
    rho0 = smooth_field(grid1d, np.random.default_rng(2), offset=1.5)
    cfg = make_config(epsilon=0.05, t_end=0.3, record_every=3,
                      dt_policy=FixedDt(0.01))
    traj = integrate(rho0, data, cfg)
    times = traj.times()
    assert times[0] == 0.0
    assert np.all(np.diff(times) > 0)
    assert traj.final.t == pytest.approx(0.3, abs=1e-12)
    # 30 steps, every third recorded plus the initial record
    assert len(traj.records) == 11


def test_kstar_running_sup_is_nondecreasing(grid1d):
    data = toy_data(grid1d)
    rho0 = smooth_field(grid1d, np.random.default_rng(6), offset=1.5)
    traj = integrate(rho0, data, make_config(epsilon=0.05, t_end=0.3))
    sups = [r.diagnostics.sup_rhs for r in traj.records]
    assert all(b >= a for a, b in zip(sups, sups[1:]))
    assert traj.final.kstar == sups[-1] > 0


def test_integrate_two_dimensional_run(grid2d):
    # same machinery in d = 2: completes, conserves mass without sources,
    # and the first record equals the initial condition
    x, y = grid2d.coordinates()
    zero = constant_field(grid2d, 0.0)
    data = toy_data(grid2d,
                    kappa=GridField(grid2d, 0.5 + 0.2 * np.cos(2 * np.pi * x)),
                    eta=zero, omega=zero,
                    gamma=GridField(grid2d, 0.3 + 0.1 * np.sin(2 * np.pi * y)))
    rho0 = GridField(grid2d, 1.0 + 0.1 * np.cos(2 * np.pi * x)
                     + 0.05 * np.cos(2 * np.pi * (x + y)))
    cfg = SolverConfig(epsilon=0.05, t_end=0.2, guard_k=1e9, guard_m=6)
    traj = integrate(rho0, data, cfg)
    assert traj.status.kind == "completed"
    assert np.array_equal(traj.records[0].rho.coeffs,
                          forward_transform(rho0).coeffs)
    m0 = traj.records[0].diagnostics.mass
    assert abs(traj.final.diagnostics.mass - m0) <= 1e-10 * abs(m0)
