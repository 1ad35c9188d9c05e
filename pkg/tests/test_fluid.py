"""Fluid limit-system solvers: steady states, manufactured-solution orders,
self-convergence, guard rails."""

import numpy as np
import pytest

from qnlab.errors import ClassicalSolutionLost, StepRejectedError
from qnlab.fluid import (
    FluidState,
    euler_isothermal_step,
    euler_magnetized_step,
    euler_poisson_step,
    gradient_blowup,
    run_fluid,
    shallow_water_step,
)
from qnlab.grids import SpatialGrid, quadrature
from qnlab.poisson import BackgroundProfile


def make_torus(n):
    return SpatialGrid.torus(1.0, n)


def fft_upsample(values, n_fine):
    """Trigonometric interpolation of a periodic field onto a finer grid."""
    n = len(values)
    c = np.fft.rfft(values) / n
    out = np.zeros(n_fine // 2 + 1, dtype=complex)
    out[: len(c)] = c
    if n % 2 == 0:
        out[n // 2] *= 0.5  # split the shared Nyquist mode
    return np.fft.irfft(out * n_fine, n=n_fine)


def march(step, state, t_final, dt):
    n = int(round(t_final / dt))
    for _ in range(n):
        state = step(state, dt)
    return state


class TestSteadyStates:
    def test_confined_hydrostatic_exact(self):
        """rho = c*d, u = 0 is an exact discrete steady state."""
        grid = SpatialGrid.truncated_line(12.0, 128)
        bg = BackgroundProfile.sqrt_confinement(grid)
        state = FluidState(grid, 0.37 * bg.d, np.zeros(grid.shape))
        out = march(lambda s, dt: euler_isothermal_step(s, bg, dt), state, 0.05, 1e-3)
        assert np.max(np.abs(out.rho - state.rho)) < 1e-13
        assert np.max(np.abs(out.velocity)) < 1e-13

    def test_shallow_water_uniform_steady(self):
        grid = make_torus(64)
        state = FluidState(grid, np.ones(64), np.zeros(64))
        out = march(shallow_water_step, state, 0.1, 1e-3)
        assert np.max(np.abs(out.rho - 1.0)) < 1e-14
        assert np.max(np.abs(out.velocity)) < 1e-14

    def test_magnetized_steady_and_passive_constant(self):
        grid = SpatialGrid.truncated_line(12.0, 128)
        bg = BackgroundProfile.sqrt_confinement(grid)
        w = np.zeros((3, 128))
        w[1] = 0.25  # constant perpendicular momentum: no forcing on it
        state = FluidState(grid, bg.d / quadrature(bg.d, grid), w)
        out = march(lambda s, dt: euler_magnetized_step(s, bg, dt), state, 0.05, 1e-3)
        assert np.max(np.abs(out.velocity[1] - 0.25)) < 1e-12
        assert np.max(np.abs(out.velocity[0])) < 1e-12

    def test_euler_poisson_uniform_steady(self):
        grid = make_torus(64)
        state = FluidState(grid, np.ones(64), np.zeros(64), T=1.0)
        out = march(lambda s, dt: euler_poisson_step(s, 1e-2, dt), state, 0.05, 5e-4)
        assert np.max(np.abs(out.rho - 1.0)) < 1e-10
        assert np.max(np.abs(out.velocity)) < 1e-10


def manufactured_isothermal(grid, t, b=0.15, c=0.2, sound2=1.0):
    """rho = 1 + b sin(th), u = c cos(th), th = 2 pi x - t; returns fields
    and the source arrays making them an exact solution."""
    k, om = 2 * np.pi, 1.0
    x = grid.axes()[0]
    th = k * x - om * t
    rho = 1 + b * np.sin(th)
    u = c * np.cos(th)
    rho_t = -om * b * np.cos(th)
    rho_x = k * b * np.cos(th)
    u_t = om * c * np.sin(th)
    u_x = -k * c * np.sin(th)
    s_rho = rho_t + rho_x * u + rho * u_x
    s_mom = (rho_t * u + rho * u_t) + (rho_x * u**2 + 2 * rho * u * u_x) + sound2 * rho_x
    return rho, u, s_rho, s_mom


def manufactured_shallow(grid, t, b=0.15, c=0.2):
    k, om = 2 * np.pi, 1.0
    x = grid.axes()[0]
    th = k * x - om * t
    rho = 1 + b * np.sin(th)
    u = c * np.cos(th)
    rho_t = -om * b * np.cos(th)
    rho_x = k * b * np.cos(th)
    u_t = om * c * np.sin(th)
    u_x = -k * c * np.sin(th)
    s_rho = rho_t + rho_x * u + rho * u_x
    s_mom = (rho_t * u + rho * u_t) + (rho_x * u**2 + 2 * rho * u * u_x) + rho * rho_x
    return rho, u, s_rho, s_mom


def mms_order(step_name, limiter="minmod"):
    """Observed L1 order under refinement against the manufactured solution."""
    t_final = 0.25
    errs, ns = [], (64, 128, 256)
    for n in ns:
        grid = make_torus(n)
        dt = 0.2 / n
        if step_name == "isothermal":
            mk = manufactured_isothermal
        else:
            mk = manufactured_shallow
        rho0, u0, _, _ = mk(grid, 0.0)
        state = FluidState(grid, rho0, u0)

        if step_name == "isothermal":
            bg = BackgroundProfile.uniform(grid)

            def step(s, dt_):
                src = lambda t: mk(grid, t)[2:]
                return euler_isothermal_step(s, bg, dt_, limiter=limiter,
                                             extra_source=src)
        else:
            def step(s, dt_):
                src = lambda t: mk(grid, t)[2:]
                return shallow_water_step(s, dt_, limiter=limiter, extra_source=src)

        out = march(step, state, t_final, dt)
        rho_ex, u_ex, _, _ = mk(grid, out.time)
        errs.append(quadrature(np.abs(out.rho - rho_ex), grid)
                    + quadrature(np.abs(out.rho * out.velocity - rho_ex * u_ex), grid))
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(len(ns) - 1)]
    return min(orders)


@pytest.mark.parametrize("system", ["isothermal", "shallow"])
def test_manufactured_order(system):
    """Smooth manufactured solutions converge at order >= 1.8 in L1."""
    assert mms_order(system) >= 1.8


def test_magnetized_manufactured_order():
    """Parallel dynamics + passive advection at order >= 1.8."""
    t_final = 0.25
    errs, ns = [], (64, 128, 256)
    for n in ns:
        grid = make_torus(n)
        bg = BackgroundProfile.uniform(grid)
        dt = 0.2 / n
        k = 2 * np.pi

        def fields(t):
            x = grid.axes()[0]
            th = k * x - t
            rho = 1 + 0.15 * np.sin(th)
            wpar = 0.2 * np.cos(th)
            wperp = 0.1 * np.sin(th)
            return rho, wpar, wperp

        def source(t):
            x = grid.axes()[0]
            th = k * x - t
            rho, wpar, wperp = fields(t)
            rho_t, rho_x = -0.15 * np.cos(th), k * 0.15 * np.cos(th)
            wp_t, wp_x = 0.2 * np.sin(th), -k * 0.2 * np.sin(th)
            wq_t, wq_x = -0.1 * np.cos(th), k * 0.1 * np.cos(th)
            s_rho = rho_t + rho_x * wpar + rho * wp_x
            s_mpar = (rho_t * wpar + rho * wp_t) + (rho_x * wpar**2 + 2 * rho * wpar * wp_x) + rho_x
            s_mq = (rho_t * wperp + rho * wq_t) + rho_x * wpar * wperp \
                + rho * (wp_x * wperp + wpar * wq_x)
            s_m = np.stack([s_mpar, s_mq, np.zeros_like(s_mq)])
            return s_rho, s_m

        rho0, wpar0, wperp0 = fields(0.0)
        w0 = np.stack([wpar0, wperp0, np.zeros_like(wperp0)])
        state = FluidState(grid, rho0, w0)
        out = march(lambda s, dt_: euler_magnetized_step(s, bg, dt_, extra_source=source),
                    state, t_final, dt)
        rho_ex, wpar_ex, wperp_ex = fields(out.time)
        errs.append(quadrature(np.abs(out.rho - rho_ex), grid)
                    + quadrature(np.abs(out.velocity[0] - wpar_ex), grid)
                    + quadrature(np.abs(out.velocity[1] - wperp_ex), grid))
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(len(ns) - 1)]
    assert min(orders) >= 1.8


def test_euler_poisson_self_convergence():
    """EP solution refines toward the fine-grid reference at order >= 1.8."""
    eps, T, t_final = 1e-2, 1.0, 0.1

    def run(n):
        grid = make_torus(n)
        x = grid.axes()[0]
        state = FluidState(grid, 1 + 0.05 * np.cos(2 * np.pi * x),
                           np.zeros(n), T=T)
        return march(lambda s, dt: euler_poisson_step(s, eps, dt),
                     state, t_final, 0.08 / n)

    fine = run(512)
    errs = []
    for n in (64, 128):
        out = run(n)
        errs.append(np.mean(np.abs(fft_upsample(out.rho, 512) - fine.rho)))
    assert np.log2(errs[0] / errs[1]) >= 1.8


@pytest.mark.parametrize("system", ["isothermal", "shallow"])
def test_gaussian_bump_self_convergence(system):
    """Smooth density ramp at rest vs fine-grid reference before the shock
    time (L1 <= 1e-3)."""
    t_final = 0.1

    def run(n):
        grid = make_torus(n)
        x = grid.axes()[0]
        rho = 1 + 0.3 * np.exp(-80 * (x - 0.5) ** 2)
        state = FluidState(grid, rho, np.zeros(n))
        if system == "isothermal":
            bg = BackgroundProfile.uniform(grid)
            step = lambda s, dt: euler_isothermal_step(s, bg, dt)
        else:
            step = shallow_water_step
        return march(step, state, t_final, 0.1 / n)

    fine = run(1024)
    coarse = run(256)
    err = np.mean(np.abs(fft_upsample(coarse.rho, 1024) - fine.rho))
    assert err <= 1e-3


def test_cfl_rejection():
    grid = make_torus(64)
    state = FluidState(grid, np.ones(64), np.zeros(64))
    with pytest.raises(StepRejectedError) as exc:
        shallow_water_step(state, dt=1.0)
    assert exc.value.suggested_dt is not None


def test_vacuum_rejection():
    grid = make_torus(64)
    rho = np.ones(64)
    rho[10] = 1e-15
    state = FluidState(grid, rho, np.zeros(64))
    with pytest.raises(StepRejectedError):
        shallow_water_step(state, dt=1e-3)


def test_blowup_monitor():
    grid = make_torus(64)
    x = grid.axes()[0]
    state = FluidState(grid, np.ones(64), 10 * np.sin(2 * np.pi * x))
    bg = BackgroundProfile.uniform(grid)
    with pytest.raises(ClassicalSolutionLost):
        gradient_blowup(state, bg, threshold=50.0)


def test_mass_conservation():
    """Discrete mass conserved to 1e-10 per unit time (conservative fluxes)."""
    grid = make_torus(128)
    x = grid.axes()[0]
    state = FluidState(grid, 1 + 0.2 * np.sin(2 * np.pi * x), 0.1 * np.cos(2 * np.pi * x))
    m0 = quadrature(state.rho, grid)
    out = march(shallow_water_step, state, 0.2, 1e-3)
    assert abs(quadrature(out.rho, grid) - m0) < 1e-10 * abs(m0)


def test_run_fluid_sampling():
    grid = make_torus(64)
    x = grid.axes()[0]
    state = FluidState(grid, 1 + 0.05 * np.sin(2 * np.pi * x), np.zeros(64))
    _, samples = run_fluid(shallow_water_step, state, 0.1, 1e-3,
                           sample_times=np.array([0.0, 0.05, 0.1]))
    assert set(np.round(list(samples), 3)) == {0.0, 0.05, 0.1}
    assert samples[0.05].time == pytest.approx(0.05, abs=1e-9)


def test_symmetrized_variable_round_trip():
    """Initialization through log(rho/d) and the diagnostic inverse agree."""
    grid = SpatialGrid.truncated_line(10.0, 64)
    bg = BackgroundProfile.sqrt_confinement(grid)
    x = grid.axes()[0]
    logr = 0.3 * np.exp(-(x**2))
    state = FluidState.from_log_ratio(grid, logr, np.zeros(64), bg)
    assert np.min(state.rho) > 0
    assert np.max(np.abs(state.log_ratio(bg) - logr)) < 1e-14
