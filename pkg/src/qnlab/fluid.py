"""Finite-volume solvers for the limit fluid systems.

One MUSCL/Rusanov engine drives four 1D systems: isothermal Euler with a
confining potential, inviscid shallow water (pressure rho^2/2), the
magnetized parallel system (scalar isothermal dynamics plus passively
advected perpendicular momentum), and the isothermal Euler-Poisson system
whose electric force is recomputed from the nonlinear closure at every
stage.

Scheme: second-order MUSCL reconstruction with a slope limiter on the
primitive pair (rho/d, u), Rusanov fluxes, SSP Runge-Kutta 2 in time.
Reconstructing rho/d instead of rho makes the confined hydrostatic state
rho = c*d, u = 0 an exact discrete steady state (the interface pressure
jump cancels the source term identically).  Runs are meant to stop inside
the smooth-solution window; a gradient monitor trips when it closes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import ClassicalSolutionLost, ShapeError, StepRejectedError
from .grids import LINE, PERIODIC, SpatialGrid, gradient
from .poisson import BackgroundProfile, solve_poisson_S


@dataclass
class FluidState:
    """Limit-system unknowns on a 1D grid.

    ``velocity`` has shape (nx,) for scalar systems and (3, nx) for the
    magnetized system (filtered momentum w).  ``T`` is the scaled ion
    temperature of the Euler-Poisson system; None elsewhere.  Density is
    kept strictly positive by construction from the log-ratio.
    """

    grid: SpatialGrid
    rho: np.ndarray
    velocity: np.ndarray
    T: float | None = None
    time: float = 0.0

    def __post_init__(self):
        if self.rho.shape != self.grid.shape:
            raise ShapeError("rho shape mismatch")
        if self.velocity.shape[-1] != self.grid.points[0]:
            raise ShapeError("velocity shape mismatch")

    @classmethod
    def from_log_ratio(cls, grid, log_ratio, velocity, bg: BackgroundProfile,
                       T: float | None = None, time: float = 0.0) -> "FluidState":
        return cls(grid, bg.d * np.exp(log_ratio), np.asarray(velocity, float), T, time)

    def log_ratio(self, bg: BackgroundProfile) -> np.ndarray:
        return np.log(self.rho / bg.d)

    def copy(self) -> "FluidState":
        return replace(self, rho=self.rho.copy(), velocity=self.velocity.copy())


def _limited_slope(q: np.ndarray, limiter: str) -> np.ndarray:
    """Limited slope per cell from neighbour differences (ghosted input)."""
    dl = q[1:-1] - q[:-2]
    dr = q[2:] - q[1:-1]
    if limiter == "none":
        return 0.5 * (dl + dr)
    if limiter == "minmod":
        s = np.sign(dl)
        return np.where(dl * dr > 0, s * np.minimum(np.abs(dl), np.abs(dr)), 0.0)
    if limiter == "mc":
        s = np.sign(dl)
        lim = np.minimum(2 * np.abs(dl), 2 * np.abs(dr))
        lim = np.minimum(lim, 0.5 * np.abs(dl + dr))
        return np.where(dl * dr > 0, s * lim, 0.0)
    raise ValueError(f"unknown limiter {limiter!r}")


def _pad(arr: np.ndarray, topology: str) -> np.ndarray:
    if topology == PERIODIC:
        return np.concatenate([arr[..., -1:], arr, arr[..., :1]], axis=-1)
    return np.concatenate([arr[..., :1], arr, arr[..., -1:]], axis=-1)


@dataclass(frozen=True)
class SystemSpec:
    """Flux/source closure handed to the MUSCL engine.

    ``sound2`` is dp/drho for the isothermal family (p = sound2 * rho);
    shallow water switches to p = rho^2/2.  ``n_passive`` counts passively
    advected momentum components (perpendicular w for the magnetized run).
    """

    sound2: float = 1.0
    pressure_law: str = "isothermal"  # "isothermal" | "shallow"
    n_passive: int = 0

    def pressure(self, rho):
        if self.pressure_law == "isothermal":
            return self.sound2 * rho
        return 0.5 * rho**2

    def sound_speed(self, rho):
        if self.pressure_law == "isothermal":
            return np.sqrt(self.sound2) * np.ones_like(rho)
        return np.sqrt(np.maximum(rho, 0.0))


def _interface_background(bg: BackgroundProfile):
    """d at the cell faces, incl. the two outer faces (analytic H when known)."""
    grid = bg.grid
    x = grid.axes()[0]
    dx = grid.spacing[0]
    faces = np.concatenate([[x[0] - 0.5 * dx], x + 0.5 * dx])
    if bg.H_fn is not None:
        return np.exp(-bg.H_fn(faces))
    Hc = _pad(bg.H, grid.topology)
    return np.exp(-0.5 * (Hc[:-1] + Hc[1:]))


def _muscl_rhs(spec: SystemSpec, grid: SpatialGrid, bg: BackgroundProfile,
               rho: np.ndarray, mom: np.ndarray, limiter: str,
               electric: np.ndarray | None = None,
               extra_source=None, t: float = 0.0):
    """Semi-discrete RHS for (rho, mom[, passive momenta]).

    Reconstruction acts on ``rho / d_a`` with ``d_a = exp(-H/a)`` for the
    isothermal pressure ``p = a*rho``: the hydrostatic profile rho ~ d_a,
    u = 0 is then an exact discrete steady state and the balanced source
    equals the physical force -rho*H_x for every sound speed.
    """
    dx = grid.spacing[0]
    topo = grid.topology
    flat = bool(np.all(bg.H == 0.0))
    a = spec.sound2 if spec.pressure_law == "isothermal" else 1.0
    if flat:
        d_cell = np.ones_like(bg.d)
        d_face = np.ones(grid.points[0] + 1)
    else:
        if spec.pressure_law == "isothermal" and a <= 0:
            raise ValueError("pressureless flow cannot balance a confining potential")
        d_cell = bg.d ** (1.0 / a)
        d_face = _interface_background(bg) ** (1.0 / a)

    q = rho / d_cell
    u = mom[0] / rho if mom.ndim == 2 else mom / rho
    mom2 = mom if mom.ndim == 2 else mom[None, :]
    w = mom2 / rho  # all velocity components

    qp = _pad(q, topo)
    wp = np.stack([_pad(w[c], topo) for c in range(w.shape[0])])

    sq = _limited_slope(qp, limiter)
    sw = np.stack([_limited_slope(wp[c], limiter) for c in range(w.shape[0])])
    # edge values; pad again so each interior face sees its two neighbours
    qL_cell = q - 0.5 * sq
    qR_cell = q + 0.5 * sq
    wL_cell = w - 0.5 * sw
    wR_cell = w + 0.5 * sw

    # states at faces 0..nx (left state from cell i-1's right edge, etc.)
    qm = _pad(qR_cell, topo)[:-1]
    qp_ = _pad(qL_cell, topo)[1:]
    wm = np.stack([_pad(wR_cell[c], topo)[:-1] for c in range(w.shape[0])])
    wpl = np.stack([_pad(wL_cell[c], topo)[1:] for c in range(w.shape[0])])

    rho_m = qm * d_face
    rho_p = qp_ * d_face
    um, up = wm[0], wpl[0]

    p_m = spec.pressure(rho_m)
    p_p = spec.pressure(rho_p)
    cmax = float(np.max(np.abs(u) + spec.sound_speed(rho)))
    if electric is not None:
        # effective acoustic speed of the coupled closure (electron pressure)
        cmax = float(np.max(np.abs(u)) + np.sqrt(spec.sound2 + 1.0))
    lam = cmax

    f_rho = 0.5 * (rho_m * um + rho_p * up) - 0.5 * lam * (rho_p - rho_m)
    f_mom = 0.5 * (rho_m * um**2 + p_m + rho_p * up**2 + p_p) \
        - 0.5 * lam * (rho_p * up - rho_m * um)
    fluxes = [f_rho, f_mom]
    for c in range(1, w.shape[0]):
        fluxes.append(
            0.5 * (rho_m * um * wm[c] + rho_p * up * wpl[c])
            - 0.5 * lam * (rho_p * wpl[c] - rho_m * wm[c])
        )

    if topo == LINE:
        # walls: no mass or passive-momentum exchange (the state is
        # hydrostatic with rho ~ 0 there); the momentum flux keeps its wall
        # pressure so the edge cell stays exactly balanced at rest
        for idx, f in enumerate(fluxes):
            if idx != 1:
                f[0] = 0.0
                f[-1] = 0.0

    rhs_rho = -(fluxes[0][1:] - fluxes[0][:-1]) / dx
    rhs_mom = np.empty_like(mom2)
    rhs_mom[0] = -(fluxes[1][1:] - fluxes[1][:-1]) / dx
    for c in range(1, w.shape[0]):
        rhs_mom[c] = -(fluxes[1 + c][1:] - fluxes[1 + c][:-1]) / dx

    if spec.pressure_law == "isothermal":
        # well-balanced confinement source -rho*H_x written as q*d_x so it
        # cancels the hydrostatic pressure-flux difference exactly when q is
        # constant and u = 0 (zero identically on flat backgrounds)
        rhs_mom[0] += spec.sound2 * q * (d_face[1:] - d_face[:-1]) / dx

    if electric is not None:
        rhs_mom[0] += -rho * electric
    if extra_source is not None:
        s_rho, s_mom = extra_source(t)
        rhs_rho = rhs_rho + s_rho
        rhs_mom = rhs_mom + (s_mom if s_mom.ndim == 2 else s_mom[None, :])

    return rhs_rho, rhs_mom, cmax


def _advance(spec: SystemSpec, state: FluidState, bg: BackgroundProfile, dt: float,
             limiter: str, cfl: float, electric_fn=None, extra_source=None) -> FluidState:
    """One SSP-RK2 step with CFL and vacuum guards."""
    grid = state.grid
    dx = grid.spacing[0]
    scalar = state.velocity.ndim == 1
    rho0 = state.rho
    mom0 = (state.velocity[None, :] if scalar else state.velocity) * rho0

    floor = 1e-12 * float(np.max(rho0))
    if np.min(rho0) <= floor:
        raise StepRejectedError("vacuum state: density at or below floor")

    def rhs(rho, mom, t):
        E = electric_fn(rho) if electric_fn is not None else None
        return _muscl_rhs(spec, grid, bg, rho, mom, limiter,
                          electric=E, extra_source=extra_source, t=t)

    r1, m1, cmax = rhs(rho0, mom0, state.time)
    if dt > cfl * dx / max(cmax, 1e-14):
        raise StepRejectedError(
            f"CFL violation: dt={dt:.3e} exceeds {cfl * dx / cmax:.3e}",
            suggested_dt=0.9 * cfl * dx / cmax,
        )
    rho_s = rho0 + dt * r1
    mom_s = mom0 + dt * m1
    if np.min(rho_s) <= floor:
        raise StepRejectedError("vacuum produced by predictor stage")
    r2, m2, _ = rhs(rho_s, mom_s, state.time + dt)
    rho_new = 0.5 * (rho0 + rho_s + dt * r2)
    mom_new = 0.5 * (mom0 + mom_s + dt * m2)
    if np.min(rho_new) <= floor:
        raise StepRejectedError("vacuum produced by corrector stage")
    vel_new = mom_new / rho_new
    return FluidState(grid, rho_new, vel_new[0] if scalar else vel_new,
                      state.T, state.time + dt)


def gradient_blowup(state: FluidState, bg: BackgroundProfile, threshold: float = 50.0) -> float:
    """max |d(u)/dx|; raises ClassicalSolutionLost beyond the threshold."""
    u = state.velocity if state.velocity.ndim == 1 else state.velocity[0]
    g = float(np.max(np.abs(gradient(u, state.grid)[0])))
    if g > threshold:
        raise ClassicalSolutionLost(f"max|du/dx| = {g:.2f} exceeds {threshold}")
    return g


def euler_isothermal_step(state: FluidState, bg: BackgroundProfile, dt: float,
                          limiter: str = "minmod", cfl: float = 0.45,
                          sound2: float = 1.0, extra_source=None) -> FluidState:
    """Isothermal Euler with confinement: du/dt + u u_x = -(rho_x/rho) - H_x.

    ``sound2`` generalizes the pressure to p = sound2 * rho (the
    quasineutral Euler reference uses sound2 = T + 1 with a flat
    background).
    """
    spec = SystemSpec(sound2=sound2, pressure_law="isothermal")
    return _advance(spec, state, bg, dt, limiter, cfl, extra_source=extra_source)


def shallow_water_step(state: FluidState, dt: float, limiter: str = "minmod",
                       cfl: float = 0.45, extra_source=None) -> FluidState:
    """Inviscid shallow water: du/dt + u u_x = -rho_x (p = rho^2/2)."""
    spec = SystemSpec(pressure_law="shallow")
    bg = BackgroundProfile.uniform(state.grid)
    return _advance(spec, state, bg, dt, limiter, cfl, extra_source=extra_source)


def euler_magnetized_step(state: FluidState, bg: BackgroundProfile, dt: float,
                          limiter: str = "minmod", cfl: float = 0.45,
                          extra_source=None) -> FluidState:
    """Parallel isothermal Euler for (rho, w_par); w_perp advected passively.

    ``state.velocity`` holds (w_par, w_perp1, w_perp2) stacked; only the
    parallel momentum feels pressure and confinement.
    """
    if state.velocity.ndim != 2 or state.velocity.shape[0] != 3:
        raise ShapeError("magnetized state needs a (3, nx) filtered momentum")
    spec = SystemSpec(sound2=1.0, pressure_law="isothermal", n_passive=2)
    return _advance(spec, state, bg, dt, limiter, cfl, extra_source=extra_source)


def euler_poisson_step(state: FluidState, epsilon: float, dt: float,
                       bg: BackgroundProfile | None = None,
                       limiter: str = "minmod", cfl: float = 0.45,
                       poisson_tol: float = 1e-11, extra_source=None) -> FluidState:
    """Isothermal Euler-Poisson: electric force from -eps V'' = rho - e^V.

    The nonlinear closure (flat background) is re-solved at every RK stage;
    T = state.T is the scaled ion temperature.
    """
    if state.T is None:
        raise ValueError("Euler-Poisson state needs an ion temperature T")
    grid = state.grid
    if bg is None:
        bg = BackgroundProfile.uniform(grid)
    spec = SystemSpec(sound2=float(state.T), pressure_law="isothermal")
    warm: dict = {"v": None}

    # _muscl_rhs adds "-rho * electric" to the momentum equation; the model
    # force is -rho * V_x, so pass electric = V_x.
    def electric_fn(rho):
        sol = solve_poisson_S(np.maximum(rho, 0.0), bg, epsilon,
                              tol=poisson_tol, v0=warm["v"])
        warm["v"] = sol.V
        return gradient(sol.V, grid)[0]

    return _advance(spec, state, bg, dt, limiter, cfl,
                    electric_fn=electric_fn, extra_source=extra_source)


def run_fluid(step_fn: Callable[[FluidState, float], FluidState], state: FluidState,
              t_final: float, dt: float, bg: BackgroundProfile | None = None,
              blowup_threshold: float = 50.0,
              sample_times: np.ndarray | None = None):
    """March a step function to t_final, sampling at requested times.

    Returns (final_state, samples) where samples maps each requested time
    to the state snapshot taken at the nearest completed step.
    """
    samples: dict[float, FluidState] = {}
    targets = list(sample_times) if sample_times is not None else []
    nstep = int(round(t_final / dt))
    mon_bg = bg if bg is not None else BackgroundProfile.uniform(state.grid)
    for ts in targets:
        if ts <= state.time + 1e-12:
            samples[ts] = state.copy()
    for _ in range(nstep):
        state = step_fn(state, dt)
        gradient_blowup(state, mon_bg, blowup_threshold)
        for ts in targets:
            if ts not in samples and state.time + 1e-9 >= ts:
                samples[ts] = state.copy()
    return state, samples
