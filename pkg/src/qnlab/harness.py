"""Experiment presets, eps-sweeps, rate fits, CSV persistence and plots.

A preset fixes one closure, its grids and initial data, and a list of eps
values.  ``run_preset`` advances the kinetic solver and the matching limit
system on the same clock, evaluates the energy and modulated-energy
ledgers and the stability budget at shared output times, streams one CSV
row per (output time, eps), and fits the convergence rates across the
sweep.  Runs are deterministic for a fixed config and seed.

Rows are flushed as soon as their budget slack is final (one output time
of lag, so the centred time differences inside the budget are complete); a
killed run leaves a parseable CSV prefix.  With ``workers > 1`` the eps
runs execute in a process pool and rows are written in eps order after
collection.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np
import yaml


def _cosine_potential(x, amp=0.3, k=1.0):
    return amp * np.cos(k * np.asarray(x, dtype=float))

from .entropy import (
    HistorySample,
    RunHistory,
    energy,
    modulated_energy,
    stability_budget,
)
from .errors import ConfigError, DomainError
from .fluid import (
    FluidState,
    euler_isothermal_step,
    euler_magnetized_step,
    euler_poisson_step,
    gradient_blowup,
    shallow_water_step,
)
from .grids import SpatialGrid, VelocityGrid, quadrature
from .gyro import GyroGeometry, acceleration_B, corrector, filter_momentum, \
    synthesize_hs_field
from .kinetic import cold_ion_maxwellian, moments, vlasov_step
from .poisson import (
    BackgroundProfile,
    Laplacian1D,
    quasineutral_potential,
    solve_poisson_L,
    solve_poisson_S,
    solve_poisson_Sprime,
)

logger = logging.getLogger(__name__)

CLOSURES = ("L", "S", "Sprime", "euler-poisson", "magnetized-spectral",
            "magnetized-kinetic")

CSV_HEADER = ("time,epsilon,kinetic_term,field_term,entropy_term,total,"
              "budget_slack,energy_total,mass,metric_sqrt,metric_velocity,"
              "metric_potential")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """One experiment: closure, eps list, grids, data, tolerances."""

    name: str = "unnamed"
    closure: str = "L"
    epsilon: list[float] = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    alpha: float = 1.0
    final_time: float = 0.5
    outputs: int = 26
    seed: int = 0
    blowup_threshold: float = 40.0
    poisson_tol: float = 1e-10
    gronwall_constant: float = 5.0
    kinetic: dict = field(default_factory=lambda: dict(
        nx=256, nv=256, v_margin=0.6, dt_max=1e-3, cfl_cells=8.0))
    domain: dict = field(default_factory=lambda: dict(extent=1.0, radius=28.0))
    initial: dict = field(default_factory=lambda: dict(
        density_amplitude=0.05, density_mode=1, velocity_amplitude=0.0,
        bump_width=1.0, ion_temperature="sqrt_eps"))
    fluid: dict = field(default_factory=lambda: dict(
        nx=256, cfl=0.4, limiter="minmod", temperature=1.0))
    gyro: dict = field(default_factory=lambda: dict(
        n_modes=4096, extent=2 * math.pi, s=3.0, q=1.6, margin=0.15,
        uniform_margin=1.5, band=[0.5, 1023.0], eval_time=0.7,
        h_amplitude=0.4, field_amplitude=0.4, phases=8))
    schema_version: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.schema_version != 1:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.closure not in CLOSURES:
            raise ConfigError(f"unknown closure {self.closure!r}")
        if not self.epsilon:
            raise ConfigError("epsilon list must not be empty")
        if any(b >= a for a, b in zip(self.epsilon, self.epsilon[1:])):
            raise ConfigError("epsilon list must be strictly decreasing")
        if any(e <= 0 for e in self.epsilon):
            raise ConfigError("epsilon values must be positive")
        if self.final_time <= 0:
            raise ConfigError("final_time must be positive")
        if self.outputs < 2:
            raise ConfigError("need at least 2 output times")
        return self

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    def to_yaml(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(asdict(self), fh, sort_keys=False)

    @classmethod
    def preset(cls, name: str) -> "ExperimentConfig":
        path = os.path.join(os.path.dirname(__file__), "presets", f"{name}.yaml")
        if not os.path.exists(path):
            raise ConfigError(f"no preset named {name!r}")
        return cls.from_yaml(path)

    def ion_temperature(self, eps: float) -> float:
        ti = self.initial.get("ion_temperature", "sqrt_eps")
        return math.sqrt(eps) if ti == "sqrt_eps" else float(ti)


@dataclass
class RateFit:
    exponent: float
    intercept: float
    residual: float
    stderr: float
    n_points: int

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.exponent - 1.96 * self.stderr,
                self.exponent + 1.96 * self.stderr)


def fit_rate(eps_values, values) -> RateFit:
    """Least-squares power-law fit ``value ~ C * eps^p`` in log-log space."""
    eps_values = np.asarray(eps_values, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(eps_values) < 4:
        raise DomainError("rate fit needs at least 4 points")
    if np.any(values <= 0) or np.any(eps_values <= 0):
        raise DomainError("rate fit needs positive values")
    x = np.log(eps_values)
    y = np.log(values)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = A @ coef
    rms = float(np.sqrt(np.mean((y - fitted) ** 2)))
    dof = max(len(x) - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = float(np.sqrt(np.sum((y - fitted) ** 2) / dof / sxx))
    return RateFit(float(coef[0]), float(coef[1]), rms, stderr, len(x))


@dataclass
class SweepResult:
    """Per-eps ledger time series plus fitted rates and pass/fail checks."""

    config: ExperimentConfig
    rows: list[dict]
    histories: dict[float, RunHistory]
    fits: dict[str, RateFit] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def series(self, eps: float, column: str) -> np.ndarray:
        return np.array([r[column] for r in self.rows if r["epsilon"] == eps])


# ---------------------------------------------------------------------------
# CSV persistence


class CsvWriter:
    """Streams ledger rows, flushing each one (crash leaves a valid prefix)."""

    def __init__(self, path):
        self.path = path
        self._fh = None
        if path is not None:
            self._fh = open(path, "w", newline="\n", encoding="utf-8")
            self._fh.write(CSV_HEADER + "\n")
            self._fh.flush()

    def write_row(self, row: dict) -> None:
        if self._fh is None:
            return
        cols = CSV_HEADER.split(",")
        self._fh.write(",".join(_fmt(row.get(c)) for c in cols) + "\n")
        self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _fmt(x) -> str:
    if x is None:
        return "nan"
    return f"{float(x):.17g}"


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != len(header):
                continue  # tolerate a truncated final line
            rows.append({k: float(v) for k, v in zip(header, parts)})
    return rows


# ---------------------------------------------------------------------------
# initial data and references


def _torus_profiles(cfg: ExperimentConfig, grid: SpatialGrid):
    x = grid.axes()[0]
    a = cfg.initial.get("density_amplitude", 0.05)
    k = cfg.initial.get("density_mode", 1)
    b = cfg.initial.get("velocity_amplitude", 0.0)
    kx = 2.0 * np.pi * k / grid.extent[0]
    return 1.0 + a * np.cos(kx * x), b * np.sin(kx * x)


def _line_profiles(cfg: ExperimentConfig, bg: BackgroundProfile):
    """Confined initial data whose potential log(rho0/d) decays at infinity.

    The log-ratio is built from Gaussian-decaying bumps (so its Laplacian
    stays small relative to rho0 everywhere) and a scalar amplitude on the
    second bump enforces unit mass exactly; rho0/d -> 1 in the far field,
    matching the zero-Dirichlet closure.
    """
    from scipy.optimize import brentq

    x = bg.grid.axes()[0]
    a = cfg.initial.get("density_amplitude", 0.08)
    wdt = cfg.initial.get("bump_width", 1.5)
    b = cfg.initial.get("velocity_amplitude", 0.2)
    hat = (1.0 - (x / wdt) ** 2) * np.exp(-(x**2) / (2 * wdt**2))
    gauss = np.exp(-(x**2) / (2 * wdt**2))

    def mass_defect(beta):
        return quadrature(bg.d * np.exp(a * hat + beta * gauss), bg.grid) - 1.0

    beta = brentq(mass_defect, -2.0, 2.0, xtol=1e-15)
    g0 = a * hat + beta * gauss
    rho0 = bg.d * np.exp(g0)
    u0 = b * gauss
    return rho0, u0


def _sample_times(cfg: ExperimentConfig) -> np.ndarray:
    return np.linspace(0.0, cfg.final_time, cfg.outputs)


def _kinetic_setting(cfg: ExperimentConfig):
    """Grid, background and eps-independent limit data for a kinetic preset."""
    if cfg.closure == "L":
        grid = SpatialGrid.torus(cfg.domain.get("extent", 1.0), cfg.kinetic["nx"])
        bg = BackgroundProfile.uniform(grid)
        rho0, u0 = _torus_profiles(cfg, grid)
    else:
        grid = SpatialGrid.truncated_line(
            cfg.domain.get("radius", 28.0), cfg.kinetic["nx"],
            decay_note="d = e^-H below 1e-12 at the boundary")
        bg = BackgroundProfile.sqrt_confinement(grid)
        rho0, u0 = _line_profiles(cfg, bg)
    return grid, bg, rho0, u0


def _reference_run(cfg: ExperimentConfig, grid, bg, rho0, u0, times):
    """March the limit system once, sampling at the shared output times."""
    kind = cfg.closure
    limiter = cfg.fluid.get("limiter", "minmod")
    state = FluidState(grid, rho0.copy(), np.array(u0, dtype=float))
    if kind == "L":
        step = lambda s, dt: shallow_water_step(s, dt, limiter=limiter)
        cmax = float(np.max(np.abs(u0) + np.sqrt(rho0)))
    else:
        step = lambda s, dt: euler_isothermal_step(s, bg, dt, limiter=limiter)
        cmax = float(np.max(np.abs(u0)) + 1.0)
    dx = grid.spacing[0]
    cfl = cfg.fluid.get("cfl", 0.4)
    interval = times[1] - times[0]
    nsub = max(1, int(np.ceil(interval * 1.5 * cmax / (cfl * dx))))
    dt = interval / nsub
    samples = {0.0: state.copy()}
    for target in times[1:]:
        while state.time < target - 1e-12:
            state = step(state, dt)
            gradient_blowup(state, bg, cfg.blowup_threshold)
        samples[float(target)] = state.copy()
    return samples


# ---------------------------------------------------------------------------
# per-closure runners (emit writes a finalized CSV row)


def _emit_pending(history, budget_constant, pending, emit):
    """Flush rows whose budget slack is final (lag one output time)."""
    if len(history.samples) < 2:
        return
    budget = stability_budget(history, budget_constant)
    while pending and pending[0][0] <= len(history.samples) - 2:
        idx, row = pending.pop(0)
        row["budget_slack"] = float(budget.slack_series[idx])
        emit(row)


def _finalize_rows(history, budget_constant, pending, emit):
    budget = stability_budget(history, budget_constant)
    for idx, row in pending:
        row["budget_slack"] = float(budget.slack_series[idx])
        emit(row)
    pending.clear()
    return budget


def _run_kinetic_case(cfg: ExperimentConfig, eps: float, reference, emit):
    """One (L)/(S)/(S') kinetic run at fixed eps against the reference."""
    kind = cfg.closure
    times = _sample_times(cfg)
    Ti = cfg.ion_temperature(eps)
    grid, bg, rho0, u0 = _kinetic_setting(cfg)

    if kind == "L":
        rho0_eps = rho0.copy()
    else:
        # well-prepared data: the kinetic density absorbs -eps*Lap V0 with
        # V0 = log(rho0/d), in multiplicative form so it stays positive at
        # the largest eps (agrees with the additive correction to O(eps^2))
        v0 = quasineutral_potential(rho0, bg)
        rho0_eps = rho0 * np.exp(-eps * Laplacian1D(grid).apply(v0) / rho0)

    vmax = 8.0 * math.sqrt(Ti) + float(np.max(np.abs(u0))) \
        + cfg.kinetic.get("v_margin", 0.6)
    vgrid = VelocityGrid.box(vmax, cfg.kinetic["nv"])
    f = cold_ion_maxwellian(rho0_eps, u0, Ti, grid, vgrid, epsilon=eps)

    warm = {"v": None}

    def solver(rho):
        if kind == "L":
            return solve_poisson_L(rho, grid, eps)
        fn = solve_poisson_S if kind == "S" else solve_poisson_Sprime
        sol = fn(rho, bg, eps, tol=cfg.poisson_tol, v0=warm["v"])
        warm["v"] = sol.V
        return sol

    def field_solver(rho):
        return solver(rho).E[0]

    interval = times[1] - times[0]
    nsub = max(1, int(np.ceil(interval / cfg.kinetic.get("dt_max", 1e-3))))
    dt = interval / nsub

    history = RunHistory(kind, grid, bg, eps, [])
    pending = []
    max_newton = 0
    for j, target in enumerate(times):
        if j > 0:
            for _ in range(nsub):
                f = vlasov_step(f, field_solver=field_solver, dt=dt,
                                cfl_cells=cfg.kinetic.get("cfl_cells", 8.0))
        pot = solver(f.density())
        max_newton = max(max_newton, pot.newton_iterations)
        ref = reference[float(target)]
        led_e = energy(kind, phase=f, potential=pot, bg=bg, epsilon=eps)
        led_h = modulated_energy(kind, phase=f, potential=pot,
                                 ref_rho=ref.rho, ref_u=ref.velocity,
                                 bg=bg, epsilon=eps)
        mom = moments(f)
        history.samples.append(HistorySample(
            time=float(target), ledger=led_h, potential=pot, rho=mom.rho,
            current=mom.current, ref_rho=ref.rho, ref_u=ref.velocity))
        row = dict(
            time=float(target), epsilon=eps, kinetic_term=led_h.kinetic,
            field_term=led_h.field, entropy_term=led_h.entropy,
            total=led_h.total, budget_slack=math.nan,
            energy_total=led_e.total, mass=f.mass(),
            metric_sqrt=math.sqrt(quadrature(
                (np.sqrt(pot.m) - np.sqrt(ref.rho)) ** 2, grid)),
            metric_velocity=quadrature(
                mom.rho * (mom.bulk_velocity - ref.velocity) ** 2, grid),
            metric_potential=(math.sqrt(quadrature(
                (pot.V - (ref.rho - 1.0)) ** 2, grid)) if kind == "L"
                else math.nan))
        pending.append((j, row))
        _emit_pending(history, cfg.gronwall_constant, pending, emit)

    budget = _finalize_rows(history, cfg.gronwall_constant, pending, emit)
    extras = dict(max_newton_iterations=max_newton, budget=budget,
                  lost_mass=f.diagnostics.get("lost_mass", 0.0),
                  clipped_mass=f.diagnostics.get("clipped_mass", 0.0))
    return history, extras


def _run_euler_poisson_case(cfg: ExperimentConfig, eps: float, emit):
    """Euler-Poisson run at fixed eps vs the quasineutral Euler reference."""
    grid = SpatialGrid.torus(cfg.domain.get("extent", 1.0), cfg.fluid["nx"])
    bg = BackgroundProfile.uniform(grid)
    T = float(cfg.fluid.get("temperature", 1.0))
    rho0, u0 = _torus_profiles(cfg, grid)
    times = _sample_times(cfg)

    state = FluidState(grid, rho0.copy(), u0.copy(), T=T)
    ref_state = FluidState(grid, rho0.copy(), u0.copy(), T=T)
    dx = grid.spacing[0]
    cfl = cfg.fluid.get("cfl", 0.4)
    cmax = float(np.max(np.abs(u0)) + math.sqrt(T + 1.0))
    interval = times[1] - times[0]
    nsub = max(1, int(np.ceil(interval * 1.5 * cmax / (cfl * dx))))
    dt = interval / nsub
    limiter = cfg.fluid.get("limiter", "minmod")

    mode = cfg.initial.get("density_mode", 1)
    k_phys = 2 * np.pi * mode / grid.extent[0]
    amp_series = [(0.0, float(np.fft.fft(state.rho, norm="forward")[mode].real))]

    history = RunHistory("euler-poisson", grid, bg, eps, [], T=T)
    pending = []
    for j, target in enumerate(times):
        if j > 0:
            for _ in range(nsub):
                state = euler_poisson_step(state, eps, dt, limiter=limiter,
                                           poisson_tol=cfg.poisson_tol)
                amp_series.append((state.time, float(
                    np.fft.fft(state.rho, norm="forward")[mode].real)))
                ref_state = euler_isothermal_step(ref_state, bg, dt,
                                                  limiter=limiter,
                                                  sound2=T + 1.0)
            gradient_blowup(state, bg, cfg.blowup_threshold)
        pot = solve_poisson_S(state.rho, bg, eps, tol=cfg.poisson_tol)
        led_e = energy("euler-poisson", fluid=state, potential=pot,
                       bg=bg, epsilon=eps)
        led_h = modulated_energy("euler-poisson", fluid=state, potential=pot,
                                 ref_rho=ref_state.rho,
                                 ref_u=ref_state.velocity, bg=bg, epsilon=eps)
        history.samples.append(HistorySample(
            time=float(target), ledger=led_h, potential=pot, rho=state.rho.copy(),
            current=state.rho * state.velocity, ref_rho=ref_state.rho.copy(),
            ref_u=ref_state.velocity.copy()))
        row = dict(
            time=float(target), epsilon=eps, kinetic_term=led_h.kinetic,
            field_term=led_h.field, entropy_term=led_h.entropy,
            total=led_h.total, budget_slack=math.nan,
            energy_total=led_e.total, mass=quadrature(state.rho, grid),
            metric_sqrt=math.sqrt(quadrature(
                (np.sqrt(state.rho) - np.sqrt(ref_state.rho)) ** 2, grid)),
            metric_velocity=quadrature(
                state.rho * (state.velocity - ref_state.velocity) ** 2, grid),
            metric_potential=math.nan)
        pending.append((j, row))
        _emit_pending(history, cfg.gronwall_constant, pending, emit)

    budget = _finalize_rows(history, cfg.gronwall_constant, pending, emit)
    extras = dict(budget=budget, wave_series=np.array(amp_series),
                  wavenumber=k_phys, temperature=T)
    return history, extras


def measure_wave_speed(series: np.ndarray, wavenumber: float) -> float:
    """Phase speed of a standing wave from the zero crossings of its mode
    amplitude (linear interpolation between samples)."""
    t, a = series[:, 0], series[:, 1]
    crossings = []
    for i in range(len(a) - 1):
        if a[i] == 0.0:
            crossings.append(t[i])
        elif a[i] * a[i + 1] < 0:
            crossings.append(t[i] - a[i] * (t[i + 1] - t[i]) / (a[i + 1] - a[i]))
    if len(crossings) < 2:
        raise DomainError("not enough oscillation to measure a wave speed")
    half_period = float(np.mean(np.diff(crossings)))
    omega = np.pi / half_period
    return float(omega / wavenumber)


def _run_gyro_spectral(cfg: ExperimentConfig, emit):
    """Corrector decay/uniformity studies on synthesized reference fields.

    Sharp-threshold fields (small margin) measure the decay exponents; the
    uniformity of ||z||_{H^{s-1}} is measured on interior-regularity fields
    with the norm maximized over gyration phases (the bound is a sup in
    time).
    """
    p = cfg.gyro
    n = int(p.get("n_modes", 4096))
    grid = SpatialGrid.torus(float(p.get("extent", 2 * math.pi)), n)
    geom = GyroGeometry(grid, perp_axes=(0,))
    x = grid.axes()[0]
    bg = BackgroundProfile.from_H(grid, p.get("h_amplitude", 0.4) * np.cos(x))
    s = float(p.get("s", 3.0))
    q = float(p.get("q", 1.6))
    band = tuple(p.get("band", (0.5, 1023.0)))
    amp = float(p.get("field_amplitude", 0.4))
    t_eval = float(p.get("eval_time", 0.7))

    def make_fields(margin):
        g0 = amp * synthesize_hs_field(s, cfg.seed + 11, grid,
                                       margin=margin, band=band)
        rho = bg.d * np.exp(g0)
        w = np.stack([amp * synthesize_hs_field(s, cfg.seed + 21 + k, grid,
                                                margin=margin, band=band)
                      for k in range(3)])
        return rho, w

    rho_c, w_c = make_fields(float(p.get("margin", 0.15)))
    rho_u, w_u = make_fields(float(p.get("uniform_margin", 1.5)))

    eps_list = list(cfg.epsilon)
    phases = np.linspace(0, 2 * np.pi, int(p.get("phases", 8)), endpoint=False)
    rows, b_norm, b0_norm, zq_norm, z_sup = [], [], [], [], []
    for eps in eps_list:
        B = acceleration_B(rho_c, w_c, bg, eps, t_eval, geom)
        B0 = acceleration_B(rho_c, w_c, bg, eps, t_eval, geom,
                            use_corrector=False)
        z = corrector(rho_c, w_c, bg, eps, t_eval, geom)
        b_norm.append(B.norm_hq(q))
        b0_norm.append(B0.norm_hq(q))
        zq_norm.append(z.sobolev_norm(q + 1.0))
        z_sup.append(max(corrector(rho_u, w_u, bg, eps, eps * ph, geom)
                         .sobolev_norm(s - 1.0) for ph in phases))
        row = dict(time=t_eval, epsilon=eps, kinetic_term=math.nan,
                   field_term=math.nan, entropy_term=math.nan,
                   total=b_norm[-1], budget_slack=math.nan,
                   energy_total=b0_norm[-1], mass=math.nan,
                   metric_sqrt=zq_norm[-1], metric_velocity=z_sup[-1],
                   metric_potential=math.nan)
        rows.append(row)
        emit(row)

    fits = {
        "B_decay": fit_rate(eps_list, b_norm),
        "B_no_corrector": fit_rate(eps_list, b0_norm),
        "z_hq1_growth": fit_rate(eps_list, zq_norm),
    }
    extras = dict(
        b_norm=b_norm, b0_norm=b0_norm, z_hq1=zq_norm, z_hs1_sup=z_sup,
        z_uniform_variation=max(z_sup) / min(z_sup) - 1.0,
        s=s, q=q, target_decay=s - q - 1.0, target_growth=-(q + 2.0 - s))
    return rows, fits, extras


def _run_magnetized_kinetic_case(cfg: ExperimentConfig, eps: float, emit):
    """Coarse end-to-end magnetized run: 1D parallel x, 3D v, S' closure.

    The field closure carries eps^(2 alpha); the time step is an exact
    quarter gyration, so the perpendicular rotation is an index permutation
    and |v_perp| is exactly invariant.
    """
    alpha = cfg.alpha
    nx = cfg.kinetic.get("nx", 64)
    nv = cfg.kinetic.get("nv", 32)
    extent = cfg.domain.get("extent", 2 * math.pi)
    grid = SpatialGrid.torus(extent, nx)
    x = grid.axes()[0]
    h_amp = cfg.initial.get("h_amplitude", 0.3)
    kx = 2 * np.pi / extent
    bg = BackgroundProfile.from_H(grid, h_amp * np.cos(kx * x),
                                  H_fn=partial(_cosine_potential, amp=h_amp, k=kx))
    Ti = cfg.ion_temperature(eps)
    rho0 = bg.d / quadrature(bg.d, grid)
    w0 = np.zeros((3, nx))
    w0[0] = cfg.initial.get("wperp_amplitude", 0.1)
    w0[2] = cfg.initial.get("wpar_amplitude", 0.05) * np.sin(kx * x)

    vmax = 8.0 * math.sqrt(Ti) + float(np.max(np.abs(w0))) \
        + cfg.kinetic.get("v_margin", 0.6)
    vgrid = VelocityGrid.box(vmax, (nv, nv, nv))
    f = cold_ion_maxwellian(rho0, w0, Ti, grid, vgrid, epsilon=eps)

    eps_field = eps ** (2.0 * alpha)
    warm = {"v": None}

    def solver(rho):
        sol = solve_poisson_Sprime(rho, bg, eps_field, tol=cfg.poisson_tol,
                                   v0=warm["v"])
        warm["v"] = sol.V
        return sol

    def field_solver(rho):
        return solver(rho).E[0]

    # exact quarter gyration per step keeps the rotation a permutation
    dt = 0.5 * math.pi * eps
    interval = cfg.final_time / (cfg.outputs - 1)
    nsub = max(1, int(round(interval / dt)))

    ref = FluidState(grid, rho0.copy(), w0.copy())
    cmax = float(np.max(np.abs(w0))) + 1.2
    ref_sub = max(1, int(np.ceil(dt * cmax / (cfg.fluid.get("cfl", 0.4)
                                              * grid.spacing[0]))))

    history = RunHistory("magnetized", grid, bg, eps, [], alpha=alpha)
    pending = []
    t = 0.0
    for j in range(cfg.outputs):
        if j > 0:
            for _ in range(nsub):
                f = vlasov_step(f, field_solver=field_solver, magnetic=True,
                                dt=dt, cfl_cells=cfg.kinetic.get("cfl_cells", 8.0))
                for _ in range(ref_sub):
                    ref = euler_magnetized_step(ref, bg, dt / ref_sub)
                t += dt
        pot = solver(f.density())
        u_ref = filter_momentum(ref.velocity, t, eps, "inverse")
        led_e = energy("magnetized", phase=f, potential=pot, bg=bg,
                       epsilon=eps, alpha=alpha)
        led_h = modulated_energy("magnetized", phase=f, potential=pot,
                                 ref_rho=ref.rho, ref_u=u_ref, bg=bg,
                                 epsilon=eps, alpha=alpha)
        mom = moments(f)
        history.samples.append(HistorySample(
            time=t, ledger=led_h, potential=pot, rho=mom.rho,
            current=mom.current, ref_rho=ref.rho.copy(), ref_u=u_ref))
        row = dict(
            time=t, epsilon=eps, kinetic_term=led_h.kinetic,
            field_term=led_h.field, entropy_term=led_h.entropy,
            total=led_h.total, budget_slack=math.nan,
            energy_total=led_e.total, mass=f.mass(),
            metric_sqrt=math.sqrt(quadrature(
                (np.sqrt(pot.m) - np.sqrt(ref.rho)) ** 2, grid)),
            metric_velocity=float(quadrature(
                mom.rho * ((mom.bulk_velocity - u_ref) ** 2).sum(axis=0), grid)),
            metric_potential=math.nan)
        pending.append((j, row))
        _emit_pending(history, cfg.gronwall_constant, pending, emit)

    budget = _finalize_rows(history, cfg.gronwall_constant, pending, emit)
    extras = dict(budget=budget,
                  vperp_drift=f.diagnostics.get("vperp2_drift", 0.0),
                  clipped_mass=f.diagnostics.get("clipped_mass", 0.0))
    return history, extras


# ---------------------------------------------------------------------------
# the sweep driver


def _run_single_epsilon(cfg: ExperimentConfig, eps: float, reference, emit):
    if cfg.closure in ("L", "S", "Sprime"):
        return _run_kinetic_case(cfg, eps, reference, emit)
    if cfg.closure == "euler-poisson":
        return _run_euler_poisson_case(cfg, eps, emit)
    if cfg.closure == "magnetized-kinetic":
        return _run_magnetized_kinetic_case(cfg, eps, emit)
    raise ConfigError(f"per-eps runner undefined for {cfg.closure}")


def _case_worker(args):
    cfg_dict, eps, reference = args
    cfg = ExperimentConfig(**cfg_dict).validate()
    rows = []
    history, extras = _run_single_epsilon(cfg, eps, reference, rows.append)
    return rows, history, extras


def run_preset(cfg: ExperimentConfig, csv_path=None, workers: int = 1) -> SweepResult:
    """Run every eps of the preset, stream CSV rows, fit the sweep rates."""
    cfg.validate()
    writer = CsvWriter(csv_path)
    result = SweepResult(cfg, rows=[], histories={})

    def emit(row):
        result.rows.append(row)
        writer.write_row(row)

    try:
        if cfg.closure == "magnetized-spectral":
            rows, fits, extras = _run_gyro_spectral(cfg, emit)
            result.fits.update(fits)
            result.extras.update(extras)
            _gyro_checks(cfg, result)
            return result

        reference = None
        if cfg.closure in ("L", "S", "Sprime"):
            grid, bg, rho0, u0 = _kinetic_setting(cfg)
            reference = _reference_run(cfg, grid, bg, rho0, u0,
                                       _sample_times(cfg))

        if workers > 1 and len(cfg.epsilon) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outs = list(pool.map(
                    _case_worker,
                    [(asdict(cfg), e, reference) for e in cfg.epsilon]))
            for eps, (rows, history, extras) in zip(cfg.epsilon, outs):
                for row in rows:
                    emit(row)
                result.histories[eps] = history
                result.extras[eps] = extras
        else:
            for eps in cfg.epsilon:
                history, extras = _run_single_epsilon(cfg, eps, reference, emit)
                result.histories[eps] = history
                result.extras[eps] = extras

        _sweep_fits(cfg, result)
        return result
    finally:
        writer.close()


def _sweep_fits(cfg: ExperimentConfig, result: SweepResult) -> None:
    eps_list = cfg.epsilon
    if len(eps_list) >= 4:
        h_final = [result.series(e, "total")[-1] for e in eps_list]
        h_max = [float(np.max(result.series(e, "total"))) for e in eps_list]
        result.fits["h_final"] = fit_rate(eps_list, h_final)
        result.fits["h_max"] = fit_rate(eps_list, h_max)
        g_mag = [max(abs(result.extras[e]["budget"].remainder), 1e-300)
                 for e in eps_list]
        result.fits["g_remainder"] = fit_rate(eps_list, g_mag)
    hs = [float(np.max(result.series(e, "total"))) for e in eps_list]
    result.checks["h_monotone_in_eps"] = all(b < a for a, b in zip(hs, hs[1:]))
    slacks = [result.extras[e]["budget"].slack for e in eps_list]
    tol = [1e-3 * max(float(np.max(result.series(e, "total"))), 1e-300)
           for e in eps_list]
    result.checks["budget_slack_ok"] = all(s >= -t for s, t in zip(slacks, tol))


def _gyro_checks(cfg: ExperimentConfig, result: SweepResult) -> None:
    ex = result.extras
    result.checks["decay_slope_in_band"] = \
        abs(result.fits["B_decay"].exponent - ex["target_decay"]) <= 0.3
    result.checks["no_corrector_flat"] = \
        result.fits["B_no_corrector"].exponent <= 0.1
    result.checks["z_growth_in_band"] = \
        abs(result.fits["z_hq1_growth"].exponent - ex["target_growth"]) <= 0.3
    result.checks["z_uniform"] = ex["z_uniform_variation"] <= 0.10


# ---------------------------------------------------------------------------
# plots


def emit_plots(result: SweepResult, out_dir) -> list[str]:
    """Static SVG figures; byte-deterministic for a fixed result."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "qnlab"

    os.makedirs(out_dir, exist_ok=True)
    written = []
    eps_list = sorted({r["epsilon"] for r in result.rows}, reverse=True)

    def save(fig, name):
        path = os.path.join(out_dir, name)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    for e in eps_list:
        t = result.series(e, "time")
        h = result.series(e, "total")
        ax.semilogy(t, np.maximum(h, 1e-300), label=f"eps={e:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("modulated energy")
    ax.legend(fontsize=8)
    save(fig, "h_vs_time.svg")

    if len(eps_list) >= 2:
        fig, ax = plt.subplots(figsize=(6, 4))
        h_final = [result.series(e, "total")[-1] for e in eps_list]
        ax.loglog(eps_list, h_final, "o-", label="H(T)")
        if "h_final" in result.fits:
            f = result.fits["h_final"]
            ax.loglog(eps_list,
                      [np.exp(f.intercept) * e**f.exponent for e in eps_list],
                      "--", label=f"slope {f.exponent:.2f}")
        ax.set_xlabel("epsilon")
        ax.set_ylabel("H(T)")
        ax.legend(fontsize=8)
        save(fig, "h_vs_epsilon.svg")
    else:
        logger.info("single epsilon: skipping the eps-convergence plot")

    fig, ax = plt.subplots(figsize=(6, 4))
    e = eps_list[-1]
    t = result.series(e, "time")
    for col in ("kinetic_term", "field_term", "entropy_term", "total"):
        ax.plot(t, result.series(e, col), label=col)
    ax.set_xlabel("t")
    ax.set_ylabel("energy components")
    ax.legend(fontsize=8)
    save(fig, "energy_components.svg")
    return written
