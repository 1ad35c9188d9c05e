"""Energy and modulated-energy (relative entropy) functionals, and the
stability-inequality budget they satisfy along a run.

Each closure has its energy dissipated by the flow and a modulated version
whose kinetic term is recentred on a reference bulk velocity and whose
electron entropy is replaced by the Bregman-type relative form
``int (m log(m/rho) - m + rho)`` (quadratic form ``(V - (rho-1))^2 / 2``
for the linearized law).  The budget evaluates every term of the stability
inequality

    H(t) <= H(0) + [acceleration pairing] + G(t) + C int ||grad u||_inf H

by time quadrature over the stored run history, and reports the slack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import DomainError, InsufficientDataError, NumericsError, ShapeError
from .fluid import FluidState
from .grids import SpatialGrid, gradient, quadrature
from .gyro import rotation as _rotation
from .gyro import rotation_derivative as _rotation_derivative
from .kinetic import PhaseDensity
from .poisson import BackgroundProfile, PotentialSolution

KINDS = ("L", "S", "Sprime", "euler-poisson", "magnetized")


@dataclass
class EnergyLedger:
    """One evaluation of an energy or modulated-energy functional."""

    kinetic: float
    field: float
    entropy: float
    total: float
    time: float
    kind: str
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        s = self.kinetic + self.field + self.entropy
        if not np.isfinite(s):
            raise NumericsError("non-finite energy terms")
        if abs(self.total - s) > 1e-12 * max(1.0, abs(s)):
            raise ValueError("total must equal the sum of the terms")


def relative_entropy_density(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise ``a log(a/b) - a + b`` with the convex extension b at a=0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0):
        raise DomainError("relative entropy needs a positive second argument")
    if np.any(a < 0):
        raise DomainError("relative entropy needs a nonnegative first argument")
    safe_a = np.where(a > 0, a, 1.0)
    return np.where(a > 0, a * np.log(safe_a / b) - a + b, b)


def csiszar_kullback_gap(a: np.ndarray, b: np.ndarray, grid: SpatialGrid):
    """Both sides of ``int (sqrt a - sqrt b)^2 <= int (a log(a/b) - a + b)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise DomainError("Csiszar-Kullback gap needs positive fields")
    lhs = quadrature((np.sqrt(a) - np.sqrt(b)) ** 2, grid)
    rhs = quadrature(relative_entropy_density(a, b), grid)
    return lhs, rhs


def _kinetic_term(phase: PhaseDensity, u_ref=None) -> float:
    """(1/2) int f |v - u|^2 dv dx (u = 0 gives the plain kinetic energy)."""
    vg, xg = phase.vgrid, phase.xgrid
    vol = vg.cell_volume
    nxd = xg.ndim
    vaxes = tuple(range(nxd, phase.values.ndim))
    second = np.zeros(xg.shape)
    firsts = []
    for c in range(vg.ndim):
        sh = [1] * phase.values.ndim
        sh[nxd + c] = -1
        vv = vg.axes()[c].reshape(sh)
        second += (phase.values * vv**2).sum(axis=vaxes) * vol
        firsts.append((phase.values * vv).sum(axis=vaxes) * vol)
    rho = phase.values.sum(axis=vaxes) * vol
    if u_ref is None:
        return 0.5 * quadrature(second, xg)
    u_ref = np.asarray(u_ref, dtype=float)
    comps = u_ref[None, :] if u_ref.ndim == 1 and vg.ndim == 1 else u_ref
    if vg.ndim == 1 and comps.ndim == 1:
        comps = comps[None, :]
    if comps.shape[0] != vg.ndim:
        raise ShapeError("reference velocity components do not match v-dimension")
    cross = sum(comps[c] * firsts[c] for c in range(vg.ndim))
    usq = sum(comps[c] ** 2 for c in range(vg.ndim))
    return 0.5 * quadrature(second - 2.0 * cross + rho * usq, xg)


def _field_weight(kind: str, epsilon: float, alpha: float) -> float:
    return epsilon ** (2.0 * alpha) if kind == "magnetized" else epsilon


def energy(kind: str, *, phase: PhaseDensity | None = None,
           fluid: FluidState | None = None, potential: PotentialSolution,
           bg: BackgroundProfile | None = None, epsilon: float,
           alpha: float = 1.0) -> EnergyLedger:
    """The dissipated energy functional of the given closure.

    Kinetic closures take ``phase``; the Euler-Poisson closure takes
    ``fluid`` (its entropy slot carries both the electron part
    ``int (V-1)e^V`` and the ion part ``T int rho(log rho - 1)``).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown closure kind {kind!r}")
    w = _field_weight(kind, epsilon, alpha)
    if kind == "euler-poisson":
        if fluid is None:
            raise ValueError("euler-poisson energy needs a fluid state")
        grid = fluid.grid
        kin = 0.5 * quadrature(fluid.rho * fluid.velocity**2, grid)
        ent = quadrature((potential.V - 1.0) * np.exp(potential.V), grid)
        rho_pos = np.maximum(fluid.rho, 1e-300)
        ent += float(fluid.T) * quadrature(fluid.rho * (np.log(rho_pos) - 1.0), grid)
        t = fluid.time
    else:
        if phase is None:
            raise ValueError(f"{kind} energy needs a phase density")
        grid = phase.xgrid
        kin = _kinetic_term(phase)
        V = potential.V
        if kind == "L":
            ent = 0.5 * quadrature(V**2, grid)
        elif kind == "S":
            ent = quadrature(bg.d * (V - 1.0) * np.exp(V), grid)
        else:  # Sprime, magnetized: normalized Maxwell-Boltzmann entropy
            ent = quadrature(potential.m * np.log(potential.m / bg.d), grid)
        t = phase.time
    fld = w * potential.field_energy(grid)
    return EnergyLedger(kin, fld, ent, kin + fld + ent, t, kind)


def modulated_energy(kind: str, *, phase: PhaseDensity | None = None,
                     fluid: FluidState | None = None,
                     potential: PotentialSolution,
                     ref_rho: np.ndarray, ref_u: np.ndarray,
                     bg: BackgroundProfile | None = None, epsilon: float,
                     alpha: float = 1.0) -> EnergyLedger:
    """Relative entropy against a reference (rho, u) of the limit system.

    The magnetized run passes the filtered/corrected reference velocity as
    a (3, nx) stack; every term is nonnegative and reported separately.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown closure kind {kind!r}")
    ref_rho = np.asarray(ref_rho, dtype=float)
    if np.any(ref_rho <= 0):
        raise DomainError("reference density must be positive")
    w = _field_weight(kind, epsilon, alpha)
    extras = {}
    if kind == "euler-poisson":
        grid = fluid.grid
        kin = 0.5 * quadrature(fluid.rho * (fluid.velocity - ref_u) ** 2, grid)
        ion = float(fluid.T) * quadrature(relative_entropy_density(fluid.rho, ref_rho), grid)
        electron = quadrature(relative_entropy_density(np.exp(potential.V), ref_rho), grid)
        ent = ion + electron
        extras = {"ion_entropy": ion, "electron_entropy": electron}
        t = fluid.time
    else:
        grid = phase.xgrid
        kin = _kinetic_term(phase, u_ref=ref_u)
        if kind == "L":
            ent = 0.5 * quadrature((potential.V - (ref_rho - 1.0)) ** 2, grid)
        else:
            ent = quadrature(relative_entropy_density(potential.m, ref_rho), grid)
        t = phase.time
    fld = w * potential.field_energy(grid)
    return EnergyLedger(kin, fld, ent, kin + fld + ent, t, kind, extras)


# ---------------------------------------------------------------------------
# stability budget


@dataclass
class HistorySample:
    """Co-located snapshot of a run at one output time."""

    time: float
    ledger: EnergyLedger           # modulated energy at this time
    potential: PotentialSolution
    rho: np.ndarray                # kinetic charge density (or EP fluid rho)
    current: np.ndarray            # J (or EP rho*u); (3, nx) when magnetized
    ref_rho: np.ndarray
    ref_u: np.ndarray              # (nx,) or (3, nx)


@dataclass
class RunHistory:
    kind: str
    grid: SpatialGrid
    bg: BackgroundProfile
    epsilon: float
    samples: list[HistorySample]
    alpha: float = 1.0
    T: float = 0.0                 # Euler-Poisson ion temperature


@dataclass
class StabilityBudget:
    """Every term of the stability inequality, time-quadratured.

    ``slack = RHS - LHS`` with the inequality evaluated over the whole run
    (t = final time); ``slack_series`` carries the per-output-time values
    and ``slack_min`` their minimum, whose early entries sit at the
    time-quadrature noise floor.
    """

    h_final: float
    h_initial: float
    remainder: float               # G(t_final)
    gronwall: float                # C int ||grad u||_inf H ds at t_final
    pairing: float                 # acceleration pairing at t_final
    slack: float                   # RHS - LHS at the final time
    constant: float
    times: np.ndarray
    slack_series: np.ndarray
    slack_min: float = 0.0
    extras: dict = field(default_factory=dict)


def _ddt(series: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Time derivative along axis 0 (centred interior, one-sided ends)."""
    return np.gradient(series, times, axis=0)


def _perp(u: np.ndarray) -> np.ndarray:
    """X -> X ^ e_par = (X2, -X1, 0) for a (3, nx) stack."""
    out = np.zeros_like(u)
    out[0] = u[1]
    out[1] = -u[0]
    return out


def stability_budget(history: RunHistory, gronwall_constant: float = 5.0) -> StabilityBudget:
    """Assemble the stability inequality budget from a run history.

    The acceleration pairing uses the reference residual A evaluated by
    differencing the stored reference states (it vanishes to scheme order
    when the reference solves its limit system); the remainder G uses the
    closure-exact Laplacian ``lap V = (m - rho)/weight`` so no numerical
    differentiation of V enters.  Trapezoid rule on output times.
    """
    samples = history.samples
    if len(samples) < 2:
        raise InsufficientDataError("budget needs at least 2 output times")
    grid, bg, kind = history.grid, history.bg, history.kind
    eps = history.epsilon
    w = _field_weight(kind, eps, history.alpha)
    times = np.array([s.time for s in samples])

    H = np.array([s.ledger.total for s in samples])
    V = np.stack([s.potential.V for s in samples])
    m = np.stack([s.potential.m for s in samples])
    rho_k = np.stack([s.rho for s in samples])
    cur = np.stack([s.current for s in samples])
    ref_rho = np.stack([s.ref_rho for s in samples])
    ref_u = np.stack([s.ref_u for s in samples])

    lap_v = (m - rho_k) / w if kind != "L" else (V - (rho_k - 1.0)) / eps
    dt_lap_v = _ddt(lap_v, times)

    def dx(a):
        return gradient(a, grid)[0]

    pairing_t = np.zeros(len(samples))
    g_t = np.zeros(len(samples))
    gradu_inf = np.zeros(len(samples))

    d_ref_u = _ddt(ref_u, times)
    d_ref_rho = _ddt(ref_rho, times)
    gbar = np.log(ref_rho / bg.d[None, :])
    d_gbar = _ddt(gbar, times)
    if kind == "magnetized":
        # unfilter so the time differencing acts on the slow variable
        w_slow = np.stack([
            np.einsum("ab,b...->a...", _rotation(t / eps), u)
            for t, u in zip(times, ref_u)
        ])
        dt_w_slow = _ddt(w_slow, times)

    for i, s in enumerate(samples):
        if kind == "L":
            a1 = d_ref_rho[i] + dx(ref_rho[i] * ref_u[i])
            a2 = d_ref_u[i] + ref_u[i] * dx(ref_u[i]) + dx(ref_rho[i])
            pairing_t[i] = quadrature((ref_rho[i] - 1.0 - V[i]) * a1, grid) \
                + quadrature(a2 * (rho_k[i] * ref_u[i] - cur[i]), grid)
            g_t[i] = eps * quadrature(lap_v[i] * ref_u[i] * dx(ref_rho[i]), grid) \
                - eps * quadrature(dt_lap_v[i] * (ref_rho[i] - 1.0), grid)
            gradu_inf[i] = float(np.max(np.abs(dx(ref_u[i]))))
        elif kind in ("S", "Sprime"):
            gi = gbar[i]
            a1 = d_gbar[i] + dx(ref_u[i]) + ref_u[i] * dx(gi) - bg.grad_H[0] * ref_u[i]
            a2 = d_ref_u[i] + ref_u[i] * dx(ref_u[i]) + dx(gi)
            pairing_t[i] = quadrature(a1 * (ref_rho[i] - m[i]), grid) \
                + quadrature(a2 * (rho_k[i] * ref_u[i] - cur[i]), grid)
            g_t[i] = w * quadrature(lap_v[i] * ref_u[i] * dx(gi), grid) \
                - w * quadrature(dt_lap_v[i] * gi, grid)
            gradu_inf[i] = float(np.max(np.abs(dx(ref_u[i]))))
        elif kind == "euler-poisson":
            T = history.T
            a1 = d_ref_rho[i] + dx(ref_rho[i] * ref_u[i])
            a2 = d_ref_u[i] + ref_u[i] * dx(ref_u[i]) \
                + (T + 1.0) * dx(ref_rho[i]) / ref_rho[i]
            weight1 = T * (1.0 - rho_k[i] / ref_rho[i]) + (1.0 - m[i] / ref_rho[i])
            pairing_t[i] = quadrature(a1 * weight1, grid) \
                + quadrature(a2 * (rho_k[i] * ref_u[i] - cur[i]), grid)
            logr = np.log(ref_rho[i])
            g_t[i] = eps * quadrature(lap_v[i] * ref_u[i] * dx(logr), grid) \
                - eps * quadrature(dt_lap_v[i] * logr, grid)
            gradu_inf[i] = float(np.max(np.abs(dx(ref_u[i]))))
        else:  # magnetized: u_ref is the gyrating (3, nx) reference
            gi = gbar[i]
            # the spatial axis is the magnetic axis: component 2 is parallel
            upar = ref_u[i][2]
            a1 = d_gbar[i] + dx(upar) + upar * dx(gi) - bg.grad_H[0] * upar
            # time derivative through the slow (filtered) variable plus the
            # analytic fast phase: u = R(-t/eps) w gives
            # dt u = R(-t/eps) dt w - (1/eps) S(-t/eps) w
            theta = times[i] / eps
            dt_u_i = np.einsum("ab,b...->a...", _rotation(-theta), dt_w_slow[i]) \
                - np.einsum("ab,b...->a...", _rotation_derivative(-theta),
                            w_slow[i]) / eps
            a2 = dt_u_i + upar * np.stack([dx(c) for c in ref_u[i]])
            a2[2] += dx(gi)
            a2 -= _perp(ref_u[i]) / eps
            pairing_t[i] = quadrature(a1 * (ref_rho[i] - m[i]), grid) \
                + quadrature((a2 * (rho_k[i] * ref_u[i] - cur[i])).sum(axis=0), grid)
            g_t[i] = w * quadrature(lap_v[i] * upar * dx(gi), grid) \
                - w * quadrature(dt_lap_v[i] * gi, grid)
            gradu_inf[i] = float(np.max(np.abs(
                np.stack([dx(c) for c in ref_u[i]]))))

    pairing_cum = np.concatenate([[0.0], cumulative_trapezoid(pairing_t, times)])
    g_cum = np.concatenate([[0.0], cumulative_trapezoid(g_t, times)])
    slacks = {}
    for c in sorted({1.0, 2.0, 5.0, float(gronwall_constant)}):
        gr = np.concatenate([[0.0], cumulative_trapezoid(c * gradu_inf * H, times)])
        slacks[c] = H[0] + pairing_cum + g_cum + gr - H
    series = slacks[float(gronwall_constant)]
    gr_final = series[-1] - (H[0] + pairing_cum[-1] + g_cum[-1] - H[-1])
    return StabilityBudget(
        h_final=float(H[-1]),
        h_initial=float(H[0]),
        remainder=float(g_cum[-1]),
        gronwall=float(gr_final),
        pairing=float(pairing_cum[-1]),
        slack=float(series[-1]),
        constant=float(gronwall_constant),
        times=times,
        slack_series=series,
        slack_min=float(np.min(series[1:])),
        extras={f"slack_C{int(c)}": float(s[-1]) for c, s in slacks.items()},
    )
