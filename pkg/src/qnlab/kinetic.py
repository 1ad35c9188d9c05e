"""Semi-Lagrangian Vlasov solver on tensor phase-space grids.

Strang splitting between free transport in x and velocity kicks, with an
exact rotation of the perpendicular velocity plane for the strongly
magnetized runs.  Every 1D advection is a conservative shift: the cell
masses are accumulated into a primitive, the primitive is interpolated
with a cubic spline, and new cell masses are differences of the shifted
primitive.  Mass is then conserved to rounding on periodic axes and up to
recorded boundary losses on truncated ones.

Supported phase spaces: 1D-x / 1D-v (electrostatic runs) and
1D-x / 3D-v (magnetized runs, x along the magnetic axis).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import erfc

from .errors import (
    CutoffError,
    InsufficientDataError,
    NumericsError,
    ShapeError,
    StepRejectedError,
)
from .grids import (
    PERIODIC,
    SpatialGrid,
    VelocityGrid,
    negative_sobolev_norm,
    quadrature,
)


@dataclass
class PhaseDensity:
    """Ion distribution on a SpatialGrid x VelocityGrid tensor grid.

    ``values`` has shape (nx, nv) or (nx, nv1, nv2, nv3); nonnegative up to
    the declared clipping tolerance, total mass 1 up to the drift budget.
    ``diagnostics`` accumulates clipped mass, boundary losses and the
    |v_perp| drift of sheared rotations.
    """

    values: np.ndarray
    xgrid: SpatialGrid
    vgrid: VelocityGrid
    time: float = 0.0
    epsilon: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = self.xgrid.shape + self.vgrid.shape
        if self.values.shape != expected:
            raise ShapeError(f"values shape {self.values.shape} != {expected}")

    @property
    def cell_volume(self) -> float:
        return self.xgrid.cell_volume * self.vgrid.cell_volume

    def mass(self) -> float:
        return float(np.sum(self.values) * self.cell_volume)

    def density(self) -> np.ndarray:
        """Charge density: velocity marginal of f."""
        axes = tuple(range(self.xgrid.ndim, self.values.ndim))
        return self.values.sum(axis=axes) * self.vgrid.cell_volume

    def copy(self) -> "PhaseDensity":
        return PhaseDensity(self.values.copy(), self.xgrid, self.vgrid,
                            self.time, self.epsilon, dict(self.diagnostics))


@dataclass
class MomentReport:
    """Velocity moments of a phase density."""

    rho: np.ndarray
    current: np.ndarray            # (nx,) or (n_vdim, nx)
    bulk_velocity: np.ndarray      # J/rho where rho clears the floor, else 0
    second_moment: np.ndarray      # int f |v|^2 dv, per x
    ion_temperature: float
    mass: float
    density_floor: float


# ---------------------------------------------------------------------------
# conservative spline shifts


def _cyclic_spline_curvatures(g: np.ndarray) -> np.ndarray:
    """Second derivatives of the periodic cubic spline through g (rows)."""
    b, n = g.shape
    rhs = 6.0 * (np.roll(g, -1, axis=1) - 2.0 * g + np.roll(g, 1, axis=1))
    if n < 3:
        return np.zeros_like(g)
    ab = np.zeros((3, n))
    ab[0, 1:] = 1.0
    ab[1, :] = 4.0
    ab[2, :-1] = 1.0
    # Sherman-Morrison for the periodic corners
    gamma = -4.0
    ab[1, 0] -= gamma
    ab[1, -1] -= 1.0 / gamma
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = 1.0
    v = np.zeros(n)
    v[0] = 1.0
    v[-1] = 1.0 / gamma
    sol = solve_banded((1, 1), ab, np.column_stack([rhs.T, u]))
    y = sol[:, :b].T
    q = sol[:, b]
    corr = (y @ v) / (1.0 + v @ q)
    return y - corr[:, None] * q[None, :]


def _natural_spline_curvatures(g: np.ndarray) -> np.ndarray:
    """Second derivatives of the natural cubic spline through g (rows)."""
    b, n = g.shape
    m = np.zeros_like(g)
    if n < 3:
        return m
    rhs = 6.0 * (g[:, 2:] - 2.0 * g[:, 1:-1] + g[:, :-2])
    ab = np.zeros((3, n - 2))
    ab[0, 1:] = 1.0
    ab[1, :] = 4.0
    ab[2, :-1] = 1.0
    m[:, 1:-1] = solve_banded((1, 1), ab, rhs.T).T
    return m


def _spline_eval(knots: np.ndarray, curv: np.ndarray, y: np.ndarray,
                 periodic: bool) -> np.ndarray:
    """Evaluate the spline (index-space knots 0..n-1) at points y (rows)."""
    b, n = knots.shape
    if periodic:
        y = np.mod(y, n)
        idx = np.floor(y).astype(int) % n
        nxt = (idx + 1) % n
    else:
        y = np.clip(y, 0.0, n - 1.0)
        idx = np.minimum(np.floor(y).astype(int), n - 2)
        nxt = idx + 1
    u = y - idx
    rows = np.arange(b)[:, None]
    g0 = knots[rows, idx]
    g1 = knots[rows, nxt]
    m0 = curv[rows, idx]
    m1 = curv[rows, nxt]
    t = 1.0 - u
    return g0 * t + g1 * u + (t**3 - t) * m0 / 6.0 + (u**3 - u) * m1 / 6.0


def conservative_shift_periodic(f: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Shift rows of f by sigma cells (f(x) -> f(x - sigma*dx)), conservatively.

    The periodic primitive is split into its linear-growth and periodic
    parts; the periodic part is interpolated with a cyclic cubic spline.
    Row masses are preserved exactly.
    """
    b, n = f.shape
    sigma = np.asarray(sigma, dtype=float).reshape(b)
    m_int = np.floor(sigma).astype(int)
    delta = sigma - m_int  # in [0, 1)
    cols = np.arange(n)
    rolled = f[np.arange(b)[:, None], (cols[None, :] - m_int[:, None]) % n]
    # split the primitive into linear growth (mean mass) + periodic part
    mean = rolled.mean(axis=1, keepdims=True)
    tilde = rolled - mean
    prim = np.concatenate([np.zeros((b, 1)), np.cumsum(tilde, axis=1)[:, :-1]], axis=1)
    curv = _cyclic_spline_curvatures(prim)
    y = cols[None, :] - delta[:, None]
    cume = _spline_eval(prim, curv, y, periodic=True)  # periodic part at new edges
    out = np.empty_like(f)
    out[:, :-1] = cume[:, 1:] - cume[:, :-1] + mean
    # wrap: edge N carries the full row mass on top of edge 0
    out[:, -1] = (cume[:, 0] + 0.0) - cume[:, -1] + mean[:, 0]
    return out


def conservative_shift_bounded(f: np.ndarray, sigma: np.ndarray):
    """Shift rows of f by sigma cells with zero inflow at both ends.

    Returns (shifted, lost) where lost is the mass (in cell units) that
    left through the boundaries, per row.
    """
    b, n = f.shape
    sigma = np.asarray(sigma, dtype=float).reshape(b)
    prim = np.concatenate([np.zeros((b, 1)), np.cumsum(f, axis=1)], axis=1)
    curv = _natural_spline_curvatures(prim)
    edges = np.arange(n + 1)[None, :] - sigma[:, None]
    vals = _spline_eval(prim, curv, edges, periodic=False)
    # clamp to the monotone range so clipping cannot create mass
    total = prim[:, -1:]
    vals = np.clip(vals, 0.0, total)
    below = edges < 0.0
    above = edges > n
    vals = np.where(below, 0.0, vals)
    vals = np.where(above, total, vals)
    out = np.diff(vals, axis=1)
    lost = f.sum(axis=1) - out.sum(axis=1)
    return out, lost


def _advect_axis(values: np.ndarray, axis: int, shift_cells: np.ndarray,
                 periodic: bool):
    """Conservative shift of `values` along `axis`.

    ``shift_cells`` must be broadcastable to the shape of `values` with
    `axis` removed (the shift is constant along the advected axis).
    Returns (new_values, lost_mass_in_cell_units).
    """
    moved = np.moveaxis(values, axis, -1)
    lead = moved.shape[:-1]
    n = moved.shape[-1]
    sig = np.broadcast_to(shift_cells, lead).reshape(-1)
    rows = moved.reshape(-1, n)
    if periodic:
        out = conservative_shift_periodic(rows, sig)
        lost = 0.0
    else:
        out, lost_rows = conservative_shift_bounded(rows, sig)
        lost = float(lost_rows.sum())
    return np.moveaxis(out.reshape(*lead, n), -1, axis), lost


# ---------------------------------------------------------------------------
# velocity rotation (magnetized runs)


def _quarter_turn(values: np.ndarray, a1: int, a2: int) -> np.ndarray:
    """f <- f o R(pi/2) in the (v1, v2) plane: f_new[i, j] = f_old[n-1-j, i]."""
    return np.flip(np.swapaxes(values, a1, a2), axis=a2)


def rotate_perpendicular(values: np.ndarray, angle: float, vgrid: VelocityGrid,
                         axes=(1, 2), diagnostics: dict | None = None) -> np.ndarray:
    """Rotate the distribution in the perpendicular velocity plane.

    ``f <- f o R(angle)``, the exact solution of the gyration substep over
    an angle ``angle = dt/epsilon``.  Quarter turns on a square symmetric
    grid are exact index permutations; other angles use the three-shear
    decomposition with conservative spline shears, logging the |v_perp|^2
    drift.
    """
    a1, a2 = axes
    n1, n2 = values.shape[a1], values.shape[a2]
    two_pi = 2.0 * np.pi
    phi = np.mod(angle, two_pi)
    quarter = phi / (0.5 * np.pi)
    if abs(quarter - round(quarter)) < 1e-12:
        out = values
        for _ in range(int(round(quarter)) % 4):
            if n1 != n2:
                raise ShapeError("quarter-turn rotation needs a square v_perp grid")
            out = _quarter_turn(out, a1, a2)
        return np.ascontiguousarray(out)

    if phi > np.pi:
        phi -= two_pi  # rotate the short way to keep shears small
    # axes indices into vgrid: values axes (x, v1, v2, v3) -> vgrid axes 0,1,2
    g1 = vgrid.axes()[a1 - 1]
    g2 = vgrid.axes()[a2 - 1]
    d1 = vgrid.spacing[a1 - 1]
    d2 = vgrid.spacing[a2 - 1]
    a = -np.tan(0.5 * phi)
    b = np.sin(phi)
    if diagnostics is not None:
        w2 = _perp_energy(values, g1, g2, a1, a2)
    # f o Sx: new(v1) = old(v1 + a*v2): advection shift -a*v2 (in cells of v1)
    out, _ = _advect_axis(values, a1, np.expand_dims(-a * g2 / d1, _other_axes(values.ndim, a1, a2)), periodic=False)
    out, _ = _advect_axis(out, a2, np.expand_dims(-b * g1 / d2, _other_axes(values.ndim, a2, a1)), periodic=False)
    out, _ = _advect_axis(out, a1, np.expand_dims(-a * g2 / d1, _other_axes(values.ndim, a1, a2)), periodic=False)
    if diagnostics is not None:
        w2_new = _perp_energy(out, g1, g2, a1, a2)
        diagnostics["vperp2_drift"] = diagnostics.get("vperp2_drift", 0.0) + (w2_new - w2)
    return out


def _other_axes(ndim: int, axis: int, keep: int):
    """Axis positions (after removing `axis`) on which the shift varies."""
    remaining = [a for a in range(ndim) if a != axis]
    pos = remaining.index(keep)
    return tuple(i for i in range(ndim - 1) if i != pos)


def _perp_energy(values, g1, g2, a1, a2) -> float:
    sh = [1] * values.ndim
    sh[a1] = -1
    v1 = g1.reshape(sh)
    sh = [1] * values.ndim
    sh[a2] = -1
    v2 = g2.reshape(sh)
    return float(np.sum(values * (v1**2 + v2**2)))


# ---------------------------------------------------------------------------
# initial data and moments


def cold_ion_maxwellian(rho0: np.ndarray, u0, Ti: float, xgrid: SpatialGrid,
                        vgrid: VelocityGrid, epsilon: float = 1.0,
                        time: float = 0.0) -> PhaseDensity:
    """Maxwellian ``rho0/(2 pi Ti)^{dv/2} exp(-|v - u0|^2 / (2 Ti))``.

    ``u0`` is a spatial field (1D-v) or a (3, nx) stack (3D-v).  Rejects a
    velocity box whose Gaussian tail holds more than 1e-8 of the mass.
    The result is rescaled to total mass one; the applied factor is kept in
    ``diagnostics['mass_scale']``.
    """
    if Ti <= 0:
        raise ValueError("Ti must be positive")
    rho0 = np.asarray(rho0, dtype=float)
    if rho0.shape != xgrid.shape:
        raise ShapeError("rho0 shape mismatch")
    if np.min(rho0) < 0:
        raise ValueError("rho0 must be nonnegative")
    dv = vgrid.ndim
    u0 = np.asarray(u0, dtype=float)
    if dv == 1:
        u_comps = [np.broadcast_to(u0, xgrid.shape)]
    else:
        if u0.shape != (3,) + xgrid.shape:
            raise ShapeError("u0 must be (3, nx) for a 3D velocity grid")
        u_comps = [u0[c] for c in range(3)]

    umax = max(float(np.max(np.abs(c))) for c in u_comps)
    z = (vgrid.cutoff - umax) / np.sqrt(2.0 * Ti)
    tail = dv * erfc(max(z, 0.0))
    if vgrid.cutoff < 8.0 * np.sqrt(Ti) + umax or tail > 1e-8:
        raise CutoffError(
            f"velocity cutoff {vgrid.cutoff} too small for Ti={Ti}, |u|max={umax}"
        )

    norm = (2.0 * np.pi * Ti) ** (-0.5 * dv)
    vx = vgrid.axes()
    nx_dims = xgrid.ndim
    exponent = np.zeros(xgrid.shape + vgrid.shape)
    for c, (vax, uc) in enumerate(zip(vx, u_comps)):
        sh_v = [1] * (nx_dims + dv)
        sh_v[nx_dims + c] = -1
        sh_u = list(xgrid.shape) + [1] * dv
        exponent = exponent + (vax.reshape(sh_v) - uc.reshape(sh_u)) ** 2
    values = norm * rho0.reshape(list(xgrid.shape) + [1] * dv) \
        * np.exp(-exponent / (2.0 * Ti))

    f = PhaseDensity(values, xgrid, vgrid, time=time, epsilon=epsilon)
    total = f.mass()
    f.values /= total
    f.diagnostics["mass_scale"] = 1.0 / total
    return f


def moments(f: PhaseDensity, floor_factor: float = 1e-12) -> MomentReport:
    """Charge density, current, bulk velocity and scaled ion temperature.

    The bulk velocity is defined only where rho clears the density floor
    (the convergence metrics never divide by rho, the floor only guards
    derived diagnostics).
    """
    if not np.all(np.isfinite(f.values)):
        raise NumericsError("non-finite phase density")
    dv = f.vgrid.ndim
    nxd = f.xgrid.ndim
    vol = f.vgrid.cell_volume
    vaxes = tuple(range(nxd, nxd + dv))
    rho = f.values.sum(axis=vaxes) * vol
    mass = quadrature(rho, f.xgrid)

    vx = f.vgrid.axes()
    currents = []
    second = np.zeros(f.xgrid.shape)
    for c in range(dv):
        sh = [1] * (nxd + dv)
        sh[nxd + c] = -1
        vv = vx[c].reshape(sh)
        currents.append((f.values * vv).sum(axis=vaxes) * vol)
        second += (f.values * vv**2).sum(axis=vaxes) * vol
    current = currents[0] if dv == 1 else np.stack(currents)

    floor = floor_factor * max(float(np.max(rho)), 1e-300)
    safe = rho > floor
    if dv == 1:
        bulk = np.where(safe, current / np.where(safe, rho, 1.0), 0.0)
        ke_bulk = rho * bulk**2
    else:
        bulk = np.where(safe[None, :], current / np.where(safe, rho, 1.0)[None, :], 0.0)
        ke_bulk = rho * (bulk**2).sum(axis=0)
    thermal = quadrature(second - ke_bulk, f.xgrid)
    Ti = max(thermal, 0.0) / (dv * mass) if mass > 0 else 0.0
    return MomentReport(rho=rho, current=current, bulk_velocity=bulk,
                        second_moment=second, ion_temperature=float(Ti),
                        mass=mass, density_floor=floor)


# ---------------------------------------------------------------------------
# the splitting step


def _transport_shifts(f: PhaseDensity, dt: float) -> np.ndarray:
    """Cells moved along x per velocity slice for a transport of length dt."""
    dx = f.xgrid.spacing[0]
    if f.vgrid.ndim == 1:
        v = f.vgrid.axes()[0]
        return v * dt / dx  # shape (nv,), broadcast over leading v-axis
    vpar = f.vgrid.axes()[2]
    return vpar.reshape(1, 1, -1) * dt / dx


def vlasov_step(f: PhaseDensity, field: np.ndarray | None = None,
                field_solver=None, magnetic: bool = False, dt: float = 1e-3,
                cfl_cells: float = 8.0) -> PhaseDensity:
    """One Strang step: half transport, v-kick (+ exact gyration), half transport.

    The electric field for the kick is either supplied directly (``field``)
    or recomputed from the half-advected density with ``field_solver(rho)``,
    which keeps the closure coupling second order.  With ``magnetic`` the
    perpendicular velocities rotate by ``dt/epsilon`` between kick halves;
    the kick itself only acts along the parallel axis.
    """
    if field is None and field_solver is None:
        raise ValueError("need field or field_solver")
    out = f.copy()
    periodic_x = f.xgrid.topology == PERIODIC

    sig_x = _transport_shifts(f, 0.5 * dt)
    if np.max(np.abs(sig_x)) > cfl_cells:
        raise StepRejectedError(
            "transport CFL exceeded",
            suggested_dt=0.9 * cfl_cells * dt / float(np.max(np.abs(sig_x))),
        )
    out.values, lost = _advect_axis(out.values, 0, sig_x, periodic_x)
    lost_total = lost

    if field_solver is not None:
        rho = out.values.sum(axis=tuple(range(1, out.values.ndim))) * f.vgrid.cell_volume
        field = field_solver(rho)
    field = np.asarray(field, dtype=float)
    if not np.all(np.isfinite(field)):
        raise NumericsError("non-finite electric field")
    if field.shape != f.xgrid.shape:
        raise ShapeError("field shape mismatch")

    kick_axis = 1 if f.vgrid.ndim == 1 else 3
    dv = f.vgrid.spacing[kick_axis - 1 if f.vgrid.ndim == 1 else 2]
    kick_max = float(np.max(np.abs(field))) * dt / dv
    if kick_max > cfl_cells:
        raise StepRejectedError(
            "kick CFL exceeded", suggested_dt=0.9 * cfl_cells * dt / kick_max
        )
    if f.vgrid.ndim == 1:
        if magnetic:
            raise ShapeError("magnetized runs need a 3D velocity grid")
        out.values, lost = _advect_axis(out.values, 1, field * dt / dv, False)
        lost_total += lost
    else:
        sig = (field * dt / dv).reshape(-1, 1, 1)
        out.values, lost = _advect_axis(out.values, 3, sig, False)
        lost_total += lost
        if magnetic:
            out.values = rotate_perpendicular(out.values, dt / f.epsilon, f.vgrid,
                                              axes=(1, 2), diagnostics=out.diagnostics)

    out.values, lost = _advect_axis(out.values, 0, sig_x, periodic_x)
    lost_total += lost

    # positivity: clip the (tiny) interpolation undershoots and renormalize
    clipped = 0.0
    neg = out.values < 0.0
    if np.any(neg):
        clipped = -float(out.values[neg].sum()) * out.cell_volume
        out.values[neg] = 0.0
        out.diagnostics["clipped_mass"] = out.diagnostics.get("clipped_mass", 0.0) + clipped
    m_now = out.values.sum() * out.cell_volume
    m_prev = f.values.sum() * f.cell_volume
    boundary = lost_total * out.cell_volume
    drift = abs(m_now - (m_prev - boundary + clipped))
    if drift > 1e-10 * max(m_prev, 1e-300):
        raise NumericsError(f"mass drift {drift:.3e} beyond per-step budget")
    if m_now > 0:
        out.values *= m_prev / m_now  # restore mass (clipping + boundary loss)
    out.diagnostics["lost_mass"] = out.diagnostics.get("lost_mass", 0.0) + boundary
    out.time = f.time + dt
    return out


# ---------------------------------------------------------------------------
# conservation-law residuals


@dataclass
class ResidualReport:
    times: list[float]
    l2: list[float]
    negative_norm: list[float]
    residuals: list[np.ndarray]


def conservation_residuals(fs, fields=None) -> ResidualReport:
    """Discrete residual of the charge conservation law.

    ``(rho(t+dt) - rho(t-dt)) / (2 dt) + div J(t)`` for each interior time
    of the sequence, reported in L2 and in the discrete H^{-1} norm
    (periodic grids; L2 only on truncated lines).
    """
    fs = list(fs)
    if len(fs) < 3:
        raise InsufficientDataError("need at least 3 consecutive time slices")
    grid = fs[0].xgrid
    for f in fs:
        if f.xgrid.shape != grid.shape:
            raise ShapeError("mismatched grids in residual sequence")
    dts = np.diff([f.time for f in fs])
    if np.max(np.abs(dts - dts[0])) > 1e-9 * abs(dts[0]):
        raise InsufficientDataError("time slices must be uniformly spaced")
    dt = float(dts[0])

    times, l2s, negs, arrays = [], [], [], []
    for k in range(1, len(fs) - 1):
        rho_p = fs[k + 1].density()
        rho_m = fs[k - 1].density()
        mom = moments(fs[k])
        J = mom.current if fs[k].vgrid.ndim == 1 else mom.current[2]
        if grid.topology == PERIODIC:
            khat = grid.wavevectors()[0]
            divJ = np.fft.ifft(1j * khat * np.fft.fft(J)).real
        else:
            divJ = np.gradient(J, grid.spacing[0])
        r = (rho_p - rho_m) / (2.0 * dt) + divJ
        times.append(fs[k].time)
        l2s.append(float(np.sqrt(quadrature(r * r, grid))))
        if grid.topology == PERIODIC:
            negs.append(negative_sobolev_norm(r, grid, order=1.0))
        else:
            negs.append(l2s[-1])
        arrays.append(r)
    return ResidualReport(times, l2s, negs, arrays)


# ---------------------------------------------------------------------------
# checkpoint I/O (layout documented in docs/checkpoint_format.md)

_MAGIC = "qnlab-checkpoint v1"


def save_checkpoint(f: PhaseDensity, path) -> None:
    """Text header + flat little-endian float64 block of f.values."""
    lines = [_MAGIC,
             f"time={f.time!r}",
             f"epsilon={f.epsilon!r}",
             f"xgrid topology={f.xgrid.topology} extent={f.xgrid.extent[0]!r} "
             f"points={f.xgrid.points[0]} cutoff={f.xgrid.cutoff_radius!r}",
             f"vgrid cutoff={f.vgrid.cutoff!r} points={','.join(map(str, f.vgrid.points))}"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n\n").encode("ascii"))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_checkpoint(path) -> PhaseDensity:
    with open(path, "rb") as fh:
        blob = fh.read()
    head, _, payload = blob.partition(b"\n\n")
    lines = head.decode("ascii").split("\n")
    if lines[0] != _MAGIC:
        raise ValueError("not a qnlab checkpoint")
    time = float(lines[1].split("=", 1)[1])
    epsilon = float(lines[2].split("=", 1)[1])
    xparts = dict(p.split("=") for p in lines[3].split(" ")[1:])
    vparts = dict(p.split("=") for p in lines[4].split(" ")[1:])
    if xparts["topology"] == PERIODIC:
        xg = SpatialGrid.torus(float(xparts["extent"]), int(xparts["points"]))
    else:
        xg = SpatialGrid.truncated_line(float(xparts["cutoff"]), int(xparts["points"]))
    vpoints = tuple(int(p) for p in vparts["points"].split(","))
    vg = VelocityGrid(float(vparts["cutoff"]), vpoints)
    values = np.frombuffer(payload, dtype="<f8").reshape(xg.shape + vg.shape).copy()
    return PhaseDensity(values, xg, vg, time=time, epsilon=epsilon)
