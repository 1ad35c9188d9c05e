"""The four electrostatic closures coupling the ion density to the potential.

Nonlinear Maxwell-Boltzmann (``solve_poisson_S``), its charge-normalized
variant (``solve_poisson_Sprime``), the linearized law on a torus
(``solve_poisson_L``), and the quasineutral consistency limit
``V = log(rho/d)``.

The semilinear solves use a damped Newton iteration on a second-order
finite-difference Laplacian (cyclic on tori, zero-Dirichlet at the faces of
a truncated line, consistent with V -> 0 where d -> 0).  The Jacobian
``-eps*L + diag(d e^V)`` is an M-matrix, which gives the monotonicity and
comparison properties the diagnostics rely on.  The linearized law is
diagonal in Fourier space and solved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConvergenceError, DomainError, NumericsError, ShapeError
from .grids import LINE, PERIODIC, SpatialGrid, gradient, quadrature


def _zero_potential(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _sqrt_potential(x, shift=0.0):
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2) + shift


@dataclass(frozen=True)
class BackgroundProfile:
    """Electron background ``d = exp(-H)`` for a confining potential H.

    ``grad_H`` is the spatial gradient of H on the grid (one array per
    axis).  On truncated lines d must be integrable and negligible at the
    boundary; ``boundary_decay_ok`` makes that checkable.
    """

    grid: SpatialGrid
    d: np.ndarray
    H: np.ndarray
    grad_H: tuple[np.ndarray, ...]
    H_fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.d.shape != self.grid.shape or self.H.shape != self.grid.shape:
            raise ShapeError("background arrays must match the grid")
        err = np.max(np.abs(self.d - np.exp(-self.H)))
        if err > 1e-12 * max(1.0, float(np.max(self.d))):
            raise ValueError("d != exp(-H) beyond tolerance")

    @classmethod
    def uniform(cls, grid: SpatialGrid) -> "BackgroundProfile":
        """Flat background d = 1, H = 0 (torus setting)."""
        one = np.ones(grid.shape)
        zero = np.zeros(grid.shape)
        grads = tuple(np.zeros(grid.shape) for _ in range(grid.ndim))
        return cls(grid, one, zero, grads, H_fn=_zero_potential)

    @classmethod
    def from_H(cls, grid: SpatialGrid, H_values: np.ndarray,
               H_fn: Callable | None = None) -> "BackgroundProfile":
        H_values = np.asarray(H_values, dtype=float)
        grads = tuple(gradient(H_values, grid))
        return cls(grid, np.exp(-H_values), H_values, grads, H_fn=H_fn)

    @classmethod
    def sqrt_confinement(cls, grid: SpatialGrid,
                         normalize_mass: bool = True) -> "BackgroundProfile":
        """Confining potential H(x) = sqrt(1 + x^2) on a 1D line.

        With ``normalize_mass`` the normalizing constant is folded into d
        so that ``int d dx = 1``; global neutrality then makes the far
        field of the potential zero, consistent with the zero-Dirichlet
        discretization.
        """
        if grid.ndim != 1:
            raise ShapeError("sqrt confinement profile is 1D")
        x = grid.axes()[0]
        H = np.sqrt(1.0 + x**2)
        grad = (x / H,)
        shift = 0.0
        if normalize_mass:
            shift = float(np.log(np.sum(np.exp(-H)) * grid.cell_volume))
        return cls(grid, np.exp(-H - shift), H + shift, grad,
                   H_fn=partial(_sqrt_potential, shift=shift))

    def boundary_decay_ok(self, threshold: float = 1e-12) -> bool:
        """True when d at the domain ends is below the declared threshold."""
        if self.grid.topology != LINE:
            return True
        return bool(max(self.d[0], self.d[-1]) < threshold)


@dataclass
class PotentialSolution:
    """Solution of one electrostatic closure.

    ``E = -grad V`` uses the topology-consistent gradient; ``m`` is the
    electron density implied by the closure (``d e^V``, its normalized
    form, or ``1 + V`` for the linearized law).
    """

    V: np.ndarray
    E: tuple[np.ndarray, ...]
    m: np.ndarray
    epsilon: float
    kind: str
    newton_iterations: int = 0
    residual: float = 0.0
    residual_history: list[float] = field(default_factory=list)

    def field_energy(self, grid: SpatialGrid) -> float:
        """(1/2) integral |grad V|^2 (caller multiplies by eps weight)."""
        return 0.5 * quadrature(sum(e**2 for e in self.E), grid)


class Laplacian1D:
    """Second-order 1D finite-difference Laplacian with banded shifted solves.

    Periodic topology wraps cyclically (handled with the Sherman-Morrison
    correction); line topology imposes V = 0 at the domain faces, half a
    cell outside the first/last centres.
    """

    def __init__(self, grid: SpatialGrid):
        if grid.ndim != 1:
            raise ShapeError("Laplacian1D requires a 1D grid")
        self.grid = grid
        self.n = grid.points[0]
        self.dx = grid.spacing[0]
        self.periodic = grid.topology == PERIODIC

    def apply(self, v: np.ndarray) -> np.ndarray:
        dx2 = self.dx**2
        if self.n == 1:
            return np.zeros_like(v)
        if self.periodic:
            return (np.roll(v, -1) - 2.0 * v + np.roll(v, 1)) / dx2
        out = np.empty_like(v)
        out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dx2
        # ghost value -v[edge] puts the Dirichlet zero on the face
        out[0] = (v[1] - 3.0 * v[0]) / dx2
        out[-1] = (v[-2] - 3.0 * v[-1]) / dx2
        return out

    def solve_shifted(self, eps: float, diag: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(-eps * Lap + diag) x = rhs``."""
        n, dx2 = self.n, self.dx**2
        if n == 1:
            return rhs / diag
        c = eps / dx2
        main = 2.0 * c + diag
        ab = np.zeros((3, n))
        ab[0, 1:] = -c
        ab[1, :] = main
        ab[2, :-1] = -c
        if not self.periodic:
            ab[1, 0] += c
            ab[1, -1] += c
            return solve_banded((1, 1), ab, rhs)
        # cyclic corners via Sherman-Morrison
        gamma = -main[0]
        ab[1, 0] -= gamma
        ab[1, -1] -= c * c / gamma
        u = np.zeros(n)
        u[0] = gamma
        u[-1] = -c
        v = np.zeros(n)
        v[0] = 1.0
        v[-1] = -c / gamma
        y = solve_banded((1, 1), ab, np.column_stack([rhs, u]))
        x, q = y[:, 0], y[:, 1]
        return x - q * (v @ x) / (1.0 + v @ q)


def _check_density(rho: np.ndarray, grid) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != grid.shape:
        raise ShapeError(f"density shape {rho.shape} != grid shape {grid.shape}")
    if not np.all(np.isfinite(rho)):
        raise NumericsError("non-finite density")
    if np.min(rho) < 0:
        raise DomainError("density must be nonnegative")
    return rho


def solve_poisson_S(rho, bg: BackgroundProfile, epsilon: float, tol: float = 1e-10,
                    max_iter: int = 50, v0: np.ndarray | None = None) -> PotentialSolution:
    """Damped Newton solve of ``-eps * Lap V + d e^V = rho``.

    The Jacobian is symmetric positive definite, so the damped iteration is
    globally convergent; Armijo backtracking on the residual norm guards
    against overflow of ``e^V`` at small eps.  ``v0`` warm-starts the
    iteration (time steppers pass the previous potential).
    """
    grid = bg.grid
    rho = _check_density(rho, grid)
    lap = Laplacian1D(grid)
    if v0 is not None:
        V = np.array(v0, dtype=float)
    else:
        floor = max(float(np.max(rho)), 1e-300) * 1e-16
        V = np.log(np.maximum(rho, floor) / bg.d)

    def res_norm(r):
        return float(np.sqrt(quadrature(r * r, grid)))

    history = []
    r = -epsilon * lap.apply(V) + bg.d * np.exp(V) - rho
    rn = res_norm(r)
    history.append(rn)
    iterations = 0
    while rn > tol:
        if iterations >= max_iter:
            raise ConvergenceError(
                f"Newton stalled at residual {rn:.3e} after {iterations} iterations",
                residual_history=history,
            )
        m = bg.d * np.exp(V)
        delta = lap.solve_shifted(epsilon, m, -r)
        alpha = 1.0
        while True:
            with np.errstate(over="ignore", invalid="ignore"):
                V_try = V + alpha * delta
                r_try = -epsilon * lap.apply(V_try) + bg.d * np.exp(V_try) - rho
                rn_try = res_norm(r_try) if np.all(np.isfinite(r_try)) else np.inf
            if rn_try <= (1.0 - 1e-4 * alpha) * rn:
                break
            alpha *= 0.5
            if alpha < 1e-12:
                raise ConvergenceError(
                    "Armijo backtracking failed", residual_history=history
                )
        V, r, rn = V_try, r_try, rn_try
        history.append(rn)
        iterations += 1

    E = tuple(-g for g in gradient(V, grid))
    return PotentialSolution(
        V=V, E=E, m=bg.d * np.exp(V), epsilon=epsilon, kind="S",
        newton_iterations=iterations, residual=rn, residual_history=history,
    )


def solve_poisson_Sprime(rho, bg: BackgroundProfile, epsilon: float, tol: float = 1e-10,
                         max_iter: int = 50, v0: np.ndarray | None = None) -> PotentialSolution:
    """Charge-normalized closure ``-eps * Lap V = rho - d e^V / int d e^V``.

    Integrating the unnormalized equation pins ``int d e^W = int rho``, so
    the outer fixed point on the normalizing constant collapses to a single
    inner Newton solve followed by the gauge shift V(x0) = 0 at the domain
    centre (the normalized closure is invariant under V -> V + c).
    """
    grid = bg.grid
    rho = _check_density(rho, grid)
    total = quadrature(rho, grid)
    if abs(total - 1.0) > 1e-6:
        raise DomainError(f"normalized closure expects unit total charge, got {total:.6f}")
    inner = solve_poisson_S(rho, bg, epsilon, tol=tol, max_iter=max_iter, v0=v0)
    W = inner.V
    center = grid.points[0] // 2
    V = W - W[center]
    lam = quadrature(bg.d * np.exp(V), grid)
    m = bg.d * np.exp(V) / lam
    lapV = Laplacian1D(grid).apply(V)
    res = -epsilon * lapV - (rho - m)
    E = tuple(-g for g in gradient(V, grid))
    return PotentialSolution(
        V=V, E=E, m=m, epsilon=epsilon, kind="Sprime",
        newton_iterations=inner.newton_iterations,
        residual=float(np.sqrt(quadrature(res * res, grid))),
        residual_history=inner.residual_history,
    )


def solve_poisson_L(rho, grid: SpatialGrid, epsilon: float) -> PotentialSolution:
    """Exact spectral solve of ``V - eps * Lap V = rho - 1`` on a torus."""
    if grid.topology != PERIODIC:
        raise DomainError("linearized closure is posed on a periodic grid")
    rho = _check_density(rho, grid)
    rhat = np.fft.fftn(rho, norm="forward")
    rhat.flat[0] -= 1.0
    vhat = rhat / (1.0 + epsilon * grid.wavevector_norm2())
    V = np.fft.ifftn(vhat, norm="forward").real
    ks = np.meshgrid(*grid.wavevectors(), indexing="ij")
    E = tuple(-np.fft.ifftn(1j * k * vhat, norm="forward").real for k in ks)
    res = V - epsilon * np.fft.ifftn(-grid.wavevector_norm2() * vhat, norm="forward").real
    res -= rho - 1.0
    return PotentialSolution(
        V=V, E=E, m=1.0 + V, epsilon=epsilon, kind="L",
        newton_iterations=0, residual=float(np.sqrt(quadrature(res * res, grid))),
    )


def quasineutral_potential(rho, bg: BackgroundProfile) -> np.ndarray:
    """eps -> 0 limit potential ``V = log(rho/d)``."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != bg.grid.shape:
        raise ShapeError("density shape mismatch")
    if np.any(rho <= 0):
        raise DomainError("quasineutral potential needs rho > 0 on the support of d")
    return np.log(rho / bg.d)
