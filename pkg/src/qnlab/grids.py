"""Uniform tensor grids, discrete Fourier transforms, quadratures and Sobolev norms.

Numerical substrate for every other module: periodic tori and truncated
lines in position, symmetric boxes in velocity, and the spectral helpers
(derivatives, dealiasing, discrete H^q norms) built on top of numpy's FFT.

All operations here are pure; numpy's internal FFT plan cache is safe for
concurrent reads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError, ShapeError, UnsupportedTopologyError

PERIODIC = "periodic"
LINE = "line"


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform tensor grid for the position variable.

    Cell-centred nodes: on a periodic axis the nodes are ``j * dx``; on a
    truncated line they are ``xmin + (j + 1/2) * dx``.  Either way
    ``spacing * points == extent`` on every axis.

    Parameters
    ----------
    extent : tuple of float
        Length of the domain along each axis.
    points : tuple of int
        Number of nodes along each axis.
    topology : str
        ``"periodic"`` (all axes periodic) or ``"line"`` (1D truncated
        line with an explicit cutoff radius).
    cutoff_radius : float, optional
        Half-width of a truncated-line domain; the grid covers
        ``[-cutoff_radius, cutoff_radius]``.
    decay_note : str
        Declared far-field decay assumption justifying the truncation.
    """

    extent: tuple[float, ...]
    points: tuple[int, ...]
    topology: str = PERIODIC
    cutoff_radius: float | None = None
    decay_note: str = ""

    def __post_init__(self):
        if self.topology not in (PERIODIC, LINE):
            raise UnsupportedTopologyError(f"unknown topology {self.topology!r}")
        if len(self.extent) != len(self.points):
            raise ShapeError("extent and points must have the same length")
        if any(n < 1 for n in self.points):
            raise ValueError("points must be positive")
        if any(ell <= 0 for ell in self.extent):
            raise ValueError("extent must be positive")
        if len(self.points) not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if self.topology == LINE:
            if len(self.points) != 1:
                raise UnsupportedTopologyError("truncated-line grids are 1D")
            if self.cutoff_radius is None:
                raise ValueError("truncated-line grid requires a cutoff radius")
            if abs(2.0 * self.cutoff_radius - self.extent[0]) > 1e-12 * self.extent[0]:
                raise ValueError("extent must equal 2 * cutoff_radius")

    @classmethod
    def torus(cls, extent, points) -> "SpatialGrid":
        """Periodic grid; scalar arguments build a 1D torus."""
        if np.isscalar(extent):
            extent = (float(extent),)
            points = (int(points),)
        return cls(tuple(float(e) for e in extent), tuple(int(n) for n in points))

    @classmethod
    def truncated_line(cls, radius, points, decay_note="") -> "SpatialGrid":
        """1D line ``[-radius, radius]`` with zero-inflow far field."""
        return cls(
            (2.0 * float(radius),),
            (int(points),),
            topology=LINE,
            cutoff_radius=float(radius),
            decay_note=decay_note,
        )

    @property
    def ndim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / n for e, n in zip(self.extent, self.points))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        """Coordinate array along each axis."""
        out = []
        for e, n, dx in zip(self.extent, self.points, self.spacing):
            if self.topology == PERIODIC:
                out.append(dx * np.arange(n))
            else:
                out.append(-self.cutoff_radius + dx * (np.arange(n) + 0.5))
        return out

    def mesh(self) -> list[np.ndarray]:
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def wavevectors(self) -> list[np.ndarray]:
        """Physical wave-vector ``2*pi*k/extent`` along each axis (fft layout)."""
        return [
            2.0 * np.pi * np.fft.fftfreq(n, d=dx)
            for n, dx in zip(self.points, self.spacing)
        ]

    def wavevector_norm2(self) -> np.ndarray:
        """|xi'|^2 on the full mode lattice."""
        ks = np.meshgrid(*self.wavevectors(), indexing="ij")
        return sum(k**2 for k in ks)

    def mode_numbers(self) -> list[np.ndarray]:
        """Integer mode indices along each axis (fft layout)."""
        return [np.fft.fftfreq(n, d=1.0 / n).astype(int) for n in self.points]


@dataclass(frozen=True)
class VelocityGrid:
    """Symmetric cell-centred velocity box ``[-cutoff, cutoff]^dim``.

    Nodes ``-cutoff + (j + 1/2) * dv`` come in exact ``(v, -v)`` pairs, so
    moments of even/odd functions are computed without parity bias.  The
    cutoff is recorded so truncated-tail diagnostics can be formed.
    """

    cutoff: float
    points: tuple[int, ...]

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if len(self.points) not in (1, 3):
            raise ValueError("velocity dimension must be 1 or 3")
        if any(n < 1 for n in self.points):
            raise ValueError("points must be positive")

    @classmethod
    def box(cls, cutoff, points) -> "VelocityGrid":
        if np.isscalar(points):
            points = (int(points),)
        return cls(float(cutoff), tuple(int(n) for n in points))

    @property
    def ndim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(2.0 * self.cutoff / n for n in self.points)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [
            -self.cutoff + dv * (np.arange(n) + 0.5)
            for n, dv in zip(self.points, self.spacing)
        ]

    def mesh(self) -> list[np.ndarray]:
        return list(np.meshgrid(*self.axes(), indexing="ij"))


@dataclass(frozen=True)
class SobolevIndex:
    """Non-negative Sobolev order."""

    order: float

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("Sobolev order must be >= 0")

    def __float__(self) -> float:
        return float(self.order)


@dataclass
class SpectralField:
    """Fourier coefficients of a field on a periodic grid.

    Convention: ``coeffs[k] = (1/N) sum_x g(x) exp(-i <xi', x>)`` with
    ``xi' = 2*pi*k/extent`` (numpy ``norm="forward"``), so the inverse
    transform is exact and a constant field has a single nonzero mode.
    """

    coeffs: np.ndarray
    grid: SpatialGrid

    def to_physical(self) -> np.ndarray:
        out = np.fft.ifftn(self.coeffs, norm="forward")
        return np.ascontiguousarray(out.real)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        """True when the coefficients describe a real-valued field."""
        back = np.fft.ifftn(self.coeffs, norm="forward")
        scale = np.max(np.abs(self.coeffs)) or 1.0
        return bool(np.max(np.abs(back.imag)) <= tol * max(scale, 1.0))


def transform_forward(values: np.ndarray, grid: SpatialGrid) -> SpectralField:
    """Forward DFT of a real field on a periodic grid."""
    if grid.topology != PERIODIC:
        raise UnsupportedTopologyError("Fourier transform requires a periodic grid")
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ShapeError(f"field shape {values.shape} != grid shape {grid.shape}")
    return SpectralField(np.fft.fftn(values, norm="forward"), grid)


def transform_inverse(field: SpectralField) -> np.ndarray:
    """Inverse DFT back to physical space (real part)."""
    return field.to_physical()


def sobolev_norm(field: SpectralField, index) -> float:
    """Discrete H^q norm ``sqrt(vol * sum (1+|xi'|^2)^q |g_hat|^2)``.

    At q = 0 this is the L^2 norm by the Parseval identity.
    """
    q = float(index)
    coeffs = field.coeffs
    if not np.all(np.isfinite(coeffs)):
        raise NumericsError("non-finite spectral coefficients")
    weight = (1.0 + field.grid.wavevector_norm2()) ** q
    return float(np.sqrt(field.grid.volume * np.sum(weight * np.abs(coeffs) ** 2)))


def quadrature(values: np.ndarray, grid) -> float:
    """Midpoint-rule integral consistent with the grid topology.

    Exact for constants; spectrally accurate for smooth periodic fields
    and for rapidly decaying fields on truncated domains.
    """
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ShapeError(f"values shape {values.shape} != grid shape {grid.shape}")
    if not np.all(np.isfinite(values)):
        raise NumericsError("non-finite values in quadrature")
    return float(np.sum(values) * grid.cell_volume)


def spectral_gradient(values: np.ndarray, grid: SpatialGrid) -> list[np.ndarray]:
    """Gradient of a periodic field, one array per axis."""
    fhat = np.fft.fftn(np.asarray(values, dtype=float), norm="forward")
    out = []
    for axis, k in enumerate(grid.wavevectors()):
        shape = [1] * grid.ndim
        shape[axis] = -1
        dk = fhat * (1j * k.reshape(shape))
        out.append(np.fft.ifftn(dk, norm="forward").real)
    return out


def spectral_laplacian(values: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    fhat = np.fft.fftn(np.asarray(values, dtype=float), norm="forward")
    return np.fft.ifftn(-grid.wavevector_norm2() * fhat, norm="forward").real


def gradient(values: np.ndarray, grid: SpatialGrid) -> list[np.ndarray]:
    """Topology-aware gradient: spectral on tori, centred differences on lines."""
    if grid.topology == PERIODIC:
        return spectral_gradient(values, grid)
    return [np.gradient(np.asarray(values, dtype=float), grid.spacing[0])]


def dealias_mask(grid: SpatialGrid) -> np.ndarray:
    """Boolean 2/3-rule mask on the mode lattice."""
    masks = np.meshgrid(
        *[np.abs(m) <= n // 3 for m, n in zip(grid.mode_numbers(), grid.points)],
        indexing="ij",
    )
    out = masks[0]
    for m in masks[1:]:
        out = out & m
    return out


def dealiased_product(a: np.ndarray, b: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Pointwise product with the 2/3-rule guard against aliasing."""
    mask = dealias_mask(grid)
    ah = np.fft.fftn(a, norm="forward") * mask
    bh = np.fft.fftn(b, norm="forward") * mask
    prod = np.fft.ifftn(ah, norm="forward").real * np.fft.ifftn(bh, norm="forward").real
    ph = np.fft.fftn(prod, norm="forward") * mask
    return np.fft.ifftn(ph, norm="forward").real


def negative_sobolev_norm(values: np.ndarray, grid: SpatialGrid, order: float = 1.0) -> float:
    """Discrete H^{-order} norm of a periodic field (used for residuals)."""
    fhat = np.fft.fftn(np.asarray(values, dtype=float), norm="forward")
    weight = (1.0 + grid.wavevector_norm2()) ** (-order)
    return float(np.sqrt(grid.volume * np.sum(weight * np.abs(fhat) ** 2)))
