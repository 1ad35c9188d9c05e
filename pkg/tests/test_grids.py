"""Grid, transform, quadrature and Sobolev-norm checks."""

import numpy as np
import pytest
from scipy.special import erf

from qnlab.errors import ShapeError, UnsupportedTopologyError
from qnlab.grids import (
    SobolevIndex,
    SpatialGrid,
    VelocityGrid,
    dealiased_product,
    gradient,
    quadrature,
    sobolev_norm,
    spectral_gradient,
    transform_forward,
    transform_inverse,
)


@pytest.fixture
def torus():
    return SpatialGrid.torus(1.0, 128)


def test_grid_invariants(torus):
    assert torus.spacing[0] * torus.points[0] == pytest.approx(torus.extent[0])
    line = SpatialGrid.truncated_line(8.0, 200, decay_note="d < 1e-12 at boundary")
    assert line.spacing[0] * line.points[0] == pytest.approx(line.extent[0])
    assert line.cutoff_radius == 8.0


def test_velocity_grid_symmetric():
    vg = VelocityGrid.box(6.0, 64)
    v = vg.axes()[0]
    assert np.allclose(v, -v[::-1])
    assert vg.spacing[0] * vg.points[0] == pytest.approx(2 * vg.cutoff)


def test_transform_constant_single_mode(torus):
    c = 3.7
    sf = transform_forward(np.full(torus.shape, c), torus)
    assert sf.coeffs[0] == pytest.approx(c)
    assert np.max(np.abs(sf.coeffs.flat[1:])) < 1e-14


def test_transform_cosine_two_modes(torus):
    x = torus.axes()[0]
    sf = transform_forward(np.cos(2 * np.pi * x), torus)
    assert sf.coeffs[1] == pytest.approx(0.5, abs=1e-13)
    assert sf.coeffs[-1] == pytest.approx(0.5, abs=1e-13)


def test_transform_round_trip(torus):
    rng = np.random.default_rng(0)
    f = rng.standard_normal(torus.shape)
    back = transform_inverse(transform_forward(f, torus))
    assert np.max(np.abs(back - f)) < 1e-12 * np.max(np.abs(f))


def test_transform_rejects_line():
    line = SpatialGrid.truncated_line(4.0, 32)
    with pytest.raises(UnsupportedTopologyError):
        transform_forward(np.zeros(32), line)


def test_hermitian_symmetry(torus):
    rng = np.random.default_rng(1)
    sf = transform_forward(rng.standard_normal(torus.shape), torus)
    assert sf.is_hermitian()


def test_sobolev_norm_values(torus):
    zero = transform_forward(np.zeros(torus.shape), torus)
    assert sobolev_norm(zero, SobolevIndex(2.0)) == 0.0
    const = transform_forward(np.full(torus.shape, -2.5), torus)
    assert sobolev_norm(const, 3.3) == pytest.approx(2.5)
    x = torus.axes()[0]
    sine = transform_forward(np.sin(2 * np.pi * x), torus)
    assert sobolev_norm(sine, 1.0) == pytest.approx(
        np.sqrt((1 + 4 * np.pi**2) / 2), rel=1e-12
    )


def test_sobolev_norm_monotone_in_q(torus):
    rng = np.random.default_rng(2)
    sf = transform_forward(rng.standard_normal(torus.shape), torus)
    norms = [sobolev_norm(sf, q) for q in (0.0, 0.5, 1.0, 2.0)]
    assert all(a < b for a, b in zip(norms, norms[1:]))


def test_quadrature_values(torus):
    assert quadrature(np.ones(torus.shape), torus) == pytest.approx(1.0)
    x = torus.axes()[0]
    assert abs(quadrature(np.cos(2 * np.pi * x), torus)) < 1e-14


def test_quadrature_gaussian_velocity():
    # unit-mass Gaussian with v_max = 8 sigma: error-function oracle
    sigma = 0.7
    vg = VelocityGrid.box(8 * sigma, 128)
    v = vg.axes()[0]
    g = np.exp(-(v**2) / (2 * sigma**2)) / np.sqrt(2 * np.pi * sigma**2)
    exact = erf(8 / np.sqrt(2))
    assert quadrature(g, vg) == pytest.approx(exact, abs=1e-10)


def test_quadrature_shape_error(torus):
    with pytest.raises(ShapeError):
        quadrature(np.ones(3), torus)


def test_parseval(torus):
    rng = np.random.default_rng(3)
    g = rng.standard_normal(torus.shape)
    sf = transform_forward(g, torus)
    lhs = quadrature(g**2, torus)
    rhs = torus.volume * np.sum(np.abs(sf.coeffs) ** 2)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_spectral_derivative_matches_fd():
    """Spectral d/dx agrees with centred differences to second order."""
    errs = []
    for n in (64, 128):
        grid = SpatialGrid.torus(1.0, n)
        x = grid.axes()[0]
        f = np.exp(np.sin(2 * np.pi * x))
        d_spec = spectral_gradient(f, grid)[0]
        d_fd = (np.roll(f, -1) - np.roll(f, 1)) / (2 * grid.spacing[0])
        errs.append(np.max(np.abs(d_spec - d_fd)))
    order = np.log2(errs[0] / errs[1])
    assert order > 1.9


def test_line_gradient_second_order():
    errs = []
    for n in (200, 400):
        grid = SpatialGrid.truncated_line(4.0, n)
        x = grid.axes()[0]
        f = np.exp(-(x**2))
        df = gradient(f, grid)[0]
        errs.append(np.max(np.abs(df - (-2 * x * f))))
    assert np.log2(errs[0] / errs[1]) > 1.7


def test_dealiased_product(torus):
    x = torus.axes()[0]
    a = np.cos(2 * np.pi * 20 * x)
    b = np.cos(2 * np.pi * 25 * x)
    prod = dealiased_product(a, b, torus)
    # true product has modes 5 and 45; 45 exceeds the 2/3 cutoff (42) and
    # must be removed, not aliased back
    ph = np.fft.fft(prod, norm="forward")
    assert abs(ph[5] - 0.25) < 1e-12
    assert abs(ph[45]) < 1e-12


def test_sobolev_norm_rejects_nonfinite(torus):
    from qnlab.errors import NumericsError
    from qnlab.grids import SpectralField

    bad = SpectralField(np.full(torus.shape, np.nan, dtype=complex), torus)
    with pytest.raises(NumericsError):
        sobolev_norm(bad, 1.0)
