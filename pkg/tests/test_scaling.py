"""Nondimensionalization identities and physical presets."""

import pytest

from qnlab.errors import DomainError
from qnlab.scaling import (
    DEBYE_RANGE,
    PHYSICAL_PRESETS,
    derive_groups,
    from_orderings,
    physical_preset,
)


def test_unit_substitution():
    """eps0 = k_B = T_e = N = e = 1 gives lambda_D = 1."""
    cfg = derive_groups(1.0, 1.0, 10.0, ion_mass=1.0, permittivity=1.0,
                        boltzmann=1.0, charge=1.0)
    assert cfg.debye_length == pytest.approx(1.0)
    assert cfg.thermal_velocity == pytest.approx(1.0)
    assert cfg.observation_time == pytest.approx(10.0)


def test_presets_land_in_debye_range():
    """Physical presets keep lambda_D within the stated terrestrial window."""
    for name in PHYSICAL_PRESETS:
        cfg = physical_preset(name)
        assert DEBYE_RANGE[0] <= cfg.debye_length <= DEBYE_RANGE[1], name


def test_ordering_inversion():
    """Omega tau = 100 -> eps = 0.01; with lambda_D/r_L = 0.1 -> alpha = 1.5."""
    out = from_orderings(100.0, 0.1)
    assert out["epsilon"] == pytest.approx(0.01)
    assert out["alpha"] == pytest.approx(1.5)


def test_convention_flag():
    cfg_annex = derive_groups(1.16e5, 1e17, 0.1)
    cfg_intro = derive_groups(1.16e5, 1e17, 0.1, convention="intro")
    ratio = cfg_annex.debye_length / 0.1
    assert cfg_annex.epsilon == pytest.approx(ratio**2, rel=1e-12)
    assert cfg_intro.epsilon == pytest.approx(ratio, rel=1e-12)


def test_debye_larmor_identity():
    """lambda_D / r_L = eps^(alpha - 1) holds exactly for derived configs."""
    cfg = physical_preset("tokamak-core")
    lhs = cfg.debye_length / cfg.larmor_radius
    rhs = cfg.epsilon ** (cfg.alpha - 1.0)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert cfg.alpha_physical


def test_dimensional_homogeneity():
    """Changing the mass unit consistently leaves every group unchanged.

    With the mass unit shrunk by mu, numerical masses scale by mu, k_B and
    B scale by mu, and the permittivity by 1/mu; lambda_D, v_th, Omega and
    hence (eps, alpha) are invariant.
    """
    mu = 1000.0
    base = derive_groups(1.16e7, 1e19, 0.2, magnetic_field=2.0)
    scaled = derive_groups(
        1.16e7, 1e19, 0.2,
        ion_mass=1.67262192369e-27 * mu,
        magnetic_field=2.0 * mu,
        permittivity=8.8541878128e-12 / mu,
        boltzmann=1.380649e-23 * mu,
    )
    assert scaled.debye_length == pytest.approx(base.debye_length, rel=1e-12)
    assert scaled.thermal_velocity == pytest.approx(base.thermal_velocity, rel=1e-12)
    assert scaled.epsilon == pytest.approx(base.epsilon, rel=1e-12)
    assert scaled.alpha == pytest.approx(base.alpha, rel=1e-12)


def test_nonpositive_inputs_rejected():
    with pytest.raises(DomainError):
        derive_groups(-1.0, 1e19, 0.1)
    with pytest.raises(DomainError):
        from_orderings(0.0)
