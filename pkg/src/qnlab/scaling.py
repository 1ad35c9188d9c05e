"""Nondimensionalization: physical constants to dimensionless groups.

From SI inputs the module derives the Debye length, thermal velocity,
cyclotron frequency and Larmor radius, then the small parameter eps and
(for magnetized setups) the exponent alpha tying the Debye length to the
Larmor radius.  Two conventions for eps coexist in the source material:
the introduction's lambda_D / L = eps and the scaling annex's
lambda_D^2 / L^2 = eps (the one that actually puts eps in front of the
Laplacian); the annex convention is the default, the other is available
behind an explicit flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

VACUUM_PERMITTIVITY = 8.8541878128e-12   # F / m
BOLTZMANN_CONSTANT = 1.380649e-23        # J / K
ELEMENTARY_CHARGE = 1.602176634e-19      # C
PROTON_MASS = 1.67262192369e-27          # kg

DEBYE_RANGE = (1e-8, 1e-3)               # typical terrestrial plasmas, in m


@dataclass(frozen=True)
class ScalingConfig:
    """Physical inputs and the derived dimensionless groups."""

    electron_temperature: float   # K
    density: float                # m^-3
    ion_mass: float               # kg
    length: float                 # observation length L, m
    magnetic_field: float | None  # T (None: unmagnetized)
    convention: str               # "annex" | "intro"
    # derived
    debye_length: float
    thermal_velocity: float
    observation_time: float
    epsilon: float
    alpha: float | None
    cyclotron_frequency: float | None
    larmor_radius: float | None

    @property
    def quasineutral(self) -> bool:
        return self.epsilon < 1e-2

    @property
    def alpha_physical(self) -> bool:
        """alpha > 1 is the physically common window (Debye << Larmor)."""
        return self.alpha is not None and self.alpha > 1.0

    def summary(self) -> str:
        lines = [
            f"lambda_D = {self.debye_length:.4e} m",
            f"v_th     = {self.thermal_velocity:.4e} m/s",
            f"tau      = {self.observation_time:.4e} s",
            f"L        = {self.length:.4e} m",
            f"epsilon  = {self.epsilon:.4e}  ({self.convention} convention)",
        ]
        if self.magnetic_field is not None:
            lines += [
                f"Omega    = {self.cyclotron_frequency:.4e} 1/s",
                f"r_L      = {self.larmor_radius:.4e} m",
                f"alpha    = {self.alpha:.4f}"
                + ("  (physical range alpha > 1)" if self.alpha_physical else ""),
            ]
        return "\n".join(lines)


def derive_groups(electron_temperature: float, density: float, length: float,
                  ion_mass: float = PROTON_MASS,
                  magnetic_field: float | None = None,
                  convention: str = "annex",
                  permittivity: float = VACUUM_PERMITTIVITY,
                  boltzmann: float = BOLTZMANN_CONSTANT,
                  charge: float = ELEMENTARY_CHARGE) -> ScalingConfig:
    """Compute every derived quantity from physical inputs.

    ``lambda_D = sqrt(eps0 k_B T_e / (N e^2))``, ``v_th = sqrt(k_B T_e/m)``
    (the normalization e E tau = m v_th then holds identically), and
    ``tau = L / v_th``.  With a magnetic field, ``Omega = e B / m``,
    ``r_L = m v_th / (e B)``, ``eps = 1/(Omega tau)`` and alpha solves
    ``lambda_D^2 / L^2 = eps^(2 alpha)``.
    """
    inputs = dict(electron_temperature=electron_temperature, density=density,
                  length=length, ion_mass=ion_mass, permittivity=permittivity,
                  boltzmann=boltzmann, charge=charge)
    for name, val in inputs.items():
        if val <= 0:
            raise DomainError(f"{name} must be positive")
    if convention not in ("annex", "intro"):
        raise ValueError("convention must be 'annex' or 'intro'")

    kTe = boltzmann * electron_temperature
    debye = np.sqrt(permittivity * kTe / (density * charge**2))
    v_th = np.sqrt(kTe / ion_mass)
    tau = length / v_th

    if magnetic_field is None:
        ratio = debye / length
        epsilon = ratio**2 if convention == "annex" else ratio
        return ScalingConfig(
            electron_temperature, density, ion_mass, length, None, convention,
            debye_length=float(debye), thermal_velocity=float(v_th),
            observation_time=float(tau), epsilon=float(epsilon), alpha=None,
            cyclotron_frequency=None, larmor_radius=None)

    if magnetic_field <= 0:
        raise DomainError("magnetic field must be positive")
    omega = charge * magnetic_field / ion_mass
    r_l = ion_mass * v_th / (charge * magnetic_field)
    epsilon = 1.0 / (omega * tau)
    # lambda_D^2 / L^2 = eps^(2 alpha)  <=>  alpha = log(lambda_D/L)/log(eps)
    alpha = float(np.log(debye / length) / np.log(epsilon))
    return ScalingConfig(
        electron_temperature, density, ion_mass, length, magnetic_field,
        convention, debye_length=float(debye), thermal_velocity=float(v_th),
        observation_time=float(tau), epsilon=float(epsilon), alpha=alpha,
        cyclotron_frequency=float(omega), larmor_radius=float(r_l))


def from_orderings(omega_tau: float, debye_larmor_ratio: float | None = None) -> dict:
    """Invert the magnetized ordering relations from dimensionless inputs.

    ``Omega tau = 1/eps`` gives eps; ``lambda_D / r_L = eps^(alpha-1)``
    then gives alpha.  Useful to position an experiment in (eps, alpha)
    space without fixing SI numbers.
    """
    if omega_tau <= 0:
        raise DomainError("Omega * tau must be positive")
    eps = 1.0 / omega_tau
    out = {"epsilon": eps}
    if debye_larmor_ratio is not None:
        if debye_larmor_ratio <= 0:
            raise DomainError("lambda_D / r_L must be positive")
        out["alpha"] = 1.0 + float(np.log(debye_larmor_ratio) / np.log(eps))
    return out


PHYSICAL_PRESETS = {
    # fusion-grade core plasma: hot, dense, strongly magnetized
    "tokamak-core": dict(electron_temperature=1.16e8, density=1e20,
                         length=0.1, magnetic_field=5.0),
    # laboratory glow discharge: cold, sparse, unmagnetized
    "glow-discharge": dict(electron_temperature=2.3e4, density=1e16,
                           length=0.05, magnetic_field=None),
}


def physical_preset(name: str, convention: str = "annex") -> ScalingConfig:
    if name not in PHYSICAL_PRESETS:
        raise KeyError(f"unknown physical preset {name!r}; "
                       f"have {sorted(PHYSICAL_PRESETS)}")
    return derive_groups(convention=convention, **PHYSICAL_PRESETS[name])
