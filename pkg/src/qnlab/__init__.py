"""qnlab: desk-scale laboratory for quasineutral limits of Vlasov-Poisson systems.

Subpackages follow the physics: ``grids`` (spectral/quadrature substrate),
``poisson`` (the four electrostatic closures), ``kinetic`` (semi-Lagrangian
Vlasov solver and moments), ``fluid`` (limit systems), ``entropy`` (energy
and modulated-energy ledgers, stability budgets), ``gyro`` (rotation
filtering and Fourier correctors), ``scaling`` (nondimensionalization) and
``harness`` (presets, sweeps, rate fits, CSV/plots).
"""

__version__ = "0.1.0"
