"""The limit fluid systems: confinement balance and smooth evolution.

First the confined isothermal system holds its hydrostatic steady state
rho = c * exp(-H) to machine precision (the well-balanced discretization
at work), then a shallow-water ramp steepens until the gradient monitor
declares the smooth-solution window closed.

Run:  python3 demos/03_confined_fluid_limits.py
"""

import numpy as np

from qnlab.errors import ClassicalSolutionLost
from qnlab.fluid import (
    FluidState,
    euler_isothermal_step,
    gradient_blowup,
    shallow_water_step,
)
from qnlab.grids import SpatialGrid
from qnlab.poisson import BackgroundProfile

line = SpatialGrid.truncated_line(15.0, 256)
bg = BackgroundProfile.sqrt_confinement(line)
state = FluidState(line, 0.8 * bg.d, np.zeros(256))
for _ in range(200):
    state = euler_isothermal_step(state, bg, 1e-3)
print("confined hydrostatic state after 200 steps:")
print(f"  max |rho - rho0| = {np.max(np.abs(state.rho - 0.8 * bg.d)):.2e}")
print(f"  max |u|          = {np.max(np.abs(state.velocity)):.2e}")

torus = SpatialGrid.torus(1.0, 512)
x = torus.axes()[0]
ramp = FluidState(torus, 1.0 + 0.9 * np.exp(-60 * (x - 0.5) ** 2), np.zeros(512))
flat = BackgroundProfile.uniform(torus)
t, dt = 0.0, 2.5e-4
try:
    while t < 2.0:
        ramp = shallow_water_step(ramp, dt)
        gradient_blowup(ramp, flat, threshold=25.0)
        t += dt
    print(f"\nshallow-water ramp still smooth at t = {t:.3f}")
except ClassicalSolutionLost as err:
    print(f"\nshallow-water ramp: classical solution lost at t = {t:.3f} ({err})")
print("(convergence runs stop well before this point by design)")
