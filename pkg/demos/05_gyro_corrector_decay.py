"""Why the strongly magnetized limit needs its Fourier corrector.

The filtered acceleration residual is evaluated on synthetic reference
fields of calibrated Sobolev regularity, with and without the
frequency-truncated corrector.  Without it the residual's H^q norm stays
order one (the fast gyration only averages it weakly); with it the norm
decays at the sharp rate s - q - 1.

Run:  python3 demos/05_gyro_corrector_decay.py
"""

import numpy as np

from qnlab.grids import SpatialGrid
from qnlab.gyro import GyroGeometry, acceleration_B, corrector, synthesize_hs_field
from qnlab.poisson import BackgroundProfile

s, q = 3.0, 1.6
grid = SpatialGrid.torus(2 * np.pi, 1024)
geom = GyroGeometry(grid, perp_axes=(0,))
x = grid.axes()[0]
bg = BackgroundProfile.from_H(grid, 0.4 * np.cos(x))
band = (0.5, 255.0)
rho = bg.d * np.exp(0.4 * synthesize_hs_field(s, 11, grid, margin=0.15, band=band))
w = np.stack([0.4 * synthesize_hs_field(s, 21 + k, grid, margin=0.15, band=band)
              for k in range(3)])

eps_list = [2.0 ** (-k) for k in range(3, 8)]
with_c, without_c = [], []
print("eps         ||B(X_eps)||_Hq   without corrector   ||z||_H(q+1)")
for eps in eps_list:
    B = acceleration_B(rho, w, bg, eps, 0.7, geom)
    B0 = acceleration_B(rho, w, bg, eps, 0.7, geom, use_corrector=False)
    z = corrector(rho, w, bg, eps, 0.7, geom)
    with_c.append(B.norm_hq(q))
    without_c.append(B0.norm_hq(q))
    print(f"{eps:<10.4g}  {with_c[-1]:<16.4e}  {without_c[-1]:<18.4e}  "
          f"{z.sobolev_norm(q + 1):.4e}")

fit = np.polyfit(np.log(eps_list), np.log(with_c), 1)[0]
fit0 = np.polyfit(np.log(eps_list), np.log(without_c), 1)[0]
print(f"\nfitted decay slope with corrector: {fit:.3f} "
      f"(sharp rate s - q - 1 = {s - q - 1:.1f})")
print(f"fitted slope without corrector:    {fit0:.3f} (no decay)")
