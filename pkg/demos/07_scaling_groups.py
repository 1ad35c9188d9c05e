"""From SI plasma parameters to the dimensionless groups of the models.

Two physical presets (a fusion-grade core and a laboratory glow
discharge), plus the inversion from dimensionless orderings back to
(eps, alpha).

Run:  python3 demos/07_scaling_groups.py
"""

from qnlab.scaling import from_orderings, physical_preset

for name in ("tokamak-core", "glow-discharge"):
    cfg = physical_preset(name)
    print(f"--- {name} ---")
    print(cfg.summary())
    print(f"quasineutral regime: {cfg.quasineutral}")
    print()

print("--- ordering inversion ---")
out = from_orderings(omega_tau=100.0, debye_larmor_ratio=0.1)
print(f"Omega*tau = 100, lambda_D/r_L = 0.1  =>  "
      f"eps = {out['epsilon']:g}, alpha = {out['alpha']:g}")
