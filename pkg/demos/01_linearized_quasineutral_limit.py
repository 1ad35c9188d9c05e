"""Quasineutral limit of the linearized closure, at a glance.

A cold-ion kinetic run on the torus is compared against the shallow-water
limit system for a few Debye parameters.  The modulated energy H(t) starts
at ~Ti/2 = sqrt(eps)/2 (the data are well prepared) and stays at that
scale, so max_t H shrinks like sqrt(eps) -- the convergence mechanism of
the whole laboratory in miniature.

Run:  python3 demos/01_linearized_quasineutral_limit.py
"""

import numpy as np

from qnlab.harness import ExperimentConfig, emit_plots, run_preset

cfg = ExperimentConfig.preset("l-sweep")
# desk-sized version of the acceptance preset: coarser grid, shorter run
cfg.epsilon = [1e-1, 1e-2, 1e-3]
cfg.kinetic.update(nx=128, nv=128, dt_max=2e-3)
cfg.fluid["nx"] = 128
cfg.final_time = 0.25
cfg.outputs = 11

result = run_preset(cfg, csv_path="demo01.csv")

print("eps        H(0)        max_t H     H(T)        slack(T)")
for eps in cfg.epsilon:
    h = result.series(eps, "total")
    slack = result.extras[eps]["budget"].slack
    print(f"{eps:<9.0e}  {h[0]:<10.4g}  {h.max():<10.4g}  {h[-1]:<10.4g}  {slack:+.2e}")

print("\nsqrt(eps)/2 for comparison:",
      "  ".join(f"{np.sqrt(e)/2:.4g}" for e in cfg.epsilon))
print("\nfigures:", ", ".join(emit_plots(result, "demo01_plots")))
