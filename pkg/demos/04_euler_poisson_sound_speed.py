"""Dispersion of the isothermal Euler-Poisson system near the limit.

A small standing wave oscillates at the phase speed
sqrt(T + 1/(1 + eps k^2)); as the Debye parameter shrinks, the measured
speed approaches sqrt(T+1) -- the quasineutral Euler sound speed, with the
electron pressure contributing the +1 even for cold ions.

Run:  python3 demos/04_euler_poisson_sound_speed.py
"""

import numpy as np

from qnlab.harness import ExperimentConfig, measure_wave_speed, run_preset

for T in (0.0, 1.0):
    print(f"ion temperature T = {T:g}")
    for eps in (1e-2, 1e-3, 1e-4):
        cfg = ExperimentConfig.preset("euler-poisson-wave")
        cfg.epsilon = [eps]
        cfg.fluid["temperature"] = T
        result = run_preset(cfg)
        ex = result.extras[eps]
        speed = measure_wave_speed(ex["wave_series"], ex["wavenumber"])
        k2 = ex["wavenumber"] ** 2
        predicted = np.sqrt(T + 1.0 / (1.0 + eps * k2))
        print(f"  eps={eps:<8.0e} measured {speed:.5f}   "
              f"dispersion relation {predicted:.5f}   limit {np.sqrt(T + 1):.5f}")
    print()
