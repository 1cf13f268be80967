"""How detector dead time shapes the start-stop accidental floor.

At 10 mW the singles approach 10^7 cps.  Without dead time the chance of an
earlier stop depletes the floor exponentially across the window; with an 80 ns
dead time the first 80 ns after the window opens stay flat.
"""

import dataclasses

import numpy as np

from tpcomb.analysis import dead_time_zone
from tpcomb.config import load_preset
from tpcomb.mc_sim import expected_accidentals, link_rates, simulate_histogram

cfg = load_preset("dead_time_10mw")
link = link_rates(cfg)
r = link.singles_cps(0)
print(f"singles {r:.3g} cps per detector")

for dead in (80.0, 0.0):
    c = cfg.replace(detectors=tuple(dataclasses.replace(d, dead_time_ns=dead) for d in cfg.detectors))
    h = simulate_histogram(c, seed=7, duration_s=0.02)
    lo, hi = dead_time_zone(h, 80.0)
    sel = (h.tau_ns > lo) & (h.tau_ns < hi - 1.0) & (np.abs(h.tau_ns % 8.62 - 4.31) > 2.0)
    y = h.counts[sel].astype(float)
    first, last = y[: len(y) // 4].mean(), y[-len(y) // 4:].mean()
    model = expected_accidentals(r, r, c.tcspc, 0.02, dead)
    print(f"dead time {dead:4.0f} ns: floor near window start {first:.1f}, "
          f"near zero delay {last:.1f} (model {model[0]:.1f} -> {model[len(model) // 2 - 10]:.1f})")
