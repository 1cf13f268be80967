"""Cross-correlation after conversion and 20 km of fiber.

Converter noise dominates the singles here, which pulls g2(0) down to a few.
The full preset integrates 10^4 s (about half a minute).  A shorter duration
can be passed for a quick look, but g2(0) is the brightest bin over the mean
floor, so sparse peaks read high.
"""

import sys

from tpcomb.analysis import g2_zero
from tpcomb.config import load_preset
from tpcomb.mc_sim import expected_histogram, link_rates, simulate_histogram
from tpcomb.source import round_trip_time

cfg = load_preset("wc_20km")
duration = float(sys.argv[1]) if len(sys.argv) > 1 else cfg.duration_s
link = link_rates(cfg)
print(f"singles {link.singles_cps(0):.0f} / {link.singles_cps(1):.0f} cps, "
      f"coincidences {link.coincidence_cps:.2f} cps")

t_fsr = round_trip_time(cfg.comb.fsr_mhz)
mean = expected_histogram(cfg, duration)
print(f"expected peak/floor ratio {mean.max() / mean[:50].mean():.2f}")

h = simulate_histogram(cfg, cfg.seed, duration, workers=2)
g2 = g2_zero(h, t_fsr_ns=t_fsr)
print(f"simulated g2(0) over {duration:g} s: {g2.g2_zero:.2f} +/- {g2.g2_std:.2f}")
