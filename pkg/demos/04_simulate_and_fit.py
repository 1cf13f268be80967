"""Simulate the low-power source scenario and recover its parameters.

A 60 s acquisition at 10 uW pump, analyzed the way a measured histogram would be.
"""

from tpcomb.analysis import fit_comb, g2_zero, initial_guess, linewidth_fit
from tpcomb.config import load_preset
from tpcomb.mc_sim import link_rates, simulate_histogram

cfg = load_preset("paper_default")
link = link_rates(cfg)
print(f"singles {link.singles_cps(0):.0f} cps, true coincidences {link.coincidence_cps:.1f} cps")

h = simulate_histogram(cfg, seed=cfg.seed, duration_s=cfg.duration_s)
print(f"{h.total} coincidences in {len(h.counts)} bins of {h.bin_ps:g} ps")

g2 = g2_zero(h)
print(f"g2(0) = {g2.g2_zero:.0f} +/- {g2.g2_std:.0f}")

fit = fit_comb(h, initial_guess(h))
for name, value in fit.to_json().items():
    if name != "uncertainties":
        print(f"  {name:18s} {value}")

env = linewidth_fit(h, t_fsr_ns=fit.params.t_fsr_ns)
print(f"envelope linewidth {env.f_fwhm_mhz:.3f} +/- {env.f_std_mhz:.3f} MHz "
      f"from {env.teeth_used} teeth (cavity value {cfg.comb.cavity_linewidth_mhz})")
