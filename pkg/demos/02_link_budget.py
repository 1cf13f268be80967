"""Closed-form budget of a fiber link with a frequency converter and a memory."""

from tpcomb.channel import (FiberSpec, MemorySpec, converter_passband_modes, dispersion_broadening,
                            fiber_transmittance, memory_coupling, wc_efficiency)
from tpcomb.config import channel_budget, load_preset
from tpcomb.source import degenerate_linewidth

cfg = load_preset("wc_20km")

# 10 km of standard fiber per arm
f = FiberSpec(10.0)
print(f"transmittance per arm          {fiber_transmittance(f):.4f}")
print(f"broadening, 0.03 nm band       {dispersion_broadening(0.03, f):.2f} ps")
print(f"broadening, full comb          {dispersion_broadening(cfg.comb.span_nm, f) / 1e3:.2f} ns")

# Converter at its operating pump power
c = cfg.converter
print(f"external efficiency @ {c.pump_mw:g} mW   {wc_efficiency(c.pump_mw, c, external=True):.4f}")
print(f"modes inside the passband      {converter_passband_modes(cfg.comb, c)}")

# A 4.6 MHz memory window against the photon line
gamma = degenerate_linewidth(cfg.comb.cavity_linewidth_mhz)
print(f"memory coupling                {memory_coupling(gamma, MemorySpec(4.6)):.4f}")

# The same numbers as a nested table (what the link-budget command prints)
budget = channel_budget(cfg)
for arm, row in budget["arms"].items():
    print(arm, {k: round(v, 4) for k, v in row.items()})
print(f"expected coincidences {budget['expected_coincidence_cps']:.3g} cps")
