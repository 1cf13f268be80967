"""The two-photon comb emitted by a doubly resonant SPDC cavity.

Walks through the cavity geometry, the comb correlation function and the
linewidths that follow from it.
"""

import numpy as np

from tpcomb.source import (CombSpec, degenerate_linewidth, g2_analytic, mode_count,
                           round_trip_time, span_from_wavelength)

# Cavity with a 116 MHz free spectral range and 0.95 MHz linewidth, emitting
# around 1514 nm over a 13 nm wide phase-matching band.
span = span_from_wavelength(13.0, 1514.0)
spec = CombSpec(fsr_mhz=116.0, cavity_linewidth_mhz=0.95, span_thz=span,
                center_wavelength_nm=1514.0)

print(f"round-trip time     {round_trip_time(spec.fsr_mhz):.4f} ns")
print(f"comb span           {spec.span_thz:.4f} THz ({spec.span_nm:.2f} nm)")
print(f"frequency modes     {mode_count(spec)}")
print(f"photon linewidth    {degenerate_linewidth(spec.cavity_linewidth_mhz):.3f} MHz")

# The correlation is a train of narrow teeth under an exponential envelope.
p = spec.model_params(tooth_fwhm_ns=0.05)
print(f"teeth per side      {p.n_teeth}")
t = np.arange(6) * p.t_fsr_ns
print("envelope at teeth  ", np.round(g2_analytic(t, p), 4))

# Half-way between teeth the correlation vanishes.
print(f"between teeth       {g2_analytic(0.5 * p.t_fsr_ns, p):.2e}")
