"""Fiber, wavelength-converter and memory-window models.

Everything here is deterministic and closed form.  Units are carried in the
argument names: mW for pump powers, kcps for converter noise rates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .source import CombSpec

H_PLANCK = 6.62607015e-34
C_LIGHT = 299_792_458.0


class MultimodalWarning(UserWarning):
    """The pump-power objective has more than one local maximum in range."""


@dataclass(frozen=True)
class FiberSpec:
    length_km: float
    loss_db_per_km: float = 0.2
    dispersion_ps_nm_km: float = 15.0

    def __post_init__(self):
        if not self.length_km >= 0:
            raise ValueError(f"length_km must be >= 0, got {self.length_km}")
        if not self.loss_db_per_km >= 0:
            raise ValueError(f"loss_db_per_km must be >= 0, got {self.loss_db_per_km}")
        if not math.isfinite(self.dispersion_ps_nm_km):
            raise ValueError("dispersion_ps_nm_km must be finite")


@dataclass(frozen=True)
class ConverterSpec:
    """Sum-frequency converter.

    ``eta_nor`` is in 1/(mW mm^2) so that ``L * sqrt(eta_nor * P)`` is in
    radians with ``L`` in mm.  ``pump_mw`` is the operating point used by the
    link simulation; the optimizers ignore it.  ``bandwidth_nm`` is the optical
    bandwidth figure used for dispersion estimates.
    """

    crystal_length_mm: float
    eta_nor: float
    coupling_telecom: float
    coupling_aux: float = 1.0
    noise_quadratic_coeff: float = 0.0
    dark_rate_kcps: float = 0.0
    bandwidth_ghz: float = 25.0
    bandwidth_nm: float = 0.03
    pump_mw: float = 50.0

    def __post_init__(self):
        for name in ("crystal_length_mm", "eta_nor", "bandwidth_ghz", "bandwidth_nm"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        for name in ("coupling_telecom", "coupling_aux"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("noise_quadratic_coeff", "dark_rate_kcps", "pump_mw"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be >= 0, got {v}")

    def replace(self, **kw) -> ConverterSpec:
        d = asdict(self)
        d.update(kw)
        return ConverterSpec(**d)

    @property
    def first_max_pump_mw(self) -> float:
        """Pump power at which the internal efficiency first reaches 1."""
        return (math.pi / (2.0 * self.crystal_length_mm)) ** 2 / self.eta_nor


@dataclass(frozen=True)
class MemorySpec:
    window_mhz: float

    def __post_init__(self):
        if not (math.isfinite(self.window_mhz) and self.window_mhz > 0):
            raise ValueError(f"window_mhz must be positive, got {self.window_mhz}")


def fiber_transmittance(f: FiberSpec) -> float:
    return 10.0 ** (-f.loss_db_per_km * f.length_km / 10.0)


def dispersion_broadening(delta_lambda_nm: float, f: FiberSpec) -> float:
    """Temporal spread in ps of a pulse with spectral width ``delta_lambda_nm``."""
    if delta_lambda_nm < 0:
        raise ValueError("delta_lambda_nm must be >= 0")
    return abs(f.dispersion_ps_nm_km) * delta_lambda_nm * f.length_km


def wc_efficiency(p_pump_mw, c: ConverterSpec, external: bool = False):
    """``sin^2(L sqrt(eta_nor P))``, times the telecom coupling when ``external``."""
    p = np.asarray(p_pump_mw, dtype=float)
    if np.any(p < 0):
        raise ValueError("pump power must be >= 0")
    eta = np.sin(c.crystal_length_mm * np.sqrt(c.eta_nor * p)) ** 2
    if external:
        eta = c.coupling_telecom * eta
    return float(eta) if eta.ndim == 0 else eta


def wc_noise(p_pump_mw, c: ConverterSpec):
    """Converter noise count rate in kcps: quadratic in pump power plus dark counts."""
    p = np.asarray(p_pump_mw, dtype=float)
    if np.any(p < 0):
        raise ValueError("pump power must be >= 0")
    n = c.noise_quadratic_coeff * p * p + c.dark_rate_kcps
    return float(n) if n.ndim == 0 else n


def eta_star(p_pump_mw, c: ConverterSpec):
    """External efficiency divided by noise rate (1/kcps)."""
    if c.dark_rate_kcps <= 0 and c.noise_quadratic_coeff == 0:
        raise ValueError("eta_star is undefined with zero noise: set dark_rate_kcps > 0")
    p = np.asarray(p_pump_mw, dtype=float)
    if np.any(p <= 0):
        raise ValueError("eta_star requires pump power > 0")
    return wc_efficiency(p, c, external=True) / wc_noise(p, c)


def nep_merit(p_pump_mw, c: ConverterSpec):
    """``eta_ext / sqrt(noise)``; maximizing it minimizes the noise-equivalent power."""
    if c.dark_rate_kcps <= 0 and c.noise_quadratic_coeff == 0:
        raise ValueError("NEP is undefined with zero noise: set dark_rate_kcps > 0")
    p = np.asarray(p_pump_mw, dtype=float)
    if np.any(p <= 0):
        raise ValueError("NEP requires pump power > 0")
    return wc_efficiency(p, c, external=True) / np.sqrt(wc_noise(p, c))


def noise_equivalent_power(p_pump_mw, c: ConverterSpec, wavelength_nm: float = 1514.0):
    """NEP in W/sqrt(Hz) referred to the telecom input: ``h nu sqrt(2 R_noise) / eta_ext``."""
    e_photon = H_PLANCK * C_LIGHT / (wavelength_nm * 1e-9)
    rate = np.asarray(wc_noise(p_pump_mw, c)) * 1e3
    with np.errstate(divide="ignore"):
        return e_photon * np.sqrt(2.0 * rate) / np.asarray(wc_efficiency(p_pump_mw, c, external=True))


OBJECTIVES = {"eta-star": eta_star, "eta_star": eta_star, "nep": nep_merit}


def optimize_pump(c: ConverterSpec, p_max_mw: float, objective: str = "eta-star",
                  grid_points: int = 2048) -> float:
    """Pump power in (0, p_max] maximizing the chosen objective.

    A coarse grid locates the global maximum, then a bounded scalar search
    refines it between the neighboring grid points.  Several local maxima in
    range (more than one sin^2 lobe) raise :class:`MultimodalWarning`.
    """
    if not p_max_mw > 0:
        raise ValueError("p_max_mw must be > 0")
    try:
        fn = OBJECTIVES[objective]
    except KeyError:
        raise ValueError(f"unknown objective {objective!r}; use 'eta-star' or 'nep'") from None

    grid = np.linspace(p_max_mw / grid_points, p_max_mw, grid_points)
    y = fn(grid, c)
    i = int(np.argmax(y))
    interior = (y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])
    n_peaks = int(interior.sum()) + int(y[-1] > y[-2])
    if n_peaks > 1:
        warnings.warn(f"objective has {n_peaks} local maxima below {p_max_mw} mW; "
                      "returning the global one", MultimodalWarning, stacklevel=2)
    lo = grid[i - 1] if i > 0 else p_max_mw * 1e-12
    hi = grid[min(i + 1, grid_points - 1)]
    if hi <= lo:
        return float(grid[i])
    res = minimize_scalar(lambda x: -fn(x, c), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-9 * p_max_mw})
    return float(res.x) if -res.fun >= y[i] else float(grid[i])


def memory_coupling(photon_linewidth_mhz: float, m: MemorySpec) -> float:
    """Fraction of a Lorentzian line (FWHM ``photon_linewidth_mhz``) inside a
    rectangular window of width ``m.window_mhz`` centered on it."""
    if not photon_linewidth_mhz > 0:
        raise ValueError("photon_linewidth_mhz must be > 0")
    return 2.0 / math.pi * math.atan(m.window_mhz / photon_linewidth_mhz)


def converter_passband_modes(spec: CombSpec, c: ConverterSpec) -> int:
    """Comb modes inside the converter passband."""
    return int(round(c.bandwidth_ghz * 1e3 / spec.fsr_mhz))


def passband_fraction(spec: CombSpec, c: ConverterSpec) -> float:
    """Fraction of the (flat) comb spectrum inside the converter passband."""
    return min(1.0, c.bandwidth_ghz / (spec.span_thz * 1e3))


def calibrate_converter(
    external_max: float = 0.560,
    coupling_telecom: float = 0.594,
    coupling_aux: float = 0.605,
    top_pump_mw: float = 200.0,
    dark_rate_kcps: float = 0.32,
    eta_star_optimum_mw: float = 7.97,
    crystal_length_mm: float = 48.0,
    bandwidth_ghz: float = 25.0,
    bandwidth_nm: float = 0.03,
    pump_mw: float = 50.0,
) -> ConverterSpec:
    """Converter whose efficiency and noise curves match a measured sweep.

    ``eta_nor`` is set so that the internal efficiency ``external_max /
    coupling_telecom`` is reached at ``top_pump_mw`` (the last point of the
    sweep, still below the first maximum).  The quadratic noise coefficient is
    then solved so that ``eta_star`` peaks at ``eta_star_optimum_mw``.
    """
    internal_max = external_max / coupling_telecom
    if not 0 < internal_max <= 1:
        raise ValueError(f"implied internal efficiency {internal_max:.4f} is outside (0, 1]")
    eta_nor = (math.asin(math.sqrt(internal_max)) / crystal_length_mm) ** 2 / top_pump_mw
    base = ConverterSpec(crystal_length_mm, eta_nor, coupling_telecom, coupling_aux, 0.0,
                         dark_rate_kcps, bandwidth_ghz, bandwidth_nm, pump_mw)
    target = eta_star_optimum_mw
    k = crystal_length_mm * math.sqrt(eta_nor)

    # d/dP [sin^2(k sqrt P) / (a P^2 + d)] = 0 is linear in a at fixed P.
    x = k * math.sqrt(target)
    ds = k * math.sin(x) * math.cos(x) / math.sqrt(target)
    s = math.sin(x) ** 2
    # ds*(a P^2 + d) - s*2 a P = 0
    a = -ds * dark_rate_kcps / (ds * target ** 2 - 2.0 * s * target)
    if not a > 0:
        # fall back on a direct search if the stationarity condition is degenerate
        a = brentq(lambda a_: optimize_pump(base.replace(noise_quadratic_coeff=a_), 4 * target) - target,
                   1e-9, 1e3)
    return base.replace(noise_quadratic_coeff=a)
