"""Analytic two-photon comb: cavity geometry and the comb correlation function."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

C_LIGHT = 299_792_458.0  # m/s
FOUR_LN2 = 4.0 * math.log(2.0)
GAUSS_FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
# Transform-limited Gaussian time-bandwidth product.
GAUSS_TBP = 2.0 * math.log(2.0) / math.pi
DEGENERATE_LINEWIDTH_FACTOR = 0.64


def _positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be finite and positive, got {value!r}")


@dataclass(frozen=True)
class CombSpec:
    fsr_mhz: float
    cavity_linewidth_mhz: float
    span_thz: float
    center_wavelength_nm: float

    def __post_init__(self):
        for k, v in asdict(self).items():
            _positive(k, v)
        if self.span_thz * 1e6 / self.fsr_mhz < 1:
            raise ValueError("comb span is narrower than one FSR")

    @property
    def span_nm(self) -> float:
        """Comb span expressed as a wavelength interval at the center wavelength."""
        return wavelength_from_span(self.span_thz, self.center_wavelength_nm)

    def model_params(self, c: float = 1.0, noise_floor: float = 0.0,
                     tooth_fwhm_ns: float | None = None, n_teeth: int | None = None) -> CombModelParams:
        """Correlation-function parameters implied by this cavity.

        Without an explicit tooth width the transform limit of the full span is
        used, which is far below any detector jitter.
        """
        t_fsr = round_trip_time(self.fsr_mhz)
        if tooth_fwhm_ns is None:
            tooth_fwhm_ns = GAUSS_TBP / (self.span_thz * 1e3)
        if n_teeth is None:
            n_teeth = default_n_teeth(self.cavity_linewidth_mhz, t_fsr)
        return CombModelParams(c, self.cavity_linewidth_mhz, t_fsr, tooth_fwhm_ns, n_teeth, noise_floor)


@dataclass(frozen=True)
class CombModelParams:
    """Parameters of ``c * exp(-2 pi f |tau|) * Comb(tau) + noise``."""

    c: float
    f_fwhm_mhz: float
    t_fsr_ns: float
    tooth_fwhm_ns: float
    n_teeth: int
    noise_floor: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ValueError(f"c must be >= 0, got {self.c}")
        if not (math.isfinite(self.noise_floor) and self.noise_floor >= 0):
            raise ValueError(f"noise_floor must be >= 0, got {self.noise_floor}")
        if not math.isfinite(self.f_fwhm_mhz) or self.f_fwhm_mhz < 0:
            raise ValueError(f"f_fwhm_mhz must be >= 0, got {self.f_fwhm_mhz}")
        _positive("t_fsr_ns", self.t_fsr_ns)
        _positive("tooth_fwhm_ns", self.tooth_fwhm_ns)
        if int(self.n_teeth) != self.n_teeth or self.n_teeth < 1:
            raise ValueError(f"n_teeth must be a positive integer, got {self.n_teeth}")
        object.__setattr__(self, "n_teeth", int(self.n_teeth))
        if self.tooth_fwhm_ns >= self.t_fsr_ns:
            raise ValueError("tooth_fwhm_ns must be smaller than t_fsr_ns")

    def replace(self, **kw) -> CombModelParams:
        d = asdict(self)
        d.update(kw)
        return CombModelParams(**d)

    @property
    def decay_per_ns(self) -> float:
        return 2.0 * math.pi * self.f_fwhm_mhz * 1e-3


def default_n_teeth(f_fwhm_mhz: float, t_fsr_ns: float) -> int:
    """Teeth needed for the envelope to fall below 1e-6 at the last tooth (rounded up)."""
    x = 2.0 * math.pi * f_fwhm_mhz * 1e-3 * t_fsr_ns
    return max(1, math.ceil(-math.log(1e-6) / x)) if x > 0 else 1


def comb(tau_ns, t_fsr_ns: float, tooth_fwhm_ns: float, n_teeth: int) -> np.ndarray:
    """Sum of unit-height Gaussian teeth at ``n * t_fsr`` for ``|n| <= n_teeth - 1``.

    Only teeth within reach of each sample are summed; the omitted terms are
    below 1e-20 relative.
    """
    tau = np.asarray(tau_ns, dtype=float)
    reach = math.ceil(5.0 * tooth_fwhm_ns / t_fsr_ns) + 1
    nearest = np.clip(np.rint(tau / t_fsr_ns), -(n_teeth - 1), n_teeth - 1)
    out = np.zeros(np.broadcast(tau).shape)
    for k in range(-reach, reach + 1):
        n = nearest + k
        valid = np.abs(n) <= n_teeth - 1
        x = (tau - n * t_fsr_ns) / tooth_fwhm_ns
        out += np.where(valid, np.exp(-FOUR_LN2 * x * x), 0.0)
    return out


def comb_bruteforce(tau_ns, t_fsr_ns, tooth_fwhm_ns, n_teeth):
    """Direct sum over every tooth; reference for :func:`comb`."""
    tau = np.asarray(tau_ns, dtype=float)[..., None]
    n = np.arange(-(n_teeth - 1), n_teeth)
    return np.exp(-FOUR_LN2 * ((tau - n * t_fsr_ns) / tooth_fwhm_ns) ** 2).sum(axis=-1)


def g2_analytic(tau_ns, p: CombModelParams):
    """Comb correlation ``c * exp(-2 pi f |tau|) * Comb(tau) + noise`` (tau in ns)."""
    tau = np.asarray(tau_ns, dtype=float)
    env = np.exp(-p.decay_per_ns * np.abs(tau))
    val = p.c * env * comb(tau, p.t_fsr_ns, p.tooth_fwhm_ns, p.n_teeth) + p.noise_floor
    return float(val) if val.ndim == 0 else val


def tooth_weights(p: CombModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Tooth indices and their normalized envelope weights."""
    n = np.arange(-(p.n_teeth - 1), p.n_teeth)
    w = np.exp(-p.decay_per_ns * np.abs(n) * p.t_fsr_ns)
    return n, w / w.sum()


def round_trip_time(fsr_mhz: float) -> float:
    """Cavity round-trip time in ns."""
    _positive("fsr_mhz", fsr_mhz)
    return 1e3 / fsr_mhz


def degenerate_linewidth(cavity_linewidth_mhz: float) -> float:
    """Single-mode photon linewidth of a degenerate cavity SPDC source, in MHz."""
    _positive("cavity_linewidth_mhz", cavity_linewidth_mhz)
    return DEGENERATE_LINEWIDTH_FACTOR * cavity_linewidth_mhz


def span_from_wavelength(delta_lambda_nm: float, center_nm: float) -> float:
    """Frequency width (THz) of a wavelength interval around ``center_nm``."""
    _positive("center_nm", center_nm)
    if delta_lambda_nm < 0:
        raise ValueError("delta_lambda_nm must be >= 0")
    return C_LIGHT * (delta_lambda_nm * 1e-9) / (center_nm * 1e-9) ** 2 * 1e-12


def wavelength_from_span(span_thz: float, center_nm: float) -> float:
    """Inverse of :func:`span_from_wavelength`, in nm."""
    _positive("center_nm", center_nm)
    return span_thz * 1e12 * (center_nm * 1e-9) ** 2 / C_LIGHT * 1e9


def mode_count(spec: CombSpec) -> int:
    """Number of frequency modes in the comb span."""
    return int(round(spec.span_thz * 1e6 / spec.fsr_mhz))
