"""Headline quantities from coincidence histograms.

Delays are in ns at the API boundary unless a name says ``_ps``.  Count
models are bin-integrated: a tooth narrower than a bin is compared with
what the bin actually collects, not with the curve at its center.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.signal import find_peaks
from scipy.special import erf

from .channel import FiberSpec
from .errors import AnalysisError
from .mc_sim import CoincidenceHistogram
from .source import FOUR_LN2, CombModelParams, default_n_teeth, span_from_wavelength

FIT_NAMES = ("c", "f_fwhm_mhz", "t_fsr_ns", "tooth_fwhm_ns", "noise_floor")


class DeadTimeZoneWarning(UserWarning):
    """The noise region overlaps the delay range flattened by dead time."""


@dataclass(frozen=True)
class G2Result:
    g2_zero: float
    peak_counts: float
    noise_mean: float
    noise_std: float
    g2_std: float
    peak_delay_ps: float = 0.0
    noise_bins: int = 0

    def to_json(self) -> dict:
        return {
            "g2_zero": self.g2_zero,
            "g2_std": self.g2_std,
            "peak_counts": self.peak_counts,
            "noise_mean_counts": self.noise_mean,
            "noise_std_counts": self.noise_std,
            "peak_delay_ps": self.peak_delay_ps,
            "noise_bins": self.noise_bins,
        }


@dataclass(frozen=True)
class CombFitResult:
    params: CombModelParams
    uncertainties: dict
    residual_rms: float
    converged: bool
    n_eval: int = 0
    message: str = ""
    integrate_bins: bool = True
    bin_ps: float = 0.0

    def model(self, tau_ns) -> np.ndarray:
        """Fitted mean counts per bin at ``tau_ns``."""
        if self.integrate_bins:
            return comb_binned(tau_ns, self.params, self.bin_ps * 1e-3)
        from .source import g2_analytic
        return np.asarray(g2_analytic(tau_ns, self.params))

    def to_json(self) -> dict:
        p = self.params
        out = {
            "c_counts": p.c,
            "f_fwhm_mhz": p.f_fwhm_mhz,
            "t_fsr_ns": p.t_fsr_ns,
            "tooth_fwhm_ns": p.tooth_fwhm_ns,
            "noise_floor_counts": p.noise_floor,
            "n_teeth": p.n_teeth,
            "residual_rms": self.residual_rms,
            "converged": self.converged,
        }
        unit = {"c": "c_counts", "noise_floor": "noise_floor_counts"}
        out["uncertainties"] = {unit.get(k, k): v for k, v in self.uncertainties.items()}
        return out


@dataclass(frozen=True)
class EnvelopeFit:
    f_fwhm_mhz: float
    f_std_mhz: float
    amplitude: float
    teeth_used: int
    tooth_delays_ns: np.ndarray = field(repr=False)
    tooth_net_counts: np.ndarray = field(repr=False)


def comb_binned(tau_ns, p: CombModelParams, bin_ns: float) -> np.ndarray:
    """Mean of the comb correlation over bins of width ``bin_ns`` centered at ``tau_ns``.

    The envelope is taken at the bin center; it changes by far less than a
    part in 10^3 across one bin for any resolvable comb.
    """
    tau = np.asarray(tau_ns, dtype=float)
    s = p.tooth_fwhm_ns / math.sqrt(FOUR_LN2)  # exp(-(x/s)^2) form
    reach = math.ceil((5.0 * p.tooth_fwhm_ns + bin_ns) / p.t_fsr_ns) + 1
    nearest = np.clip(np.rint(tau / p.t_fsr_ns), -(p.n_teeth - 1), p.n_teeth - 1)
    acc = np.zeros_like(tau)
    for k in range(-reach, reach + 1):
        n = nearest + k
        valid = np.abs(n) <= p.n_teeth - 1
        x = tau - n * p.t_fsr_ns
        seg = erf((x + 0.5 * bin_ns) / s) - erf((x - 0.5 * bin_ns) / s)
        acc += np.where(valid, seg, 0.0)
    acc *= 0.5 * math.sqrt(math.pi) * s / bin_ns
    return p.c * np.exp(-p.decay_per_ns * np.abs(tau)) * acc + p.noise_floor


def gap_noise_region(t_fsr_ns: float, n_gaps: int = 3, side: int = 1) -> list[tuple[float, float]]:
    """Intervals of half-width ``t_fsr/4`` centered midway between teeth.

    ``side=+1`` takes gaps at positive delay, which avoids the dead-time
    flattened zone on the negative side.
    """
    if side not in (1, -1):
        raise ValueError("side must be +1 or -1")
    out = []
    for k in range(n_gaps):
        mid = side * (k + 0.5) * t_fsr_ns
        out.append((mid - 0.25 * t_fsr_ns, mid + 0.25 * t_fsr_ns))
    return sorted(out)


def _mask(tau_ns, intervals):
    m = np.zeros(len(tau_ns), dtype=bool)
    for lo, hi in intervals:
        m |= (tau_ns >= lo) & (tau_ns <= hi)
    return m


def dead_time_zone(h: CoincidenceHistogram, dead_time_ns: float) -> tuple[float, float]:
    """Delay range with a flat floor under start-stop counting: the first
    ``dead_time`` after the start of the histogram range."""
    lo = float(h.tau_ns[0] - 0.5 * h.bin_ps * 1e-3)
    return lo, lo + dead_time_ns


def g2_zero(h: CoincidenceHistogram, peak_halfwidth_ps: float | None = None,
            noise_region: list[tuple[float, float]] | None = None, *,
            t_fsr_ns: float | None = None, dead_time_ns: float | None = None) -> G2Result:
    """Highest count near zero delay over the mean noise count.

    ``noise_region`` is a list of ``(lo_ns, hi_ns)`` intervals.  By default
    three tooth gaps at positive delay are used, with the tooth spacing
    estimated from the histogram unless ``t_fsr_ns`` is given.  The peak search
    covers ``|tau| <= peak_halfwidth_ps`` (default a quarter tooth spacing).
    """
    tau = h.tau_ns
    y = np.asarray(h.counts, dtype=float)
    if noise_region is None or peak_halfwidth_ps is None:
        t_fsr_ns = t_fsr_ns or estimate_tooth_spacing(h)
    if peak_halfwidth_ps is None:
        peak_halfwidth_ps = 250.0 * t_fsr_ns
    if noise_region is None:
        noise_region = gap_noise_region(t_fsr_ns)

    center = np.abs(h.bin_centers_ps) <= peak_halfwidth_ps
    if not center.any():
        raise AnalysisError("peak region contains no bins")
    idx = np.flatnonzero(center)
    top = y[idx].max()
    cand = idx[y[idx] == top]
    i_peak = cand[np.argmin(np.abs(h.bin_centers_ps[cand]))]
    peak_tau = h.bin_centers_ps[i_peak]

    noise = _mask(tau, noise_region)
    if not noise.any():
        raise AnalysisError("noise region contains no bins")
    if np.any(noise & center):
        raise AnalysisError("noise region overlaps the peak region")
    if dead_time_ns:
        lo, hi = dead_time_zone(h, dead_time_ns)
        if any(a < hi and b > lo for a, b in noise_region):
            warnings.warn(f"noise region overlaps the dead-time flattened zone [{lo:.4g}, {hi:.4g}] ns",
                          DeadTimeZoneWarning, stacklevel=2)

    nv = y[noise]
    mean = float(nv.mean())
    if mean <= 0:
        raise AnalysisError("mean noise count is zero; g2 is undefined")
    g2 = float(top) / mean
    if top > 0:
        sig = g2 * math.sqrt(1.0 / top + 1.0 / (len(nv) * mean))
    else:
        sig = math.sqrt(1.0 / (len(nv) * mean)) * g2
    return G2Result(g2, float(top), mean, float(nv.std(ddof=1)) if len(nv) > 1 else 0.0,
                    float(sig), float(peak_tau), int(len(nv)))


def _parabolic(a, i):
    if 0 < i < len(a) - 1:
        den = a[i - 1] - 2 * a[i] + a[i + 1]
        if den < 0:
            return i + 0.5 * (a[i - 1] - a[i + 1]) / den
    return float(i)


def estimate_tooth_spacing(h: CoincidenceHistogram, min_spacing_ns: float | None = None) -> float:
    """Tooth spacing in ns from the autocorrelation of the histogram.

    The first prominent autocorrelation peak gives a coarse period; peaks at
    multiples of it are then located with parabolic interpolation and fitted
    through the origin.
    """
    y = np.asarray(h.counts, dtype=float)
    y = y - y.mean()
    n = len(y)
    spec = np.fft.rfft(y, 2 * n)
    ac = np.fft.irfft(spec * np.conj(spec))[:n]
    if ac[0] <= 0 or n < 8:
        raise AnalysisError("histogram has no structure to estimate a tooth spacing")
    b = h.bin_ps * 1e-3
    lim = n // 2
    if min_spacing_ns is None:
        # skip the zero-lag Poisson spike and the central lobe of one tooth
        i0 = 1
        while i0 < lim - 1 and ac[i0] > 0.5 * ac[1]:
            i0 += 1
    else:
        i0 = max(1, int(min_spacing_ns / b))
    if i0 >= lim - 2:
        raise AnalysisError("no periodic structure found")
    w = max(1, i0 // 2)
    smooth = np.convolve(ac, np.ones(2 * w + 1) / (2 * w + 1), mode="same")
    peaks, props = find_peaks(smooth[:lim], prominence=0.0)
    keep = peaks >= i0
    peaks, prom = peaks[keep], props["prominences"][keep]
    if len(peaks) == 0 or prom.max() <= 0:
        raise AnalysisError("autocorrelation shows no clear tooth period")
    strong = peaks[prom >= 0.3 * prom.max()]
    period = float(strong[0])
    ks, pos = [], []
    for m in range(1, int(lim / period) + 1):
        c = int(round(m * period))
        hw = max(1, int(period / 4))
        lo, hi = max(1, c - hw), min(lim, c + hw + 1)
        if hi - lo < 3:
            break
        j = lo + int(np.argmax(smooth[lo:hi]))
        ks.append(m)
        pos.append(_parabolic(smooth, j))
        period = pos[-1] / m
    ks, pos = np.array(ks, float), np.array(pos)
    return float(np.dot(ks, pos) / np.dot(ks, ks) * b)


def _tooth_fwhm_scan(tau, y, t_fsr, floor):
    """FWHM of the tallest tooth near zero, from bins above half height."""
    win = np.abs(tau) <= 0.5 * t_fsr
    yy, tt = y[win], tau[win]
    i = int(np.argmax(yy))
    half = floor + 0.5 * (yy[i] - floor)
    lo = i
    while lo > 0 and yy[lo - 1] > half:
        lo -= 1
    hi = i
    while hi < len(yy) - 1 and yy[hi + 1] > half:
        hi += 1
    b = tt[1] - tt[0]
    return max(float(tt[hi] - tt[lo] + b), b), float(yy[i])


def initial_guess(h: CoincidenceHistogram, t_fsr_ns: float | None = None,
                  n_teeth: int | None = None) -> CombModelParams:
    """Starting point for :func:`fit_comb` derived from the histogram alone."""
    tau = h.tau_ns
    y = np.asarray(h.counts, dtype=float)
    t = t_fsr_ns or estimate_tooth_spacing(h)
    span = min(-tau[0], tau[-1])
    gaps = gap_noise_region(t, n_gaps=max(1, int(span / t) - 1), side=1)
    gaps += gap_noise_region(t, n_gaps=max(1, int(span / t) - 1), side=-1)
    floor = float(np.median(y[_mask(tau, gaps)]))
    width, top = _tooth_fwhm_scan(tau, y, t, floor)
    width = min(width, 0.8 * t)
    c = max(top - floor, 1e-9)
    try:
        f = linewidth_fit(h, t_fsr_ns=t).f_fwhm_mhz
    except AnalysisError:
        f = 1.0
    f = float(np.clip(f, 1e-3, 1e3 / t))
    # peak height of a Gaussian tooth seen through a bin
    b = h.bin_ps * 1e-3
    if width < 3 * b:
        s = width / math.sqrt(FOUR_LN2)
        c /= 0.5 * math.sqrt(math.pi) * s / b * erf(0.5 * b / s) * 2.0
    if n_teeth is None:
        n_teeth = max(default_n_teeth(f, t), int(span / t) + 2)
    return CombModelParams(c, f, t, width, n_teeth, max(floor, 0.0))


def _deviance_residuals(y, mu):
    mu = np.clip(mu, 1e-12, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0) - (y - mu)
    return np.sign(y - mu) * np.sqrt(np.clip(2.0 * term, 0.0, None))


def fit_comb(h: CoincidenceHistogram, init: CombModelParams | None = None, *,
             integrate_bins: bool = True, max_nfev: int = 400,
             tau_range_ns: tuple[float, float] | None = None) -> CombFitResult:
    """Poisson maximum-likelihood fit of the comb model (tooth count held fixed).

    Uncertainties come from the inverse Fisher matrix, scaled by the Pearson
    chi-square per degree of freedom when that exceeds one.
    """
    tau = h.tau_ns
    y = np.asarray(h.counts, dtype=float)
    if tau_range_ns is not None:
        sel = (tau >= tau_range_ns[0]) & (tau <= tau_range_ns[1])
        tau, y = tau[sel], y[sel]
    if init is None:
        init = initial_guess(h)
    if (tau[-1] - tau[0]) < 4 * init.t_fsr_ns:
        raise AnalysisError("histogram must span at least five teeth")
    b = h.bin_ps * 1e-3
    n_teeth = init.n_teeth

    def params(x):
        return CombModelParams(x[0], x[1], x[2], x[3], n_teeth, x[4])

    def model(x):
        p = params(x)
        if integrate_bins:
            return comb_binned(tau, p, b)
        from .source import g2_analytic
        return np.asarray(g2_analytic(tau, p))

    x0 = np.array([init.c, init.f_fwhm_mhz, init.t_fsr_ns, init.tooth_fwhm_ns, init.noise_floor], float)
    lo = np.array([0.0, 0.0, 0.5 * x0[2], 1e-6 * x0[2], 0.0])
    hi = np.array([np.inf, np.inf, 1.5 * x0[2], 0.95 * x0[2], np.inf])
    x0 = np.clip(x0, lo + 1e-12 * np.abs(x0), np.where(np.isfinite(hi), hi * (1 - 1e-9), np.inf))
    x0[4] = max(x0[4], 1e-6 * max(x0[0], 1.0))

    def resid(x):
        try:
            return _deviance_residuals(y, model(x))
        except ValueError:
            return np.full(len(y), 1e6)

    scale = np.maximum(np.abs(x0), np.array([1.0, 1e-2, 1e-3, 1e-3, 1e-3]))
    res = least_squares(resid, x0, bounds=(lo, hi), x_scale=scale, method="trf",
                        max_nfev=max_nfev, xtol=1e-12, ftol=1e-12, gtol=1e-12)
    x = res.x
    mu = np.clip(model(x), 1e-12, None)
    # Jacobian of the mean by central differences
    jac = np.empty((len(y), 5))
    for k in range(5):
        step = 1e-6 * max(abs(x[k]), scale[k])
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] = max(x[k] - step, lo[k])
        jac[:, k] = (model(xp) - model(xm)) / (xp[k] - xm[k])
    fisher = jac.T @ (jac / mu[:, None])
    dof = max(len(y) - 5, 1)
    pearson = float(np.sum((y - mu) ** 2 / mu) / dof)
    try:
        cov = np.linalg.pinv(fisher) * max(1.0, pearson)
        sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        sig = np.full(5, np.nan)
    rms = float(np.sqrt(np.mean(res.fun**2)))
    converged = bool(res.success) and np.isfinite(rms)
    return CombFitResult(params(x), dict(zip(FIT_NAMES, map(float, sig))), rms, converged,
                         int(res.nfev), str(res.message), integrate_bins, h.bin_ps)


def _tooth_sums(h, t_fsr_ns, halfwidth_ns):
    """Net counts in each tooth window with a local gap-based background."""
    tau = h.tau_ns
    y = np.asarray(h.counts, dtype=float)
    span = min(-tau[0], tau[-1])
    n_max = int((span - 0.5 * t_fsr_ns) / t_fsr_ns)
    gap_hw = 0.125 * t_fsr_ns
    rows = []
    for n in range(-n_max, n_max + 1):
        c = n * t_fsr_ns
        win = np.abs(tau - c) <= halfwidth_ns
        g = (np.abs(tau - (c - 0.5 * t_fsr_ns)) <= gap_hw) | (np.abs(tau - (c + 0.5 * t_fsr_ns)) <= gap_hw)
        if not win.any() or not g.any():
            continue
        gross = y[win].sum()
        bg = y[g].mean() * win.sum()
        bg_var = y[g].mean() * win.sum() ** 2 / g.sum()
        rows.append((c, gross, bg, bg_var))
    return np.array(rows)


def _tooth_window(h, t_fsr_ns):
    """Half-width of the per-tooth summing window: 1.5 tooth FWHM, within [3 bins, t_fsr/4]."""
    tau = h.tau_ns
    y = np.asarray(h.counts, dtype=float)
    b = h.bin_ps * 1e-3
    span = min(-tau[0], tau[-1])
    gaps = gap_noise_region(t_fsr_ns, n_gaps=max(1, int(span / t_fsr_ns) - 1), side=1)
    floor = float(np.mean(y[_mask(tau, gaps)]))
    width, _ = _tooth_fwhm_scan(tau, y, t_fsr_ns, floor)
    return float(min(0.25 * t_fsr_ns, max(1.5 * width, 3.0 * b)))


def linewidth_fit(h: CoincidenceHistogram, t_fsr_ns: float | None = None,
                  tooth_halfwidth_ns: float | None = None) -> EnvelopeFit:
    """Envelope decay of the per-tooth counts.

    Tooth counts are modeled as Poisson with mean ``A exp(-k |tau_n|) + B_n``
    where ``B_n`` is the local gap background.  ``k`` is left unconstrained so
    a flat comb yields a linewidth scattered about zero.
    """
    t = t_fsr_ns or estimate_tooth_spacing(h)
    hw = tooth_halfwidth_ns or _tooth_window(h, t)
    rows = _tooth_sums(h, t, hw)
    if len(rows) == 0:
        raise AnalysisError("no complete teeth inside the histogram")
    tn, gross, bg, bg_var = rows.T
    net = gross - bg
    signif = net / np.sqrt(np.maximum(gross + bg_var, 1.0))
    if np.sum(signif > 3.0) < 3:
        raise AnalysisError("fewer than 3 teeth stand above the noise")
    a = np.abs(tn)
    keep = np.ones(len(tn), dtype=bool)

    def nll(p):
        mu = np.exp(p[0] - p[1] * a) + bg
        mu = np.clip(mu, 1e-12, None)
        return np.sum(mu - gross * np.log(mu))

    pos = net > 0
    if np.sum(pos & keep) >= 2:
        k0, a0 = np.polyfit(a[pos], np.log(net[pos]), 1, w=np.sqrt(net[pos]))
        k0 = -k0
    else:
        k0, a0 = 0.0, math.log(max(net.max(), 1.0))
    res = minimize(nll, np.array([a0, k0]), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-10, "maxiter": 4000})
    res = minimize(nll, res.x, method="BFGS")
    la, k = res.x
    amp = math.exp(la)
    # Fisher information for (log A, k)
    m = amp * np.exp(-k * a)
    mu = m + bg
    d = np.vstack([m, -a * m])
    fisher = (d / mu) @ d.T
    try:
        k_std = float(math.sqrt(max(np.linalg.inv(fisher)[1, 1], 0.0)))
    except np.linalg.LinAlgError:
        k_std = float("nan")
    to_mhz = 1e3 / (2.0 * math.pi)
    return EnvelopeFit(float(k * to_mhz), k_std * to_mhz, amp, int(len(tn)), tn, net)


def linewidth_from_envelope(h: CoincidenceHistogram, t_fsr_ns: float | None = None) -> float:
    """Envelope linewidth ``k / 2 pi`` in MHz, with ``k`` the decay rate of the tooth counts."""
    return linewidth_fit(h, t_fsr_ns=t_fsr_ns).f_fwhm_mhz


def bandwidth_from_dispersion(tooth_fwhm_ns: float, intrinsic_fwhm_ns: float, f: FiberSpec,
                              center_nm: float) -> tuple[float, float]:
    """Spectral width (nm, THz) implied by dispersive tooth broadening over fiber ``f``."""
    if f.dispersion_ps_nm_km == 0 or f.length_km == 0:
        raise ValueError("fiber must have nonzero dispersion and length")
    diff = tooth_fwhm_ns**2 - intrinsic_fwhm_ns**2
    if diff < 0:
        raise ValueError("tooth width is smaller than the intrinsic width")
    dlam = math.sqrt(diff) * 1e3 / (abs(f.dispersion_ps_nm_km) * f.length_km)
    return dlam, span_from_wavelength(dlam, center_nm)


def pump_sweep_slope(points) -> float:
    """Least-squares slope of ``log(g2 - 1)`` against ``log(pump)``."""
    pts = [(float(p), float(g)) for p, g in points]
    if any(p <= 0 for p, _ in pts):
        raise ValueError("pump powers must be positive")
    kept = [(p, g) for p, g in pts if g > 1.0]
    if len(kept) < len(pts):
        warnings.warn(f"excluded {len(pts) - len(kept)} point(s) with g2 <= 1", stacklevel=2)
    if len(kept) < 3:
        raise AnalysisError("pump sweep needs at least 3 points with g2 > 1")
    x = np.log([p for p, _ in kept])
    y = np.log([g - 1.0 for _, g in kept])
    return float(np.polyfit(x, y, 1)[0])


def write_curve_csv(path, tau_ps, model_counts, header=("bin_center_ps", "model_counts")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, m in zip(tau_ps, model_counts):
            w.writerow([repr(float(t)), repr(float(m))])
