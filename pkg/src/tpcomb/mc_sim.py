"""Seeded Monte Carlo of detection timestamps through the modeled link.

Time is integer picoseconds.  The acquisition is cut into slices of fixed
length; slice ``k`` draws from RNG streams keyed by ``(seed, k, stream)`` so
results do not depend on how the slices are scheduled.  Events are finalized
in time order across slice boundaries, dead time is applied per channel by a
sequential scan, and the histogram uses start-stop semantics: each accepted
signal event (start) is paired with the first accepted idler event (stop) at
or after ``start - H``, where ``H`` is the half range of the delay axis, and
counted if that stop lies before ``start + H``.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import ndtr

from .channel import dispersion_broadening, fiber_transmittance, passband_fraction, wc_efficiency
from .errors import ConfigError, SaturationError
from .source import GAUSS_FWHM_PER_SIGMA, CombModelParams, tooth_weights

PS_PER_S = 10**12
# Gaussian draws are truncated here so event times have a hard bound; the
# discarded tail mass is ~1e-15.
TRUNC_SIGMA = 8.0
TARGET_EVENTS_PER_SLICE = 2_000_000


@dataclass(frozen=True)
class DetectorSpec:
    efficiency: float
    jitter_fwhm_ps: float = 0.0
    dead_time_ns: float = 0.0
    dark_cps: float = 0.0
    max_rate_cps: float = 1e7

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        for name in ("jitter_fwhm_ps", "dead_time_ns", "dark_cps"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be >= 0, got {v}")
        if not self.max_rate_cps > 0:
            raise ValueError("max_rate_cps must be > 0")


@dataclass(frozen=True)
class TcspcSpec:
    """Delay axis: bins of ``bin_ps`` centered on ``k * bin_ps`` for ``|k| <= half_bins``."""

    bin_ps: float = 32.0
    window_ns: float = 500.0

    def __post_init__(self):
        if not (self.bin_ps > 0 and self.window_ns > 0):
            raise ValueError("bin_ps and window_ns must be positive")
        ratio = self.window_ns * 1e3 / self.bin_ps
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio) or round(ratio) < 1:
            raise ValueError(f"window_ns*1000/bin_ps = {ratio} is not a whole number of bins")

    @property
    def half_bins(self) -> int:
        return int(round(self.window_ns * 1e3 / self.bin_ps))

    @property
    def n_bins(self) -> int:
        return 2 * self.half_bins + 1

    @property
    def half_range_ps(self) -> float:
        return (self.half_bins + 0.5) * self.bin_ps

    @property
    def bin_centers_ps(self) -> np.ndarray:
        return np.arange(-self.half_bins, self.half_bins + 1) * self.bin_ps


@dataclass(frozen=True)
class SourceRateModel:
    """``pair_rate_per_mw`` pairs/s per mW of SPDC pump; ``intracavity_noise_coeff``
    uncorrelated photons per generated pair, per channel."""

    pair_rate_per_mw: float
    pump_mw: float
    intracavity_noise_coeff: float = 0.0

    def __post_init__(self):
        if not (self.pair_rate_per_mw > 0 and self.pump_mw > 0):
            raise ValueError("pair_rate_per_mw and pump_mw must be > 0")
        if not self.intracavity_noise_coeff >= 0:
            raise ValueError("intracavity_noise_coeff must be >= 0")

    @property
    def pair_rate_cps(self) -> float:
        return self.pair_rate_per_mw * self.pump_mw


@dataclass(frozen=True, eq=False)
class CoincidenceHistogram:
    bin_centers_ps: np.ndarray
    counts: np.ndarray
    acquisition_s: float

    def __post_init__(self):
        x = np.array(self.bin_centers_ps, dtype=float)
        y = np.array(self.counts)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("bin centers and counts must be 1-D arrays of equal length")
        if len(x) < 2:
            raise ValueError("histogram needs at least two bins")
        d = np.diff(x)
        if np.any(d <= 0):
            raise ValueError("bin centers must be strictly increasing")
        if np.max(np.abs(d - d[0])) > 1e-6 * d[0]:
            raise ValueError("bin centers must be uniformly spaced")
        if np.any(y < 0):
            raise ValueError("counts must be nonnegative")
        if not self.acquisition_s > 0:
            raise ValueError("acquisition_s must be > 0")
        if np.issubdtype(y.dtype, np.floating) and np.all(y == np.rint(y)):
            y = y.astype(np.int64)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "bin_centers_ps", x)
        object.__setattr__(self, "counts", y)

    @property
    def bin_ps(self) -> float:
        return float(self.bin_centers_ps[1] - self.bin_centers_ps[0])

    @property
    def tau_ns(self) -> np.ndarray:
        return self.bin_centers_ps * 1e-3

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rebin(self, factor: int) -> CoincidenceHistogram:
        """Merge groups of ``factor`` adjacent bins, dropping a ragged tail."""
        n = (len(self.counts) // factor) * factor
        c = self.counts[:n].reshape(-1, factor).sum(axis=1)
        x = self.bin_centers_ps[:n].reshape(-1, factor).mean(axis=1)
        return CoincidenceHistogram(x, c, self.acquisition_s)

    def scaled(self, k: float) -> CoincidenceHistogram:
        return CoincidenceHistogram(self.bin_centers_ps, self.counts * k, self.acquisition_s)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_center_ps", "counts"])
            for xc, yc in zip(self.bin_centers_ps, self.counts):
                w.writerow([repr(float(xc)), int(yc) if float(yc).is_integer() else repr(float(yc))])

    @classmethod
    def from_csv(cls, path, acquisition_s: float = 1.0) -> CoincidenceHistogram:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0]] != ["bin_center_ps", "counts"]:
            raise ConfigError("header must be 'bin_center_ps,counts'", path=str(path))
        try:
            data = np.array([[float(a), float(b)] for a, b in rows[1:]], dtype=float)
        except ValueError as exc:
            raise ConfigError(f"malformed row: {exc}", path=str(path)) from None
        return cls(data[:, 0], data[:, 1], acquisition_s)


@dataclass(frozen=True)
class LinkRates:
    """Per-channel rates and broadening implied by a scenario (index 0 = signal)."""

    pair_rate_cps: float
    pair_gate: float
    single_gate: float
    survival: tuple[float, float]
    uncorrelated_cps: float
    background_cps: tuple[float, float]
    jitter_fwhm_ps: tuple[float, float]
    dispersion_fwhm_ps: tuple[float, float]
    dead_time_ps: tuple[float, float]
    comb: CombModelParams

    @property
    def coincidence_cps(self) -> float:
        """Rate of pairs with both photons detected (before dead time)."""
        return self.pair_rate_cps * self.pair_gate * self.survival[0] * self.survival[1]

    def singles_cps(self, ch: int) -> float:
        return (self.pair_rate_cps * self.pair_gate * self.survival[ch]
                + self.uncorrelated_cps * self.single_gate * self.survival[ch]
                + self.background_cps[ch])

    @property
    def delay_sigma_ps(self) -> float:
        """Width of one tooth in the detected delay distribution."""
        s_tooth = self.comb.tooth_fwhm_ns * 1e3 / GAUSS_FWHM_PER_SIGMA
        s_j = np.hypot(*self.jitter_fwhm_ps) / GAUSS_FWHM_PER_SIGMA
        s_d = (self.dispersion_fwhm_ps[0] + self.dispersion_fwhm_ps[1]) / GAUSS_FWHM_PER_SIGMA
        return float(np.sqrt(s_tooth**2 + s_j**2 + s_d**2))

    @property
    def max_offset_ps(self) -> float:
        """Bound on ``|detection time - emission time|`` for any event."""
        comb_reach = (self.comb.n_teeth - 1) * self.comb.t_fsr_ns * 1e3
        s = [self.comb.tooth_fwhm_ns * 1e3, *self.jitter_fwhm_ps, *self.dispersion_fwhm_ps]
        return comb_reach + TRUNC_SIGMA * sum(s) / GAUSS_FWHM_PER_SIGMA + 2.0


def link_rates(scenario) -> LinkRates:
    """Fold source, fiber, converter and detectors into per-channel rates.

    With a converter, a pair passes only if its (anticorrelated) detunings fall
    in the passband and both photons are V polarized; uncorrelated photons pass
    with the single-photon versions of the same gates.  Converter noise photons
    reach each detector and are counted with its efficiency.
    """
    rate = scenario.rate
    dets = scenario.detectors
    fibers = (scenario.fiber_signal, scenario.fiber_idler)
    conv = scenario.converter
    trans = [fiber_transmittance(f) if f is not None else 1.0 for f in fibers]
    if conv is not None:
        eta_ext = wc_efficiency(conv.pump_mw, conv, external=True)
        v_pop = abs(complex(scenario.state.amplitudes[3])) ** 2
        frac = passband_fraction(scenario.comb, conv)
        pair_gate = frac * v_pop
        single_gate = frac * v_pop
        conv_noise = conv.noise_quadratic_coeff * conv.pump_mw**2 * 1e3
        dlam = conv.bandwidth_nm
    else:
        eta_ext, pair_gate, single_gate, conv_noise = 1.0, 1.0, 1.0, 0.0
        dlam = scenario.comb.span_nm
    survival = tuple(float(t * eta_ext * d.efficiency) for t, d in zip(trans, dets))
    background = tuple(float(d.dark_cps + conv_noise * d.efficiency) for d in dets)
    disp = tuple(float(dispersion_broadening(dlam, f)) if f is not None else 0.0 for f in fibers)
    return LinkRates(
        pair_rate_cps=rate.pair_rate_cps,
        pair_gate=float(pair_gate),
        single_gate=float(single_gate),
        survival=survival,
        uncorrelated_cps=rate.pair_rate_cps * rate.intracavity_noise_coeff,
        background_cps=background,
        jitter_fwhm_ps=tuple(float(d.jitter_fwhm_ps) for d in dets),
        dispersion_fwhm_ps=disp,
        dead_time_ps=tuple(float(d.dead_time_ns * 1e3) for d in dets),
        comb=scenario.source_params(),
    )


def check_saturation(scenario, link: LinkRates | None = None) -> None:
    link = link or link_rates(scenario)
    for ch, det in enumerate(scenario.detectors):
        r = link.singles_cps(ch)
        if r > det.max_rate_cps:
            name = ("signal", "idler")[ch]
            raise SaturationError(
                f"expected {name} singles rate {r:.4g} cps exceeds detector limit {det.max_rate_cps:.4g} cps")


def default_slice_s(link: LinkRates) -> float:
    total = link.singles_cps(0) + link.singles_cps(1)
    s = TARGET_EVENTS_PER_SLICE / max(total, 1.0)
    return float(min(max(s, 1e-3), 1e3))


def _rng(seed: int, k: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k, stream))))


def _tnormal(rng, n):
    return np.clip(rng.standard_normal(n), -TRUNC_SIGMA, TRUNC_SIGMA)


def _generate_slice(link: LinkRates, seed: int, k: int, t0_ps: int, t1_ps: int,
                    pairing: bool) -> tuple[np.ndarray, np.ndarray]:
    """Raw (pre-dead-time) sorted detection times for emissions in [t0, t1)."""
    dt_s = (t1_ps - t0_ps) / PS_PER_S
    span = float(t1_ps - t0_ps)
    rp, rs, ri = _rng(seed, k, 0), _rng(seed, k, 1), _rng(seed, k, 2)
    ps_, pi_ = link.survival
    base = link.pair_rate_cps * link.pair_gate * dt_s
    n_both = rp.poisson(base * ps_ * pi_)
    n_s_only = rp.poisson(base * ps_ * (1.0 - pi_))
    n_i_only = rp.poisson(base * (1.0 - ps_) * pi_)
    if not pairing:
        n_s_only += n_both
        n_i_only += n_both
        n_both = 0

    emit = t0_ps + rp.random(n_both) * span
    teeth, w = tooth_weights(link.comb)
    idx = np.searchsorted(np.cumsum(w), rp.random(n_both), side="right")
    idx = np.minimum(idx, len(teeth) - 1)
    t_fsr_ps = link.comb.t_fsr_ns * 1e3
    s_tooth = link.comb.tooth_fwhm_ns * 1e3 / GAUSS_FWHM_PER_SIGMA
    tau = teeth[idx] * t_fsr_ps + s_tooth * _tnormal(rp, n_both)
    # One detuning per pair; signal and idler sit on opposite sides of degeneracy.
    detune = _tnormal(rp, n_both)
    ds, di = (f / GAUSS_FWHM_PER_SIGMA for f in link.dispersion_fwhm_ps)
    js, ji = (f / GAUSS_FWHM_PER_SIGMA for f in link.jitter_fwhm_ps)

    sig_pair = emit + ds * detune + js * _tnormal(rs, n_both)
    idl_pair = emit + tau - di * detune + ji * _tnormal(ri, n_both)

    out = []
    for ch, (rng, paired, n_only, sj) in enumerate(
            ((rs, sig_pair, n_s_only, js), (ri, idl_pair, n_i_only, ji))):
        n_bg = rng.poisson((link.uncorrelated_cps * link.single_gate * link.survival[ch]
                            + link.background_cps[ch]) * dt_s)
        lone = t0_ps + rng.random(n_only + n_bg) * span
        lone += sj * _tnormal(rng, n_only + n_bg)
        t = np.rint(np.concatenate([paired, lone])).astype(np.int64)
        t.sort()
        out.append(t)
    return out[0], out[1]


@njit(cache=True)
def _dead_time_mask(t, dead_ps, last):
    keep = np.zeros(t.shape[0], dtype=np.bool_)
    for i in range(t.shape[0]):
        if t[i] - last >= dead_ps:
            keep[i] = True
            last = t[i]
    return keep, last


def apply_dead_time(times_ps: np.ndarray, dead_time_ps: float, last_ps: float = -np.inf):
    """Non-paralyzable dead time on a sorted stream; returns (accepted, last accepted time)."""
    if dead_time_ps <= 0 or len(times_ps) == 0:
        return times_ps, (float(times_ps[-1]) if len(times_ps) else last_ps)
    keep, last = _dead_time_mask(times_ps, float(dead_time_ps), float(last_ps))
    return times_ps[keep], last


def _iter_slices(link, seed, n_slices, slice_ps, pairing, workers):
    def job(k):
        return _generate_slice(link, seed, k, k * slice_ps, (k + 1) * slice_ps, pairing)

    if workers <= 1:
        for k in range(n_slices):
            yield job(k)
        return
    with ThreadPoolExecutor(max_workers=workers) as ex:
        batch = 2 * workers
        for start in range(0, n_slices, batch):
            yield from ex.map(job, range(start, min(start + batch, n_slices)))


def iter_detections(scenario, seed: int, duration_s: float, *, pairing: bool = True,
                    slice_s: float | None = None, workers: int = 1) -> Iterator[tuple]:
    """Yield ``(signal, idler, frontier_ps)`` chunks of accepted, time-ordered events.

    Every accepted event earlier than ``frontier_ps`` has been yielded once the
    chunk is produced; the final chunk has ``frontier_ps = inf``.
    """
    if not duration_s > 0:
        raise ValueError("duration_s must be > 0")
    link = link_rates(scenario)
    check_saturation(scenario, link)
    slice_s = slice_s or default_slice_s(link)
    slice_ps = int(round(slice_s * PS_PER_S))
    dur_ps = int(round(duration_s * PS_PER_S))
    n_slices = max(1, -(-dur_ps // slice_ps))
    guard = int(math.ceil(link.max_offset_ps))
    if guard >= slice_ps:
        raise ConfigError(f"slice of {slice_s} s is shorter than the event spread")

    pending = [np.empty(0, np.int64), np.empty(0, np.int64)]
    last = [-np.inf, -np.inf]
    for k, raw in enumerate(_iter_slices(link, seed, n_slices, slice_ps, pairing, workers)):
        final = k == n_slices - 1
        cutoff = np.inf if final else (k + 1) * slice_ps - guard
        chunk = []
        for ch in (0, 1):
            merged = np.concatenate([pending[ch], raw[ch]])
            merged.sort(kind="stable")
            split = len(merged) if final else int(np.searchsorted(merged, cutoff, side="left"))
            ready, pending[ch] = merged[:split], merged[split:]
            ready = ready[(ready >= 0) & (ready < dur_ps)]
            acc, last[ch] = apply_dead_time(ready, link.dead_time_ps[ch], last[ch])
            chunk.append(acc)
        yield chunk[0], chunk[1], cutoff


def simulate_stream(scenario, seed: int, duration_s: float, *, pairing: bool = True,
                    slice_s: float | None = None, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Accepted signal and idler timestamps (sorted int64 ps) over ``[0, duration)``."""
    sig, idl = [], []
    for s, i, _ in iter_detections(scenario, seed, duration_s, pairing=pairing,
                                   slice_s=slice_s, workers=workers):
        sig.append(s)
        idl.append(i)
    return np.concatenate(sig), np.concatenate(idl)


def _start_stop_bins(starts, stops, t: TcspcSpec):
    h = t.half_range_ps
    j = np.searchsorted(stops, starts - h, side="left")
    ok = j < len(stops)
    tau = stops[np.minimum(j, len(stops) - 1)] - starts
    ok &= tau < h
    b = np.floor((tau[ok] + h) / t.bin_ps).astype(np.int64)
    b = b[(b >= 0) & (b < t.n_bins)]
    return np.bincount(b, minlength=t.n_bins)


def histogram_coincidences(signal, idler, t: TcspcSpec, acquisition_s: float = 1.0) -> CoincidenceHistogram:
    """Start-stop delay histogram of idler relative to signal."""
    signal = np.asarray(signal, dtype=np.int64)
    idler = np.asarray(idler, dtype=np.int64)
    if len(signal) == 0 or len(idler) == 0:
        counts = np.zeros(t.n_bins, dtype=np.int64)
    else:
        counts = _start_stop_bins(signal, idler, t)
    return CoincidenceHistogram(t.bin_centers_ps, counts, acquisition_s)


def simulate_histogram(scenario, seed: int, duration_s: float, *, pairing: bool = True,
                       slice_s: float | None = None, workers: int = 1) -> CoincidenceHistogram:
    """Streaming equivalent of ``histogram_coincidences(*simulate_stream(...))``.

    Memory stays bounded by one slice, so long acquisitions are practical.
    """
    t = scenario.tcspc
    h = t.half_range_ps
    counts = np.zeros(t.n_bins, dtype=np.int64)
    starts = np.empty(0, np.int64)
    stops = np.empty(0, np.int64)
    for s, i, frontier in iter_detections(scenario, seed, duration_s, pairing=pairing,
                                          slice_s=slice_s, workers=workers):
        starts = np.concatenate([starts, s])
        stops = np.concatenate([stops, i])
        n_ready = len(starts) if frontier == np.inf else int(np.searchsorted(starts, frontier - h, side="right"))
        if n_ready and len(stops):
            counts += _start_stop_bins(starts[:n_ready], stops, t)
        starts = starts[n_ready:]
        if len(starts):
            stops = stops[np.searchsorted(stops, starts[0] - h, side="left"):]
        elif len(stops) and frontier != np.inf:
            stops = stops[np.searchsorted(stops, frontier - 2 * h, side="left"):]
    return CoincidenceHistogram(t.bin_centers_ps, counts, duration_s)


def expected_histogram(scenario, duration_s: float) -> np.ndarray:
    """Analytic mean counts per bin in the low-rate limit.

    True coincidences follow the comb tooth weights convolved with the total
    Gaussian delay spread; accidentals are ``s1 * s2 * bin * T``.  Start-stop
    depletion and dead time are ignored, so use it where ``rate * window << 1``.
    """
    link = link_rates(scenario)
    t = scenario.tcspc
    edges = np.arange(-t.half_bins - 0.5, t.half_bins + 1.0) * t.bin_ps
    teeth, w = tooth_weights(link.comb)
    centers = teeth * link.comb.t_fsr_ns * 1e3
    s = link.delay_sigma_ps
    near = np.abs(centers) <= t.half_range_ps + 10 * s
    cdf = ndtr((edges[None, :] - centers[near, None]) / s)
    prob = (w[near, None] * np.diff(cdf, axis=1)).sum(axis=0)
    acc = link.singles_cps(0) * link.singles_cps(1) * t.bin_ps * 1e-12
    return duration_s * (link.coincidence_cps * prob + acc)


def expected_accidentals(rate_start_cps: float, rate_stop_cps: float, t: TcspcSpec,
                         duration_s: float, dead_time_ns: float = 0.0) -> np.ndarray:
    """Mean start-stop counts per bin for two independent Poisson streams.

    With non-paralyzable dead time ``d`` the accepted stops form a renewal
    process with intervals ``d + Exp(rate)``; the first stop after a random
    instant then has density ``r`` for lags below ``d`` and
    ``r exp(-rate (lag - d))`` beyond, with ``r = rate / (1 + rate d)``.
    """
    d = dead_time_ns * 1e-9
    lam = rate_stop_cps
    r_start = rate_start_cps / (1.0 + rate_start_cps * d)
    r_stop = lam / (1.0 + lam * d)
    edges = (np.arange(-t.half_bins - 0.5, t.half_bins + 1.0) * t.bin_ps + t.half_range_ps) * 1e-12

    def cum(x):
        # integral of the forward-recurrence density from 0 to x
        flat = r_stop * np.minimum(x, d)
        tail = np.where(x > d, r_stop / lam * (1.0 - np.exp(-lam * (x - d))), 0.0)
        return flat + tail

    return r_start * duration_s * np.diff(cum(edges))


def simulate_tomography_counts(rho, n0: float, acquisition_s: float, seed: int):
    """Poisson counts with mean ``n0 * Tr[rho P_k] * acquisition_s`` for the 16 bases."""
    from .tomography import predicted_counts, TomographyCounts

    mean = predicted_counts(rho, n0, acquisition_s)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    counts = rng.poisson(np.clip(mean.counts, 0, None))
    return TomographyCounts(mean.labels, counts, mean.acquisition_s)


def write_timestamps_csv(path, signal, idler) -> None:
    """Write ``channel,timestamp_ps`` rows (channel 0 = signal, 1 = idler), time ordered."""
    ch = np.concatenate([np.zeros(len(signal), np.int64), np.ones(len(idler), np.int64)])
    ts = np.concatenate([np.asarray(signal, np.int64), np.asarray(idler, np.int64)])
    order = np.lexsort((ch, ts))
    with open(path, "w") as fh:
        fh.write("channel,timestamp_ps\n")
        np.savetxt(fh, np.column_stack([ch[order], ts[order]]), fmt="%d", delimiter=",")


def read_timestamps_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "channel,timestamp_ps":
            raise ConfigError("header must be 'channel,timestamp_ps'", path=str(path))
        data = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
    if data.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    ch, ts = data[:, 0], data[:, 1]
    return np.sort(ts[ch == 0]), np.sort(ts[ch == 1])
