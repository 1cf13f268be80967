"""End-to-end acceptance checks, one test (and one printed verdict line) per criterion."""

import dataclasses
import hashlib
import json
import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import uhlmann_fidelity
from tpcomb import (BellKind, CombSpec, ConverterSpec, DensityMatrix, FiberSpec, MemorySpec,
                    bell_state, chsh_max, concurrence, degenerate_linewidth, dispersion_broadening,
                    fiber_transmittance, fidelity, fit_comb, g2_zero, linewidth_from_envelope,
                    load_preset, memory_coupling, mle_reconstruct, optimize_pump, predicted_counts,
                    pump_sweep_slope, round_trip_time, simulate_histogram,
                    simulate_tomography_counts, span_from_wavelength, wc_efficiency, werner)
from tpcomb.channel import calibrate_converter, eta_star
from tpcomb.cli import main
from tpcomb.qstate import TSIRELSON, random_density_matrix
from tpcomb.tomography import RECON_TOL, TomographyCounts


class Criterion:
    """Collects sub-checks and prints a single verdict line."""

    def __init__(self, number, title, capsys):
        self.number, self.title, self.capsys = number, title, capsys
        self.checks = []

    def check(self, label, ok, detail=""):
        self.checks.append((label, bool(ok), detail))

    def finish(self):
        failed = [c for c in self.checks if not c[1]]
        verdict = "PASS" if not failed else "FAIL"
        parts = "; ".join(f"{lab}={det}{'' if ok else ' (FAIL)'}" for lab, ok, det in self.checks)
        with self.capsys.disabled():
            print(f"\n[ACCEPTANCE {self.number}] {verdict}: {self.title} -- {parts}")
        assert not failed, "failed: " + ", ".join(c[0] for c in failed)


@pytest.fixture
def criterion(capsys):
    def make(number, title):
        return Criterion(number, title, capsys)
    return make


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def test_criterion_1_channel_closed_forms(criterion):
    cr = criterion(1, "channel closed forms")
    fib = FiberSpec(10, 0.2, 15)
    v, dt = timed(lambda: memory_coupling(5.3, MemorySpec(10)))
    cr.check("memory(5.3,10)", abs(v - 0.689) <= 0.005 and dt < 1, f"{v:.4f}")
    v, dt = timed(lambda: memory_coupling(0.61, MemorySpec(4.6)))
    cr.check("memory(0.61,4.6)", v >= 0.90 and dt < 1, f"{v:.4f}")
    v, dt = timed(lambda: dispersion_broadening(0.03, fib))
    cr.check("broadening(0.03nm)", math.isclose(v, 4.5, rel_tol=1e-12) and dt < 1, f"{v:.6g} ps")
    v, dt = timed(lambda: dispersion_broadening(13, fib) * 1e-3)
    cr.check("broadening(13nm)", math.isclose(v, 1.95, rel_tol=1e-12) and abs(v - 2.0) <= 0.2 and dt < 1,
             f"{v:.4g} ns")
    v, dt = timed(lambda: fiber_transmittance(fib))
    cr.check("transmittance(10km)", abs(v - 0.631) < 5e-4 and abs(v - 0.62) <= 0.02 and dt < 1, f"{v:.4f}")
    conv = calibrate_converter(external_max=0.560, coupling_telecom=0.594)
    p = np.linspace(0, 200, 4001)
    v, dt = timed(lambda: wc_efficiency(p, conv).max())
    ext = wc_efficiency(p, conv, external=True).max()
    cr.check("internal max", abs(v - 0.943) <= 0.002 and abs(ext - 0.560) < 1e-9 and dt < 1,
             f"{v:.4f} (external {ext:.4f})")
    cr.finish()


def test_criterion_2_comb_geometry(criterion):
    cr = criterion(2, "comb geometry")
    v = round_trip_time(116)
    cr.check("round_trip(116MHz)", abs(v - 8.62) < 0.005 and abs(v - 8.6) <= 0.1, f"{v:.4f} ns")
    v = degenerate_linewidth(0.95)
    cr.check("degenerate(0.95)", math.isclose(v, 0.608, rel_tol=1e-12) and abs(v - 0.61) < 0.005, f"{v:.4f} MHz")
    v = span_from_wavelength(13, 1514)
    cr.check("span(13nm,1514nm)", 1.0 <= v <= 2.0, f"{v:.4f} THz")
    cr.finish()


def test_criterion_3_generator_fitter_round_trip(criterion):
    cr = criterion(3, "generator/fitter round trip")
    t0 = time.perf_counter()
    cfg = load_preset("paper_default")
    h = simulate_histogram(cfg, 42, 60.0)
    f = linewidth_from_envelope(h)
    cr.check("linewidth", abs(f - 0.95) <= 0.05, f"{f:.4f} MHz")
    fit = fit_comb(h)
    t_true = round_trip_time(cfg.comb.fsr_mhz)
    rel = abs(fit.params.t_fsr_ns - t_true) / t_true
    cr.check("t_fsr", fit.converged and rel <= 0.005, f"{fit.params.t_fsr_ns:.5f} ns (rel {rel:.1e})")
    disp = load_preset("dispersed_10km")
    hd = simulate_histogram(disp, disp.seed, disp.duration_s)
    fd = fit_comb(hd)
    w = fd.params.tooth_fwhm_ns
    cr.check("dispersed tooth FWHM", fd.converged and 3.7 <= w <= 4.3, f"{w:.3f} ns")
    elapsed = time.perf_counter() - t0
    cr.check("runtime", elapsed < 60, f"{elapsed:.1f} s")
    cr.finish()


def flatness_pvalue(h, t_fsr_ns, lo=-79.0, hi=-1.0, rebin=64, tooth_excl_ns=0.6):
    """Chi-square p-value of a constant fit to the tooth-free floor on (lo, hi) ns."""
    r = h.rebin(rebin)
    x, y = r.tau_ns, r.counts.astype(float)
    half = 0.5 * r.bin_ps * 1e-3
    dist = np.abs(x - t_fsr_ns * np.round(x / t_fsr_ns))
    keep = (x - half > lo) & (x + half < hi) & (dist > tooth_excl_ns + half)
    yk = y[keep]
    mean = yk.mean()
    chi2 = np.sum((yk - mean) ** 2 / mean)
    return float(stats.chi2.sf(chi2, len(yk) - 1)), int(len(yk))


def test_criterion_4_g2_behavior(criterion):
    cr = criterion(4, "g2 behavior")
    cfg = load_preset("paper_default")
    t_fsr = round_trip_time(cfg.comb.fsr_mhz)
    pts = []
    for k, p in enumerate(np.geomspace(0.01, 1.0, 5)):
        h = simulate_histogram(cfg.with_pump(p), 100 + k, 300.0 * 0.01 / p)
        pts.append((p, g2_zero(h, t_fsr_ns=t_fsr).g2_zero))
    slope = pump_sweep_slope(pts)
    cr.check("pump slope", abs(slope + 1) <= 0.15, f"{slope:.3f}")

    wc = load_preset("wc_20km")
    h = simulate_histogram(wc, wc.seed, wc.duration_s)
    g = g2_zero(h, t_fsr_ns=t_fsr)
    cr.check("20km+WC g2", 2.0 <= g.g2_zero <= 4.0, f"{g.g2_zero:.3f} +/- {g.g2_std:.3f}")

    dt = load_preset("dead_time_10mw")
    p_dead, n = flatness_pvalue(simulate_histogram(dt, dt.seed, dt.duration_s), t_fsr)
    no_dead = dt.replace(detectors=tuple(dataclasses.replace(d, dead_time_ns=0.0) for d in dt.detectors))
    p_free, _ = flatness_pvalue(simulate_histogram(no_dead, dt.seed, dt.duration_s), t_fsr)
    cr.check("flat floor with dead time", p_dead > 0.01, f"p={p_dead:.3f} ({n} bins)")
    cr.check("sloped floor without dead time", p_free <= 0.01, f"p={p_free:.2g}")
    cr.finish()


def test_criterion_5_tomography(criterion):
    cr = criterion(5, "tomography")
    worst = 1.0
    for kind in BellKind:
        exact = predicted_counts(bell_state(kind), 1e3, 15.0)
        res = mle_reconstruct(TomographyCounts(exact.labels, exact.counts, exact.acquisition_s))
        worst = min(worst, fidelity(res.rho, bell_state(kind)))
    cr.check("noiseless Bell fidelity", worst > 0.9999, f"min {worst:.7f}")

    truth = werner(0.95)
    peak_p = max(predicted_counts(truth, 1.0, 1.0).counts)
    n0 = 1e4 / peak_p
    fids = [uhlmann_fidelity(mle_reconstruct(simulate_tomography_counts(truth, n0, 1.0, s), seed=s).rho, truth)
            for s in range(200)]
    med = float(np.median(fids))
    cr.check("Werner(0.95) median fidelity", med >= 0.99, f"{med:.4f}")

    rng = np.random.default_rng(555)
    physical = 0
    for trial in range(1000):
        c = simulate_tomography_counts(random_density_matrix(rng, rank=1 + trial % 4),
                                       10 ** rng.uniform(1, 4), 1.0, seed=10_000 + trial)
        try:
            DensityMatrix(mle_reconstruct(c, seed=trial).rho.elements, tol=RECON_TOL)
            physical += 1
        except Exception:
            pass
    cr.check("MLE physical", physical == 1000, f"{physical}/1000")

    bell = [DensityMatrix.from_pure(bell_state(k)) for k in BellKind]
    dc = max(abs(concurrence(r) - 1) for r in bell)
    ds = max(abs(chsh_max(r) - TSIRELSON) for r in bell)
    cr.check("Bell C and S", dc <= 1e-8 and ds <= 1e-8, f"|dC|={dc:.1e} |dS|={ds:.1e}")
    err = max(max(abs(concurrence(werner(p)) - max(0, (3 * p - 1) / 2)),
                  abs(chsh_max(werner(p)) - TSIRELSON * p)) for p in (0, 0.25, 0.5, 0.8, 1))
    cr.check("Werner closed forms", err <= 1e-8, f"max err {err:.1e}")
    cr.finish()


def test_criterion_6_converter_optimization(criterion):
    cr = criterion(6, "converter optimization")
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        L = rng.uniform(10, 60)
        p_star = rng.uniform(60, 400)
        d = rng.uniform(0.05, 2.0)
        c = ConverterSpec(L, (math.pi / (2 * L)) ** 2 / p_star, rng.uniform(0.3, 1.0), 1.0,
                          d / rng.uniform(4, 400), d)
        grid = np.linspace(100 / 10_000, 100, 10_000)
        ref = grid[np.argmax(eta_star(grid, c))]
        worst = max(worst, abs(optimize_pump(c, 100) - ref) / ref)
    cr.check("optimizer vs grid", worst < 0.01, f"worst rel {worst:.1e}")
    conv = calibrate_converter()
    p = np.linspace(0, 200, 4001)
    ext = wc_efficiency(p, conv, external=True).max()
    cr.check("calibration", abs(ext - 0.56) < 1e-9 and conv.dark_rate_kcps == 0.32,
             f"external max {ext:.3f}, dark {conv.dark_rate_kcps} kcps")
    pe, pn = optimize_pump(conv, 200), optimize_pump(conv, 200, "nep")
    cr.check("eta* optimum < NEP optimum", pe < pn, f"{pe:.2f} mW < {pn:.2f} mW")
    cr.finish()


def _digests(path):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(path.iterdir()) if p.is_file()}


def test_criterion_7_cli_determinism(criterion, tmp_path):
    cr = criterion(7, "CLI determinism")
    commands = {
        "simulate": ["simulate", "--config", "preset:paper_default", "--seed", "42", "--duration", "10"],
        "analyze": None,
        "tomo": ["tomo", "--synthesize", "--visibility", "0.95", "--seed", "42"],
        "wc-optimize": ["wc-optimize", "--config", "preset:wc_20km", "--seed", "42", "--grid-check"],
        "link-budget": ["link-budget", "--config", "preset:wc_20km", "--seed", "42"],
        "sweep-pump": ["sweep-pump", "--config", "preset:paper_default", "--seed", "42", "--duration", "20"],
    }
    hist = None
    for name, argv in commands.items():
        runs = []
        for k in range(2):
            out = tmp_path / f"{name}-{k}"
            if name == "analyze":
                argv = ["analyze", "--histogram", str(hist), "--acquisition-s", "10", "--seed", "42"]
            code = main(argv + ["--out", str(out)])
            runs.append((code, _digests(out)))
        if name == "simulate":
            hist = tmp_path / "simulate-0" / "histogram.csv"
        same = runs[0] == runs[1] and runs[0][0] == 0 and runs[0][1]
        cr.check(name, same, f"{len(runs[0][1])} files identical" if same else "differs")
    cr.finish()
