"""Command-line entry point: ``tpcomb <command> [options]``.

Exit codes: 0 success, 2 configuration/input error, 3 runtime or model error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (AnalysisError, estimate_tooth_spacing, fit_comb, g2_zero, initial_guess,
                       pump_sweep_slope, write_curve_csv)
from .channel import (MultimodalWarning, eta_star, nep_merit, optimize_pump, wc_efficiency,
                      wc_noise)
from .config import (PRESETS, ScenarioConfig, atomic_path, build_report, channel_budget,
                     load_preset, validate_report, write_json)
from .errors import ConfigError, TpcError
from .mc_sim import CoincidenceHistogram, simulate_histogram, simulate_stream, write_timestamps_csv
from .qstate import BellKind, DensityMatrix, bell_state, entanglement_report, fidelity
from .source import round_trip_time
from .tomography import TomographyCounts, mle_reconstruct

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _load_config(arg: str) -> ScenarioConfig:
    """A path to a JSON config, or ``preset:<name>`` for a bundled one."""
    if arg.startswith("preset:"):
        return load_preset(arg.split(":", 1)[1])
    return ScenarioConfig.load(arg)


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "duration", None) is not None:
        if not args.duration > 0:
            raise ConfigError("must be > 0", "--duration")
        kw["duration_s"] = args.duration
    return cfg.replace(**kw) if kw else cfg


def _write_hist(path, h: CoincidenceHistogram):
    with atomic_path(path) as tmp:
        h.to_csv(tmp)


def _analyze(h: CoincidenceHistogram, cfg: ScenarioConfig | None):
    """g2 and comb fit; the fit is skipped (None) when the histogram cannot support it."""
    t_fsr = round_trip_time(cfg.comb.fsr_mhz) if cfg is not None else None
    dead = cfg.detectors[1].dead_time_ns if cfg is not None else None
    if h.total == 0:
        raise AnalysisError("no coincidences recorded")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            t_est = t_fsr or estimate_tooth_spacing(h)
        except AnalysisError:
            t_est = None
        g2 = g2_zero(h, t_fsr_ns=t_est, dead_time_ns=dead) if t_est else None
        fit = None
        try:
            init = initial_guess(h, t_fsr_ns=t_est) if t_est else None
            if init is not None:
                fit = fit_comb(h, init)
        except (AnalysisError, ValueError, np.linalg.LinAlgError):
            fit = None
    if g2 is None:
        raise AnalysisError("no comb structure found; cannot define the noise region")
    return g2, fit


def _emit_analysis(out: Path, h, cfg, seed, extra=None):
    g2, fit = _analyze(h, cfg)
    if fit is not None:
        with atomic_path(out / "g2_curve.csv") as tmp:
            write_curve_csv(tmp, h.bin_centers_ps, fit.model(h.tau_ns))
    rep = build_report(seed=seed, scenario=cfg, histogram=h, g2=g2, comb_fit=fit, extra=extra)
    validate_report(rep)
    write_json(out / "report.json", rep)
    return rep


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    out = Path(args.out)
    if args.timestamps:
        sig, idl = simulate_stream(cfg, cfg.seed, cfg.duration_s, workers=args.workers)
        with atomic_path(out / "timestamps.csv") as tmp:
            write_timestamps_csv(tmp, sig, idl)
    h = simulate_histogram(cfg, cfg.seed, cfg.duration_s, workers=args.workers)
    _write_hist(out / "histogram.csv", h)
    rep = _emit_analysis(out, h, cfg, cfg.seed)
    print(f"g2(0) = {rep['g2']['g2_zero']:.4g} +/- {rep['g2']['g2_std']:.2g}  "
          f"({h.total} coincidences in {cfg.duration_s:g} s)")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args) if args.config else None
    try:
        h = CoincidenceHistogram.from_csv(args.histogram, acquisition_s=args.acquisition_s)
    except OSError as exc:
        raise ConfigError(f"cannot read histogram: {exc.strerror}", args.histogram) from None
    except ValueError as exc:
        raise ConfigError(str(exc), args.histogram) from None
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    rep = _emit_analysis(Path(args.out), h, cfg, seed)
    print(f"g2(0) = {rep['g2']['g2_zero']:.4g} +/- {rep['g2']['g2_std']:.2g}")
    return EXIT_OK


def _tomo_target(cfg: ScenarioConfig | None, name: str | None):
    if name:
        return bell_state(BellKind(name))
    if cfg is not None:
        return cfg.state
    return bell_state(BellKind.PhiPlus)


def cmd_tomo(args) -> int:
    out = Path(args.out)
    if args.synthesize:
        from .mc_sim import simulate_tomography_counts

        cfg = _apply_overrides(_load_config(args.config), args) if args.config else None
        seed = args.seed if args.seed is not None else (cfg.seed if cfg else 42)
        target = _tomo_target(cfg, args.target)
        if not 0.0 <= args.visibility <= 1.0:
            raise ConfigError("must lie in [0, 1]", "--visibility")
        rho_true = args.visibility * target.projector() + (1 - args.visibility) * np.eye(4) / 4
        counts = simulate_tomography_counts(DensityMatrix(rho_true), args.n0, args.acquisition_s, seed)
        with atomic_path(out / "counts.csv") as tmp:
            counts.to_csv(tmp)
    else:
        if not args.counts:
            raise ConfigError("give --counts CSV or --synthesize", "--counts")
        counts = TomographyCounts.from_csv(args.counts)
        seed = args.seed if args.seed is not None else 0
    res = mle_reconstruct(counts, seed=seed)
    rho = res.rho
    write_json(out / "rho.json", rho.to_json())
    bell = {f"fidelity_{k.value}": fidelity(rho, bell_state(k)) for k in BellKind}
    rep = entanglement_report(rho)
    metrics = {
        **bell,
        "max_pure_fidelity": rep.max_pure_fidelity,
        "concurrence": rep.concurrence,
        "chsh_s": rep.chsh_s,
        "purity": rep.purity,
        "log_likelihood": res.log_likelihood,
        "optimizer_iterations": res.iterations,
        "n0_counts_per_s": res.n0,
        "seed": seed,
    }
    write_json(out / "metrics.json", metrics)
    print("  ".join(f"F({k.value})={bell['fidelity_' + k.value]:.4f}" for k in BellKind))
    print(f"max pure fidelity {rep.max_pure_fidelity:.4f}  concurrence {rep.concurrence:.4f}  "
          f"S {rep.chsh_s:.4f}")
    return EXIT_OK


def cmd_wc_optimize(args) -> int:
    cfg = _load_config(args.config)
    c = cfg.converter
    if c is None:
        raise ConfigError("wc-optimize needs an enabled converter section", "converter")
    p_max = args.p_max_mw
    grid = np.linspace(p_max / args.points, p_max, args.points)
    out = Path(args.out)
    with atomic_path(out / "wc_sweep.csv") as tmp, open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pump_mw", "eta_external", "noise_kcps", "eta_star_per_kcps", "nep_merit_per_sqrt_kcps"])
        with np.errstate(divide="ignore", invalid="ignore"):
            cols = (grid, wc_efficiency(grid, c, external=True), wc_noise(grid, c),
                    eta_star(grid, c), nep_merit(grid, c))
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
    summary = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MultimodalWarning)
        for obj in ("eta-star", "nep"):
            summary[obj.replace("-", "_")] = {"optimum_pump_mw": optimize_pump(c, p_max, obj)}
    summary["multimodal"] = any(issubclass(x.category, MultimodalWarning) for x in caught)
    doubled = c.replace(dark_rate_kcps=2 * c.dark_rate_kcps)
    summary["eta_star"]["optimum_pump_mw_dark_doubled"] = optimize_pump(doubled, p_max, "eta-star")
    if args.grid_check:
        dense = np.linspace(p_max / 10_000, p_max, 10_000)
        for obj, fn in (("eta_star", eta_star), ("nep", nep_merit)):
            g = float(dense[int(np.argmax(fn(dense, c)))])
            opt = summary[obj]["optimum_pump_mw"]
            summary[obj]["grid_optimum_pump_mw"] = g
            summary[obj]["grid_relative_difference"] = abs(opt - g) / g
    summary["p_max_mw"] = p_max
    write_json(out / "wc_optimum.json", summary)
    chosen = summary[args.objective.replace("-", "_")]["optimum_pump_mw"]
    print(f"optimum ({args.objective}): {chosen:.4g} mW")
    print(f"eta* optimum {summary['eta_star']['optimum_pump_mw']:.4g} mW, "
          f"NEP optimum {summary['nep']['optimum_pump_mw']:.4g} mW")
    print(f"note: the eta* optimum depends strongly on the dark rate "
          f"({summary['eta_star']['optimum_pump_mw_dark_doubled']:.4g} mW with twice the dark counts)")
    return EXIT_OK


def cmd_link_budget(args) -> int:
    cfg = _load_config(args.config)
    b = channel_budget(cfg)
    if args.out:
        write_json(Path(args.out) / "link_budget.json", b)
    for arm, row in b["arms"].items():
        print(f"{arm:>6}: fiber {row['fiber_length_km']:g} km, transmittance {100 * row['transmittance']:.1f}%, "
              f"dispersion {row['dispersion_broadening_converter_band_ps']:.3g} ps (0.03 nm) / "
              f"{row['dispersion_broadening_full_comb_ps']:.4g} ps (full comb)")
    if "converter" in b:
        cv = b["converter"]
        print(f"converter: {cv['passband_modes']} modes in passband, external efficiency "
              f"{100 * cv['external_efficiency']:.1f}% at {cv['pump_mw']:g} mW, noise {cv['noise_kcps']:.3g} kcps")
    if "memory" in b:
        m = b["memory"]
        print(f"memory: {100 * m['coupling_efficiency']:.1f}% coupling of a {m['photon_linewidth_mhz']:.3g} MHz "
              f"photon into {m['window_mhz']:g} MHz")
    return EXIT_OK


def cmd_sweep_pump(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    pumps = [float(x) for x in args.pumps.split(",")] if args.pumps else list(np.geomspace(0.01, 1.0, 5))
    ref = min(pumps)
    out = Path(args.out)
    rows, pts = [], []
    for k, p in enumerate(pumps):
        c = cfg.with_pump(p)
        dur = cfg.duration_s * ref / p
        h = simulate_histogram(c, cfg.seed + k, dur, workers=args.workers)
        if h.total == 0:
            raise AnalysisError(f"no coincidences recorded at {p:g} mW")
        g2 = g2_zero(h, t_fsr_ns=round_trip_time(cfg.comb.fsr_mhz))
        rows.append((p, dur, g2.g2_zero, g2.g2_std, g2.peak_counts, g2.noise_mean))
        pts.append((p, g2.g2_zero))
    with atomic_path(out / "pump_sweep.csv") as tmp, open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pump_mw", "duration_s", "g2_zero", "g2_std", "peak_counts", "noise_mean_counts"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    slope = pump_sweep_slope(pts)
    write_json(out / "pump_sweep.json", {"loglog_slope": slope, "seed": cfg.seed,
                                         "points": [{"pump_mw": p, "g2_zero": g} for p, g in pts]})
    print(f"log-log slope of (g2 - 1) vs pump: {slope:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tpcomb", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"tpcomb {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    cfg_help = f"scenario JSON path, or preset:<name> with name in {{{', '.join(PRESETS)}}}"

    def common(p, config_required=True, duration=True):
        p.add_argument("--config", required=config_required, help=cfg_help)
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", default=".", help="output directory")
        if duration:
            p.add_argument("--duration", type=float, default=None, help="acquisition time in s")

    p = sub.add_parser("simulate", help="simulate a scenario and analyze the histogram")
    common(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timestamps", action="store_true", help="also write timestamps.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="reanalyze an existing histogram CSV")
    common(p, config_required=False, duration=False)
    p.add_argument("--histogram", required=True)
    p.add_argument("--acquisition-s", type=float, default=1.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("tomo", help="maximum-likelihood state reconstruction")
    common(p, config_required=False, duration=False)
    p.add_argument("--counts", help="16-row CSV basis_label,counts,acquisition_s")
    p.add_argument("--synthesize", action="store_true", help="draw counts from a model state")
    p.add_argument("--target", choices=[k.value for k in BellKind], default=None)
    p.add_argument("--visibility", type=float, default=1.0, help="Werner weight of the target")
    p.add_argument("--n0", type=float, default=2000.0, help="coincidence rate scale (1/s)")
    p.add_argument("--acquisition-s", type=float, default=15.0)
    p.set_defaults(func=cmd_tomo)

    p = sub.add_parser("wc-optimize", help="converter pump-power sweep and optimum")
    common(p, duration=False)
    p.add_argument("--objective", choices=["eta-star", "nep"], default="eta-star")
    p.add_argument("--p-max-mw", type=float, default=200.0)
    p.add_argument("--points", type=int, default=400)
    p.add_argument("--grid-check", action="store_true", help="compare with a 10^4-point grid search")
    p.set_defaults(func=cmd_wc_optimize)

    p = sub.add_parser("link-budget", help="closed-form loss, dispersion and coupling table")
    common(p, duration=False)
    p.set_defaults(func=cmd_link_budget)

    p = sub.add_parser("sweep-pump", help="g2(0) versus SPDC pump power")
    common(p)
    p.add_argument("--pumps", help="comma-separated pump powers in mW")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep_pump)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TpcError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
