"""Scenario configuration, report assembly and atomic file output."""

from __future__ import annotations

import contextlib
import dataclasses
import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import __version__
from .channel import (ConverterSpec, FiberSpec, MemorySpec, converter_passband_modes,
                      dispersion_broadening, fiber_transmittance, memory_coupling,
                      wc_efficiency, wc_noise)
from .errors import ConfigError
from .mc_sim import DetectorSpec, SourceRateModel, TcspcSpec, link_rates
from .qstate import PureState
from .source import CombModelParams, CombSpec, degenerate_linewidth

SCHEMA_VERSION = 1
ARMS = ("signal", "idler")


def _check_keys(obj, path, allowed, required=()):
    if not isinstance(obj, dict):
        raise ConfigError(f"expected an object, got {type(obj).__name__}", path)
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ConfigError(f"unknown field(s): {', '.join(extra)}", path)
    for k in required:
        if k not in obj:
            raise ConfigError("missing required field", f"{path}.{k}" if path else k)


def _number(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", path)
    if not math.isfinite(v):
        raise ConfigError(f"expected a finite number, got {v!r}", path)
    return v


def _build(cls, obj, path, skip=()):
    """Instantiate a flat dataclass from a JSON object, reporting field paths."""
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    required = [n for n, f in fields.items()
                if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
    _check_keys(obj, path, list(fields) + ["enabled"], required)
    kwargs = {}
    for name in fields:
        if name in obj:
            kwargs[name] = _number(obj[name], f"{path}.{name}")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        hit = next((n for n in fields if msg.startswith(n)), None)
        raise ConfigError(msg, f"{path}.{hit}" if hit else path) from None


def _enabled(obj, path):
    if obj is None:
        return False
    if not isinstance(obj, dict):
        raise ConfigError("expected an object or null", path)
    flag = obj.get("enabled", True)
    if not isinstance(flag, bool):
        raise ConfigError("expected true or false", f"{path}.enabled")
    return flag


def _complex(v, path):
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(_number(v[0], f"{path}[0]"), _number(v[1], f"{path}[1]"))
    return complex(_number(v, path), 0.0)


def _flat(obj):
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Full link description; mirrors the source, fiber, converter, memory and detection chain."""

    comb: CombSpec
    rate: SourceRateModel
    state: PureState
    detectors: tuple
    tcspc: TcspcSpec
    fiber_signal: FiberSpec | None = None
    fiber_idler: FiberSpec | None = None
    converter: ConverterSpec | None = None
    memory: MemorySpec | None = None
    tooth_fwhm_ps: float | None = None
    n_teeth: int | None = None
    seed: int = 42
    duration_s: float = 60.0
    name: str = ""

    def __post_init__(self):
        if len(self.detectors) != 2 or not all(isinstance(d, DetectorSpec) for d in self.detectors):
            raise ConfigError("exactly two detectors are required", "detectors")
        object.__setattr__(self, "detectors", tuple(self.detectors))
        if not self.duration_s > 0:
            raise ConfigError("must be > 0", "duration_s")
        if self.state.amplitudes[1] != 0 or self.state.amplitudes[2] != 0:
            raise ConfigError("source state must have the form alpha|HH> + beta|VV>", "source.state")

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(self.digest())

    @property
    def alpha(self) -> complex:
        return complex(self.state.amplitudes[0])

    @property
    def beta(self) -> complex:
        return complex(self.state.amplitudes[3])

    def source_params(self, c: float = 1.0, noise_floor: float = 0.0) -> CombModelParams:
        tooth = None if self.tooth_fwhm_ps is None else self.tooth_fwhm_ps * 1e-3
        return self.comb.model_params(c=c, noise_floor=noise_floor, tooth_fwhm_ns=tooth, n_teeth=self.n_teeth)

    def replace(self, **kw) -> ScenarioConfig:
        return dataclasses.replace(self, **kw)

    def with_pump(self, pump_mw: float) -> ScenarioConfig:
        return self.replace(rate=dataclasses.replace(self.rate, pump_mw=pump_mw))

    # serialization

    def to_json(self) -> dict:
        def z(v):
            return [float(v.real), float(v.imag)]

        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "source": {
                "comb": _flat(self.comb),
                "rate": _flat(self.rate),
                "state": {"alpha": z(self.alpha), "beta": z(self.beta)},
                "tooth_fwhm_ps": self.tooth_fwhm_ps,
                "n_teeth": self.n_teeth,
            },
            "fiber": {arm: (_flat(f) if f is not None else None)
                      for arm, f in zip(ARMS, (self.fiber_signal, self.fiber_idler))},
            "converter": _flat(self.converter) if self.converter is not None else None,
            "memory": _flat(self.memory) if self.memory is not None else None,
            "detectors": {arm: _flat(d) for arm, d in zip(ARMS, self.detectors)},
            "tcspc": _flat(self.tcspc),
            "seed": self.seed,
            "duration_s": self.duration_s,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False) + "\n"

    def digest(self) -> str:
        canon = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @classmethod
    def from_json(cls, obj: dict) -> ScenarioConfig:
        _check_keys(obj, "", ["schema_version", "name", "source", "fiber", "converter", "memory",
                              "detectors", "tcspc", "seed", "duration_s"],
                    ["schema_version", "source", "detectors", "tcspc"])
        ver = obj["schema_version"]
        if ver != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {ver!r} (expected {SCHEMA_VERSION})", "schema_version")
        name = obj.get("name", "")
        if not isinstance(name, str):
            raise ConfigError("expected a string", "name")

        src = obj["source"]
        _check_keys(src, "source", ["comb", "rate", "state", "tooth_fwhm_ps", "n_teeth"],
                    ["comb", "rate", "state"])
        comb = _build(CombSpec, src["comb"], "source.comb")
        rate = _build(SourceRateModel, src["rate"], "source.rate")
        st = src["state"]
        _check_keys(st, "source.state", ["alpha", "beta"], ["alpha", "beta"])
        a, b = _complex(st["alpha"], "source.state.alpha"), _complex(st["beta"], "source.state.beta")
        norm2 = abs(a) ** 2 + abs(b) ** 2
        if abs(norm2 - 1.0) > 1e-9:
            raise ConfigError(f"|alpha|^2 + |beta|^2 = {norm2:.12g}, expected 1", "source.state")
        state = PureState.normalized([a, 0, 0, b])
        tooth = src.get("tooth_fwhm_ps")
        if tooth is not None:
            tooth = _number(tooth, "source.tooth_fwhm_ps")
            if tooth <= 0:
                raise ConfigError("must be > 0", "source.tooth_fwhm_ps")
        n_teeth = src.get("n_teeth")
        if n_teeth is not None and (isinstance(n_teeth, bool) or not isinstance(n_teeth, int) or n_teeth < 1):
            raise ConfigError("must be a positive integer or null", "source.n_teeth")

        fibers = [None, None]
        fib = obj.get("fiber")
        if fib is not None:
            _check_keys(fib, "fiber", list(ARMS))
            for i, arm in enumerate(ARMS):
                f = fib.get(arm)
                if _enabled(f, f"fiber.{arm}"):
                    fibers[i] = _build(FiberSpec, f, f"fiber.{arm}")
        conv = obj.get("converter")
        converter = _build(ConverterSpec, conv, "converter") if _enabled(conv, "converter") else None
        mem = obj.get("memory")
        memory = _build(MemorySpec, mem, "memory") if _enabled(mem, "memory") else None

        det = obj["detectors"]
        _check_keys(det, "detectors", list(ARMS), list(ARMS))
        detectors = tuple(_build(DetectorSpec, det[arm], f"detectors.{arm}") for arm in ARMS)
        tcspc = _build(TcspcSpec, obj["tcspc"], "tcspc")
        seed = obj.get("seed", 42)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("must be a nonnegative integer", "seed")
        duration = _number(obj.get("duration_s", 60.0), "duration_s")

        cfg = cls(comb, rate, state, detectors, tcspc, fibers[0], fibers[1], converter, memory,
                  tooth, n_teeth, seed, duration, name)
        try:
            cfg.source_params()
        except ValueError as exc:
            raise ConfigError(str(exc), "source") from None
        return cfg

    @classmethod
    def loads(cls, text: str, path: str | None = None) -> ScenarioConfig:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", path) from None
        return cls.from_json(obj)

    @classmethod
    def load(cls, path) -> ScenarioConfig:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
        return cls.loads(text, str(path))


PRESETS = ("paper_default", "wc_20km", "dispersed_10km", "dead_time_10mw")


def load_preset(name: str) -> ScenarioConfig:
    """One of the bundled scenarios in ``tpcomb/data/<name>.json``."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("tpcomb.data").joinpath(f"{name}.json").read_text()
    return ScenarioConfig.loads(text, name)


def report_schema() -> dict:
    return json.loads(resources.files("tpcomb.data").joinpath("report.schema.json").read_text())


def delta_lambda_nm(cfg: ScenarioConfig) -> float:
    """Spectral width that disperses in the fiber: the converter passband if present."""
    return cfg.converter.bandwidth_nm if cfg.converter is not None else cfg.comb.span_nm


def channel_budget(cfg: ScenarioConfig) -> dict:
    """Closed-form per-arm budget; all numbers carry units in their keys."""
    link = link_rates(cfg)
    arms = {}
    for i, (arm, f) in enumerate(zip(ARMS, (cfg.fiber_signal, cfg.fiber_idler))):
        row = {
            "fiber_length_km": f.length_km if f else 0.0,
            "transmittance": fiber_transmittance(f) if f else 1.0,
            "dispersion_broadening_ps": link.dispersion_fwhm_ps[i],
            "dispersion_broadening_converter_band_ps": dispersion_broadening(0.03, f) if f else 0.0,
            "dispersion_broadening_full_comb_ps": dispersion_broadening(cfg.comb.span_nm, f) if f else 0.0,
            "photon_survival": link.survival[i],
            "expected_singles_cps": link.singles_cps(i),
        }
        arms[arm] = row
    out = {
        "arms": arms,
        "effective_delta_lambda_nm": delta_lambda_nm(cfg),
        "comb_span_nm": cfg.comb.span_nm,
        "expected_coincidence_cps": link.coincidence_cps,
        "pair_rate_cps": link.pair_rate_cps,
    }
    if cfg.converter is not None:
        c = cfg.converter
        out["converter"] = {
            "pump_mw": c.pump_mw,
            "external_efficiency": wc_efficiency(c.pump_mw, c, external=True),
            "internal_efficiency": wc_efficiency(c.pump_mw, c),
            "noise_kcps": wc_noise(c.pump_mw, c),
            "passband_modes": converter_passband_modes(cfg.comb, c),
        }
    if cfg.memory is not None:
        gamma = degenerate_linewidth(cfg.comb.cavity_linewidth_mhz)
        out["memory"] = {
            "window_mhz": cfg.memory.window_mhz,
            "photon_linewidth_mhz": gamma,
            "coupling_efficiency": memory_coupling(gamma, cfg.memory),
            "coupling_efficiency_cavity_linewidth": memory_coupling(cfg.comb.cavity_linewidth_mhz, cfg.memory),
        }
    return out


def build_report(*, seed: int, scenario: ScenarioConfig | None = None, histogram=None,
                 g2=None, comb_fit=None, entanglement=None, extra: dict | None = None) -> dict:
    rep = {
        "tool_name": "tpcomb",
        "tool_version": __version__,
        "seed": int(seed),
        "scenario_digest_sha256": scenario.digest() if scenario is not None else None,
        "scenario_name": scenario.name if scenario is not None else None,
    }
    if histogram is not None:
        rep["histogram"] = {
            "acquisition_s": float(histogram.acquisition_s),
            "bin_ps": histogram.bin_ps,
            "n_bins": int(len(histogram.counts)),
            "total_counts": int(np.sum(histogram.counts)),
        }
    rep["g2"] = g2.to_json() if g2 is not None else None
    rep["comb_fit"] = comb_fit.to_json() if comb_fit is not None else None
    rep["entanglement"] = entanglement
    rep["channel_budget"] = channel_budget(scenario) if scenario is not None else None
    if extra:
        rep.update(extra)
    return _clean(rep)


def _clean(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def validate_report(rep: dict) -> None:
    import jsonschema

    jsonschema.validate(rep, report_schema())


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temporary path next to ``path``; rename over it on success."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    os.close(fd)
    os.chmod(tmp, 0o644)
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    with atomic_path(path) as tmp, open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
