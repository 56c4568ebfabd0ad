"""End-to-end simulation pipeline and its JSON configuration.

Config document (times and frequencies accept unit suffixes)::

    {
      "seed": 7,
      "synth": {"rate_laser_hz": 2e5, "rate_sp_hz": 1e6, "duration": "1s",
                "tau_l": "150ns", "tau_c": "115ps", "g2_sp0": 0.03, "delta_f": "0Hz"},
      "interferometer": {"pol": "parallel", "engine": "kernel", "v0": 0.85},
      "detector": {"jitter_sigma": "0ps", "dead_time": "0ps", "dark_rate_hz": 0, "efficiency": 1},
      "correlator": {"bin_width": "10ps", "tau_max": "2ns"},
      "fit": {"init": {...}, "free": ["v0", "tau_l_ps"]},
      "output": {"ptt": "run.ptt"}
    }

The intensity ratio eta is rate_laser/rate_sp; the coherence and source
parameters of the interferometer model are taken from the synth section so
the two cannot disagree.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from homsim import correlator, synth
from homsim.errors import ConfigError
from homsim.interfere import D1, D2, DetectorConfig, InterferometerConfig, apply_detector_effects, interfere
from homsim.model import ModelParams
from homsim.units import parse_freq_hz, parse_time_ps, parse_time_ps_int

SEED_ENV = "HOMSIM_SEED"


@dataclass
class CorrelatorSettings:
    bin_width_ps: int = 10
    tau_max_ps: int = 2_000
    tau_min_ps: Optional[int] = None
    chunk_ps: Optional[int] = None
    workers: int = 1


@dataclass
class FitSettings:
    init: ModelParams = field(default_factory=ModelParams)
    free: Optional[list] = None
    oversample: int = 1
    jitter_sigma_ps: float = 0.0


@dataclass
class PipelineConfig:
    synth: synth.SynthConfig
    interferometer: InterferometerConfig
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    correlator: CorrelatorSettings = field(default_factory=CorrelatorSettings)
    fit: FitSettings = field(default_factory=FitSettings)
    outputs: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.synth.seed


def eta_from_rates(rate_laser_hz: float, rate_sp_hz: float) -> float:
    """Intensity ratio at the splitter; 0 when there is no single-photon light."""
    return 0.0 if rate_sp_hz == 0 else rate_laser_hz / rate_sp_hz


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw, 0)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from exc


def _take(d: dict, key: str, parse, default):
    return parse(d.pop(key)) if key in d else default


def _check_empty(d: dict, section: str):
    if d:
        raise ConfigError(f"unknown keys in '{section}': {sorted(d)}")


def config_from_dict(doc: dict, seed: Optional[int] = None) -> PipelineConfig:
    """Build and validate a PipelineConfig. ``seed`` (e.g. from the command
    line) wins over the document, which wins over $HOMSIM_SEED."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    doc = json.loads(json.dumps(doc))  # private deep copy
    top_seed = doc.pop("seed", None)
    run_seed = seed if seed is not None else (int(top_seed) if top_seed is not None else default_seed())

    s = doc.pop("synth", {})
    sc = synth.SynthConfig(
        rate_laser_hz=_take(s, "rate_laser_hz", float, 2e5),
        rate_sp_hz=_take(s, "rate_sp_hz", float, 1e6),
        duration_ps=_take(s, "duration", lambda x: parse_time_ps_int(x, "ps"), 10**12),
        tau_l_ps=_take(s, "tau_l", parse_time_ps, 150_000.0),
        tau_c_ps=_take(s, "tau_c", parse_time_ps, 115.0),
        g2_sp0=_take(s, "g2_sp0", float, 0.03),
        delta_f_hz=_take(s, "delta_f", parse_freq_hz, 0.0),
        seed=run_seed,
        chunk_ps=_take(s, "chunk", parse_time_ps_int, synth.DEFAULT_CHUNK_PS),
        workers=_take(s, "workers", int, 1),
    )
    _check_empty(s, "synth")

    i = doc.pop("interferometer", {})
    eta = eta_from_rates(sc.rate_laser_hz, sc.rate_sp_hz)
    if "eta" in i:
        given = float(i.pop("eta"))
        if not math.isclose(given, eta, rel_tol=1e-9, abs_tol=1e-12):
            raise ConfigError(f"interferometer eta={given} disagrees with rate_laser/rate_sp={eta}")
    model = ModelParams(
        eta=eta,
        v0=_take(i, "v0", float, 0.85),
        tau_l_ps=sc.tau_l_ps,
        tau_c_ps=sc.tau_c_ps,
        g2_sp0=sc.g2_sp0,
        delta_f_hz=sc.delta_f_hz,
    )
    ic = InterferometerConfig(
        pol=_take(i, "pol", str, "parallel").lower(),
        same_port_hbt=_take(i, "same_port_hbt", bool, False),
        amp_overlap=_take(i, "amp_overlap", float, None),
        model=model,
        engine=_take(i, "engine", str, "kernel").lower(),
        seed=run_seed,
        override_overlap=_take(i, "override_overlap", bool, False),
        window_factor=_take(i, "window_factor", float, 5.0),
        rate_compensation=_take(i, "rate_compensation", bool, True),
    )
    _check_empty(i, "interferometer")

    d = doc.pop("detector", {})
    dc = DetectorConfig(
        jitter_sigma_ps=_take(d, "jitter_sigma", parse_time_ps, 0.0),
        dead_time_ps=_take(d, "dead_time", parse_time_ps_int, 0),
        dark_rate_hz=_take(d, "dark_rate_hz", float, 0.0),
        efficiency=_take(d, "efficiency", float, 1.0),
        seed=run_seed,
    )
    _check_empty(d, "detector")

    c = doc.pop("correlator", {})
    cs = CorrelatorSettings(
        bin_width_ps=_take(c, "bin_width", parse_time_ps_int, 10),
        tau_max_ps=_take(c, "tau_max", parse_time_ps_int, 2_000),
        tau_min_ps=_take(c, "tau_min", parse_time_ps_int, None),
        chunk_ps=_take(c, "chunk", parse_time_ps_int, None),
        workers=_take(c, "workers", int, 1),
    )
    _check_empty(c, "correlator")

    f = doc.pop("fit", {})
    fs = FitSettings(
        init=model_params_from_dict(f.pop("init", {})),
        free=f.pop("free", None),
        oversample=int(f.pop("oversample", 1)),
        jitter_sigma_ps=_take(f, "jitter_sigma", parse_time_ps, 0.0),
    )
    _check_empty(f, "fit")

    outputs = doc.pop("output", {})
    if not isinstance(outputs, dict):
        raise ConfigError("'output' must be an object of paths")
    _check_empty(doc, "config")
    return PipelineConfig(sc, ic, dc, cs, fs, outputs)


PARAM_KEYS = {
    "eta": float, "v0": float, "r": float, "t": float, "g2_sp0": float,
    "tau_l_ps": parse_time_ps, "tau_c_ps": parse_time_ps, "delta_f_hz": parse_freq_hz,
}


def model_params_from_dict(d: dict) -> ModelParams:
    unknown = set(d) - set(PARAM_KEYS)
    if unknown:
        raise ConfigError(f"unknown model parameters {sorted(unknown)}")
    return ModelParams(**{k: PARAM_KEYS[k](v) for k, v in d.items()})


def load_config(path, seed: Optional[int] = None) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(doc, seed)


@dataclass
class SimulationResult:
    clicks: dict  # channel -> int64 ps array
    manifest: dict


def simulate(cfg: PipelineConfig) -> SimulationResult:
    """Sources -> beam splitter -> detectors."""
    sc = cfg.synth
    laser = synth.gen_laser_events(sc)
    sp = synth.gen_sp_events(sc)
    d1, d2 = interfere(laser, sp, cfg.interferometer)
    clicks = {
        D1: apply_detector_effects(d1, cfg.detector, channel=D1, duration_ps=sc.duration_ps),
        D2: apply_detector_effects(d2, cfg.detector, channel=D2, duration_ps=sc.duration_ps),
    }
    secs = sc.duration_ps * 1e-12
    manifest = {
        "seed": sc.seed,
        "duration_ps": sc.duration_ps,
        "engine": cfg.interferometer.engine,
        "pol": cfg.interferometer.pol,
        "same_port_hbt": cfg.interferometer.same_port_hbt,
        "eta": cfg.interferometer.model.eta,
        "emitted": {"laser": len(laser), "sp": len(sp)},
        "counts": {"D1": int(clicks[D1].size), "D2": int(clicks[D2].size)},
        "rates_hz": {
            "laser": len(laser) / secs if secs else 0.0,
            "sp": len(sp) / secs if secs else 0.0,
            "D1": clicks[D1].size / secs if secs else 0.0,
            "D2": clicks[D2].size / secs if secs else 0.0,
        },
    }
    return SimulationResult(clicks, manifest)


def correlate_clicks(a, b, settings: CorrelatorSettings, duration_ps: Optional[int] = None) -> correlator.CorrelationHistogram:
    """Histogram of ``b - a`` delays (auto when ``b`` is None)."""
    if settings.chunk_ps:
        return correlator.correlate_chunked(
            a, b, settings.bin_width_ps, settings.tau_max_ps, settings.chunk_ps,
            duration_ps=duration_ps, tau_min_ps=settings.tau_min_ps, workers=settings.workers,
        )
    if b is None:
        return correlator.auto_correlate(a, settings.bin_width_ps, settings.tau_max_ps, duration_ps, settings.tau_min_ps)
    return correlator.cross_correlate(a, b, settings.bin_width_ps, settings.tau_max_ps, duration_ps, settings.tau_min_ps)


def run_histogram(cfg: PipelineConfig) -> tuple[correlator.CorrelationHistogram, dict]:
    """Simulate and return the normalized D1-D2 histogram and the manifest."""
    res = simulate(cfg)
    h = correlate_clicks(res.clicks[D1], res.clicks[D2], cfg.correlator, cfg.synth.duration_ps)
    return correlator.normalize(h), res.manifest
