"""Simulated measurement campaigns: histograms from independent realizations
merged at the histogram level, and the fits that recover generator
parameters from them.

Two delay ranges are measured separately, as in a real setup:

* short range (fine bins, a few ns): antibunching time and V_HOM(0), taken
  at high count rates;
* long range (coarse bins, several tau_l): coherence time, background and
  beat, taken at lower count rates so that few photons share one
  coherence time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from homsim import analysis, correlator, synth
from homsim.interfere import KERNEL, PARALLEL, PERPENDICULAR, DetectorConfig, InterferometerConfig, apply_detector_effects, interfere
from homsim.model import ModelParams


def realization_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(k,)).generate_state(1, np.uint64)[0])


@dataclass
class RunSpec:
    """One histogram measurement: rates, duration, binning and realizations.

    ``rate_total_hz`` is laser plus single-photon rate; it is split by eta.
    """

    rate_total_hz: float
    duration_ps: int
    bin_width_ps: int
    tau_max_ps: int
    realizations: int = 1


@dataclass
class Measurement:
    hist: correlator.CorrelationHistogram
    n_laser: int
    n_sp: int

    @property
    def eta_singles(self) -> float:
        """Intensity ratio from the single-arm photon counts."""
        return self.n_laser / self.n_sp if self.n_sp else float("nan")


def measure(params: ModelParams, pol: str, spec: RunSpec, seed: int, engine: str = KERNEL,
            detector: Optional[DetectorConfig] = None) -> Measurement:
    """Normalized D1-D2 histogram merged over ``spec.realizations`` runs."""
    total = None
    n_l = n_s = 0
    for k in range(spec.realizations):
        s = realization_seed(seed, k)
        rate_sp = spec.rate_total_hz / (1.0 + params.eta)
        sc = synth.SynthConfig(
            rate_laser_hz=params.eta * rate_sp, rate_sp_hz=rate_sp, duration_ps=spec.duration_ps,
            tau_l_ps=params.tau_l_ps, tau_c_ps=params.tau_c_ps, g2_sp0=params.g2_sp0,
            delta_f_hz=params.delta_f_hz, seed=s,
        )
        laser, sp = synth.gen_laser_events(sc), synth.gen_sp_events(sc)
        n_l += len(laser)
        n_s += len(sp)
        d1, d2 = interfere(laser, sp, InterferometerConfig(pol=pol, model=params, engine=engine, seed=s))
        del laser, sp
        if detector is not None:
            d1 = apply_detector_effects(d1, detector, 0, spec.duration_ps)
            d2 = apply_detector_effects(d2, detector, 1, spec.duration_ps)
        h = correlator.cross_correlate(d1, d2, spec.bin_width_ps, spec.tau_max_ps, duration_ps=spec.duration_ps)
        total = h if total is None else correlator.merge(total, h)
    return Measurement(correlator.normalize(total), n_l, n_s)


def measure_pair(params: ModelParams, spec: RunSpec, seed: int, engine: str = KERNEL):
    """Independent perpendicular and parallel measurements."""
    return (
        measure(params, PERPENDICULAR, spec, seed, engine),
        measure(params, PARALLEL, spec, seed + 1, engine),
    )


SHORT = RunSpec(rate_total_hz=2.4e7, duration_ps=5 * 10**11, bin_width_ps=10, tau_max_ps=2_000, realizations=8)
LONG = RunSpec(rate_total_hz=2.4e5, duration_ps=50 * 10**12, bin_width_ps=2_000, tau_max_ps=1_000_000, realizations=4)


def long_spec_for(params: ModelParams, base: RunSpec = LONG) -> RunSpec:
    """Long-range window of ~6 coherence times, bins resolving the beat."""
    tau_max = int(math.ceil(6 * params.tau_l_ps / 10_000.0) * 10_000)
    w = base.bin_width_ps
    if params.delta_f_hz > 0:
        while w > 100 and 1.0 / (params.delta_f_hz * w * 1e-12) < 8:
            w //= 2
    tau_max = int(math.ceil(tau_max / w) * w)
    return RunSpec(base.rate_total_hz, base.duration_ps, w, tau_max, base.realizations)


@dataclass
class Campaign:
    truth: ModelParams
    short: tuple
    long: tuple
    fit: analysis.FitResult
    eta_singles: float
    v_hom0: float
    v_hom0_stderr: float
    background: dict = field(default_factory=dict)
    beat: Optional[analysis.BeatResult] = None


def run_campaign(truth: ModelParams, seed: int, short: RunSpec = SHORT, long: Optional[RunSpec] = None,
                 oversample: int = 4, long_base: RunSpec = LONG) -> Campaign:
    """Measure short- and long-range histogram pairs and fit them jointly.

    eta is fixed to the singles-rate ratio; v0, tau_l, tau_c and g2_sp0 are
    free, and delta_f too when the long-range visibility shows a beat.
    """
    long = long or long_spec_for(truth, long_base)
    sp_, sq_ = measure_pair(truth, short, seed)
    lp_, lq_ = measure_pair(truth, long, seed + 100)
    eta = (sp_.n_laser + sq_.n_laser + lp_.n_laser + lq_.n_laser) / (sp_.n_sp + sq_.n_sp + lp_.n_sp + lq_.n_sp)

    vis = analysis.visibility_curve(lp_.hist, lq_.hist)
    # the beat search decides whether delta_f is fitted; the truth is not consulted
    beat = analysis.extract_beat(vis)
    background = {} if beat.found else analysis.fit_background(vis)

    tau_l0 = 100_000.0
    if background.get("converged"):
        tau_l0 = background["tau_ps"]
    elif beat.found:
        tau_l0 = beat.decay_ps
    init = ModelParams(
        eta=eta,
        v0=0.7,
        tau_l_ps=tau_l0,
        tau_c_ps=100.0,
        g2_sp0=0.1,
        delta_f_hz=beat.delta_f_hz if beat.found else 0.0,
    )
    fit = analysis.fit_hom([sp_.hist, lp_.hist], [sq_.hist, lq_.hist], init, oversample=oversample)
    v, sv = analysis.v_hom0_from_fit(fit)
    return Campaign(truth, (sp_, sq_), (lp_, lq_), fit, eta, v, sv, background, beat)
