"""Beam-splitter mixing of laser and single-photon streams into detector clicks.

Two engines are provided:

* ``ROUTING``: every photon leaves through port 1 with probability
  ``(1 + v cos(dphi(t))) / 2`` where ``dphi`` is the instantaneous
  laser/single-photon phase difference. This is interference of classical
  fields and cannot push the visibility above 0.5.
* ``KERNEL``: photons are routed 50/50, except that single photons paired
  with a laser photon are routed by the two-photon output distribution
  ``{1+K, 1-K, 1-K, 1+K}/4``, reproducing the fourth-order coincidence
  statistics pair by pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numba
import numpy as np

from homsim.errors import ConfigError, DomainError, PreconditionError
from homsim.model import ModelParams, beat, g1_envelope
from homsim.synth import gen_laser_phase, keyed_rng

PARALLEL = "parallel"
PERPENDICULAR = "perpendicular"
ROUTING = "routing"
KERNEL = "kernel"

D1 = 0
D2 = 1
CHANNEL_NAMES = {D1: "D1", D2: "D2"}

STREAM_ROUTING = 10
STREAM_DETECTOR = 11
STREAM_DARK = 12


class ClickRecord(NamedTuple):
    t_ps: int
    channel: int


def iter_clicks(clicks_d1, clicks_d2) -> Iterator[ClickRecord]:
    """Time-ordered ClickRecords from two channel arrays."""
    t = np.concatenate((clicks_d1, clicks_d2))
    ch = np.concatenate((np.full(len(clicks_d1), D1), np.full(len(clicks_d2), D2)))
    order = np.argsort(t, kind="stable")
    for i in order:
        yield ClickRecord(int(t[i]), int(ch[i]))


@dataclass
class InterferometerConfig:
    """Beam-splitter topology and engine choice.

    ``amp_overlap`` is the field-level mode overlap used by the routing
    engine; its square must equal ``model.v0`` unless ``override_overlap``.
    ``window_factor`` sets the kernel pairing window in units of tau_l.
    ``rate_compensation`` divides the pair kernel by the probability that a
    pair at that separation is mutually nearest (see
    :func:`mutual_probability`), which removes the pairing loss at high
    count rates.
    """

    pol: str = PARALLEL
    same_port_hbt: bool = False
    amp_overlap: Optional[float] = None
    model: ModelParams = field(default_factory=ModelParams)
    engine: str = KERNEL
    seed: int = 0
    override_overlap: bool = False
    window_factor: float = 5.0
    rate_compensation: bool = True

    def __post_init__(self):
        if self.pol not in (PARALLEL, PERPENDICULAR):
            raise ConfigError(f"unknown polarisation {self.pol!r}")
        if self.engine not in (ROUTING, KERNEL):
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.amp_overlap is None:
            self.amp_overlap = math.sqrt(self.model.v0)
        if not 0 <= self.amp_overlap <= 1:
            raise DomainError("amp_overlap must lie in [0, 1]")
        if not self.override_overlap and abs(self.amp_overlap**2 - self.model.v0) >= 1e-9:
            raise ConfigError(
                f"amp_overlap^2 = {self.amp_overlap**2:.12g} inconsistent with v0 = {self.model.v0}"
            )
        if self.window_factor <= 0:
            raise DomainError("window_factor must be > 0")


@dataclass
class DetectorConfig:
    jitter_sigma_ps: float = 0.0
    dead_time_ps: int = 0
    dark_rate_hz: float = 0.0
    efficiency: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.jitter_sigma_ps, self.dead_time_ps, self.dark_rate_hz) < 0:
            raise DomainError("detector parameters must be >= 0")
        if not 0 <= self.efficiency <= 1:
            raise DomainError("efficiency must lie in [0, 1]")


def _times(stream) -> np.ndarray:
    t = np.asarray(getattr(stream, "t_ps", stream), dtype=np.int64)
    if t.size > 1 and np.any(t[1:] < t[:-1]):
        raise PreconditionError("event stream is not sorted ascending")
    return t


def routing_visibility(eta: float, amp_overlap: float) -> float:
    """Fringe contrast 2*sqrt(eta)*a/(1+eta) of the split intensity."""
    return 2.0 * math.sqrt(eta) * amp_overlap / (1.0 + eta)


def _to_detectors(t, port1, same_port_hbt, rng):
    if same_port_hbt:
        t = t[port1]
        to_d1 = rng.random(t.size) < 0.5
        return t[to_d1], t[~to_d1]
    return t[port1], t[~port1]


def route_phase_engine(laser_events, sp_events, cfg: InterferometerConfig):
    """Semiclassical routing by the instantaneous phase difference.

    The laser phase is sampled on the merged time grid of both streams (a
    Wiener walk with variance 2*dt/tau_l plus the detuning ramp); the
    single-photon field has the fixed phase 0.
    """
    lt, st = _times(laser_events), _times(sp_events)
    t = np.concatenate((lt, st))
    order = np.argsort(t, kind="stable")
    t = t[order]
    rng = keyed_rng(cfg.seed, STREAM_ROUTING)
    if cfg.pol == PARALLEL:
        v = routing_visibility(cfg.model.eta, cfg.amp_overlap)
        dphi = gen_laser_phase(t, cfg.model.tau_l_ps, cfg.model.delta_f_hz, cfg.seed)
        p1 = 0.5 * (1.0 + v * np.cos(dphi))
    else:
        p1 = np.full(t.size, 0.5)
    port1 = rng.random(t.size) < p1
    return _to_detectors(t, port1, cfg.same_port_hbt, rng)


def pair_kernel(pair_type: str, pol: str, same_port: bool, tau_ps, model: ModelParams):
    """Relative coincidence weight of a photon pair at delay ``tau_ps``.

    Only a laser/single-photon pair in parallel polarisation interferes:
    ``1 -+ v0*|g1(tau)|*cos(2*pi*df*tau)`` across / within an output port.
    """
    if pair_type not in ("LL", "SS", "LS", "SL"):
        raise ValueError(f"unknown pair type {pair_type!r}")
    tau = np.asarray(tau_ps, dtype=np.float64)
    if pair_type in ("LS", "SL") and pol == PARALLEL:
        k = model.v0 * np.asarray(g1_envelope(tau, model.tau_l_ps)) * np.asarray(beat(tau, model.delta_f_hz))
        w = 1.0 + k if same_port else 1.0 - k
    else:
        w = np.ones_like(tau)
    return float(w) if np.ndim(w) == 0 else w


def _nearest(ref: np.ndarray, query: np.ndarray):
    """Index into ``ref`` of the nearest element to each query (ties -> earlier)."""
    pos = np.searchsorted(ref, query)
    left = np.clip(pos - 1, 0, max(ref.size - 1, 0))
    right = np.clip(pos, 0, max(ref.size - 1, 0))
    dl = np.abs(query - ref[left])
    dr = np.abs(ref[right] - query)
    return np.where(dr < dl, right, left)


def mutual_pairs(lt: np.ndarray, st: np.ndarray, window_ps: float):
    """Single-photon/laser pairs that are each other's nearest neighbour
    within ``window_ps``. Returns (sp_index, laser_index) arrays."""
    if lt.size == 0 or st.size == 0:
        empty = np.empty(0, np.int64)
        return empty, empty
    nl = _nearest(lt, st)
    ns = _nearest(st, lt)
    s_idx = np.arange(st.size)
    ok = (ns[nl] == s_idx) & (np.abs(st - lt[nl]) <= window_ps)
    return s_idx[ok], nl[ok]


def mutual_probability(d_ps, rate_laser_hz: float, rate_sp_hz: float, g2_sp0: float, tau_c_ps: float):
    """Probability that a laser and a single photon ``d_ps`` apart are each
    other's nearest neighbour.

    No other laser photon may lie within d of the single photon (Poisson:
    exp(-2 r_L d)), and no other single photon within d of the laser photon;
    the latter region spans delays (0, 2d) from the paired single photon,
    whose neighbours are depleted by the antibunching dip.
    """
    d = np.abs(np.asarray(d_ps, dtype=np.float64))
    r_l, r_s = rate_laser_hz * 1e-12, rate_sp_hz * 1e-12
    sp_mean = r_s * (2 * d - (1 - g2_sp0) * tau_c_ps * -np.expm1(-2 * d / tau_c_ps))
    return np.exp(-2 * r_l * d - sp_mean)


def sample_kernel_engine(laser_events, sp_events, cfg: InterferometerConfig):
    """Pair-kernel routing; see module docstring.

    With ``cfg.rate_compensation`` the kernel of each matched pair is
    K / P_mutual (clipped to [-1, 1]) with the stream rates estimated from
    the data, so that the pair correlation averaged over all configurations
    equals K.
    """
    lt, st = _times(laser_events), _times(sp_events)
    rng = keyed_rng(cfg.seed, STREAM_ROUTING)
    laser_p1 = rng.random(lt.size) < 0.5
    sp_p1 = rng.random(st.size) < 0.5
    if cfg.pol == PARALLEL and cfg.model.v0 > 0:
        m = cfg.model
        si, li = mutual_pairs(lt, st, cfg.window_factor * m.tau_l_ps)
        tau = st[si] - lt[li]
        k = m.v0 * np.asarray(g1_envelope(tau, m.tau_l_ps)) * np.asarray(beat(tau, m.delta_f_hz))
        if cfg.rate_compensation and si.size:
            span = float(max(lt[-1], st[-1]) - min(lt[0], st[0]) + 1)
            p = mutual_probability(tau, lt.size / span * 1e12, st.size / span * 1e12, m.g2_sp0, m.tau_c_ps)
            k = np.clip(k / p, -1.0, 1.0)
        same = rng.random(si.size) < 0.5 * (1.0 + k)
        sp_p1[si] = np.where(same, laser_p1[li], ~laser_p1[li])
    t = np.concatenate((lt, st))
    port1 = np.concatenate((laser_p1, sp_p1))
    order = np.argsort(t, kind="stable")
    return _to_detectors(t[order], port1[order], cfg.same_port_hbt, rng)


def interfere(laser_events, sp_events, cfg: InterferometerConfig):
    """Dispatch to the configured engine; returns (clicks_D1, clicks_D2)."""
    if cfg.engine == ROUTING:
        return route_phase_engine(laser_events, sp_events, cfg)
    return sample_kernel_engine(laser_events, sp_events, cfg)


@numba.njit(cache=True)
def _dead_time_mask(t, dead):
    keep = np.zeros(t.size, np.bool_)
    last = np.int64(-(2**62))
    gap = max(dead, 1)  # equal timestamps always collapse
    for i in range(t.size):
        if t[i] - last >= gap:
            keep[i] = True
            last = t[i]
    return keep


def apply_detector_effects(clicks, det: DetectorConfig, channel: int = 0, duration_ps: Optional[int] = None) -> np.ndarray:
    """Efficiency, Gaussian jitter, dark counts and non-paralysable dead time,
    in that order. ``channel`` keys the random stream so detectors sharing a
    seed stay independent."""
    t = _times(clicks)
    rng = keyed_rng(det.seed, STREAM_DETECTOR, channel)
    if det.efficiency < 1:
        t = t[rng.random(t.size) < det.efficiency]
    if det.jitter_sigma_ps > 0:
        t = np.maximum(t + np.rint(rng.normal(0.0, det.jitter_sigma_ps, t.size)).astype(np.int64), 0)
        t = np.sort(t)
    if det.dark_rate_hz > 0:
        span = duration_ps if duration_ps is not None else (int(t[-1]) + 1 if t.size else 0)
        drng = keyed_rng(det.seed, STREAM_DARK, channel)
        n = drng.poisson(det.dark_rate_hz * span * 1e-12)
        t = np.sort(np.concatenate((t, drng.integers(0, max(span, 1), n, dtype=np.int64))))
    return t[_dead_time_mask(t, np.int64(det.dead_time_ps))]
