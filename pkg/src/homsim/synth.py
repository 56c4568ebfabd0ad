"""Photon-emission event streams for the laser and the single-photon source.

Random numbers come from counter-based Philox generators keyed by
``(seed, stream, chunk)`` where ``chunk`` indexes fixed-length time slices.
The seed-to-stream mapping therefore does not depend on how the work is
split between workers.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numba
import numpy as np

from homsim.errors import DomainError, PreconditionError

LASER = 0
SP = 1

# stream identifiers for the keyed generators
STREAM_LASER_TIMES = 1
STREAM_LASER_PHASE = 2
STREAM_SP_TIMES = 3
STREAM_PHASE_OFFSET = 4

DEFAULT_CHUNK_PS = 10**11  # 100 ms
RARITY_WARN = 1e-2


def keyed_rng(seed: int, stream: int, chunk: int = 0) -> np.random.Generator:
    """Philox generator for one (seed, stream, chunk) key."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(chunk)))
    return np.random.Generator(np.random.Philox(ss))


class PhotonEvent(NamedTuple):
    t_ps: int
    source: int
    phase_rad: float


@dataclass(frozen=True)
class EventStream:
    """Struct-of-arrays photon stream, sorted by time."""

    t_ps: np.ndarray
    source: np.ndarray
    phase_rad: np.ndarray

    def __len__(self) -> int:
        return len(self.t_ps)

    def __iter__(self) -> Iterator[PhotonEvent]:
        for t, s, ph in zip(self.t_ps, self.source, self.phase_rad):
            yield PhotonEvent(int(t), int(s), float(ph))

    @classmethod
    def empty(cls, source: int = LASER) -> "EventStream":
        return cls(np.empty(0, np.int64), np.empty(0, np.uint8), np.empty(0, np.float64))


@dataclass
class SynthConfig:
    """Source settings. Rates are mean emitted photon rates in Hz."""

    rate_laser_hz: float = 2e5
    rate_sp_hz: float = 1e6
    duration_ps: int = 10**12
    tau_l_ps: float = 150_000.0
    tau_c_ps: float = 115.0
    g2_sp0: float = 0.03
    delta_f_hz: float = 0.0
    seed: int = 0
    chunk_ps: int = DEFAULT_CHUNK_PS
    workers: int = 1

    def __post_init__(self):
        if self.rate_laser_hz < 0 or self.rate_sp_hz < 0:
            raise DomainError("rates must be >= 0")
        if self.duration_ps < 0:
            raise DomainError("duration must be >= 0")
        if not (self.tau_l_ps > 0 and self.tau_c_ps > 0):
            raise DomainError("coherence and correlation times must be > 0")
        if not 0 <= self.g2_sp0 <= 1:
            raise DomainError("g2_sp0 must lie in [0, 1]")
        if self.chunk_ps <= 0:
            raise DomainError("chunk_ps must be > 0")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        self.duration_ps = int(self.duration_ps)


def _chunks(duration_ps: int, chunk_ps: int):
    n = -(-duration_ps // chunk_ps)
    return [(k, k * chunk_ps, min(chunk_ps, duration_ps - k * chunk_ps)) for k in range(n)]


def _map(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _poisson_times(rate_hz: float, seed: int, stream: int, duration_ps: int, chunk_ps: int, workers: int, extra_uniform=False):
    """Homogeneous Poisson process on [0, duration) at 1 ps resolution."""

    def one(chunk):
        k, start, length = chunk
        rng = keyed_rng(seed, stream, k)
        n = rng.poisson(rate_hz * length * 1e-12)
        t = np.sort(rng.integers(0, length, n, dtype=np.int64)) + start
        u = rng.random(n) if extra_uniform else None
        return t, u

    parts = _map(one, _chunks(duration_ps, chunk_ps), workers)
    if not parts:
        return np.empty(0, np.int64), np.empty(0)
    t = np.concatenate([p[0] for p in parts])
    u = np.concatenate([p[1] for p in parts]) if extra_uniform else None
    # Draws sharing a 1 ps tick are pushed to the next free tick. Dropping
    # them instead would remove every same-source pair at zero delay and
    # deplete the zero-delay bin of a cross-correlation; pushing moves those
    # pairs to +-1 ps symmetrically.
    i = np.arange(t.size, dtype=np.int64)
    t = np.maximum.accumulate(t - i) + i
    keep = t < duration_ps
    return t[keep], (u[keep] if extra_uniform else None)


def gen_laser_events(cfg: SynthConfig) -> EventStream:
    """Poissonian laser photons carrying the phase-diffusing optical phase."""
    t, _ = _poisson_times(cfg.rate_laser_hz, cfg.seed, STREAM_LASER_TIMES, cfg.duration_ps, cfg.chunk_ps, cfg.workers)
    phase = gen_laser_phase(t, cfg.tau_l_ps, cfg.delta_f_hz, cfg.seed, chunk_ps=cfg.chunk_ps)
    return EventStream(t, np.full(t.size, LASER, np.uint8), phase)


def _detuning_phase(times: np.ndarray, delta_f_hz: float) -> np.ndarray:
    # 2*pi*frac(df*t) with t split into whole seconds to keep the fraction accurate
    sec, rem = np.divmod(times, 10**12)
    cycles = np.mod(delta_f_hz * sec.astype(np.float64), 1.0) + delta_f_hz * rem.astype(np.float64) * 1e-12
    return 2.0 * math.pi * np.mod(cycles, 1.0)


def gen_laser_phase(times, tau_l_ps: float, delta_f_hz: float, seed: int, chunk_ps: int = DEFAULT_CHUNK_PS) -> np.ndarray:
    """Laser phase 2*pi*df*t + W(t) sampled at ``times`` (ps), wrapped to [0, 2*pi).

    W is a Wiener random walk whose increments over a gap dt have variance
    2*dt/tau_l, so that <exp(i(W(t+tau) - W(t)))> = exp(-|tau|/tau_l).
    """
    times = np.asarray(times, dtype=np.int64)
    if not tau_l_ps > 0:
        raise DomainError("tau_l_ps must be > 0")
    if times.size and np.any(np.diff(times) < 0):
        raise PreconditionError("times must be sorted ascending")
    if times.size == 0:
        return np.empty(0, np.float64)
    offset = keyed_rng(seed, STREAM_PHASE_OFFSET).uniform(0.0, 2.0 * math.pi)
    if math.isinf(tau_l_ps):
        walk = np.zeros(times.size)
    else:
        # one standard normal per event, drawn from the generator of its time chunk
        chunk_idx = times // chunk_ps
        bounds = np.flatnonzero(np.diff(chunk_idx)) + 1
        starts = np.concatenate(([0], bounds))
        ends = np.concatenate((bounds, [times.size]))
        z = np.empty(times.size)
        for s, e in zip(starts, ends):
            z[s:e] = keyed_rng(seed, STREAM_LASER_PHASE, int(chunk_idx[s])).standard_normal(e - s)
        gaps = np.empty(times.size, np.float64)
        gaps[0] = 0.0
        gaps[1:] = np.diff(times)
        walk = np.cumsum(z * np.sqrt(2.0 * gaps / tau_l_ps))
    phase = offset + np.mod(walk, 2.0 * math.pi) + _detuning_phase(times, delta_f_hz)
    return np.mod(phase, 2.0 * math.pi)


@numba.njit(cache=True)
def _thin_renewal(cand, u, g2_sp0, tau_c_ps):
    keep = np.zeros(cand.size, np.bool_)
    last = -1e300
    depth = 1.0 - g2_sp0
    for i in range(cand.size):
        t = float(cand[i])
        if u[i] < 1.0 - depth * math.exp(-(t - last) / tau_c_ps):
            keep[i] = True
            last = t
    return keep


def candidate_rate(rate_sp_hz: float, g2_sp0: float, tau_c_ps: float) -> float:
    """Candidate rate whose thinned output has mean rate ``rate_sp_hz``.

    The mean gap after thinning is 1/r0 + (1 - g2_sp0)*tau_c to first order.
    """
    x = rate_sp_hz * (1.0 - g2_sp0) * tau_c_ps * 1e-12
    if x >= 1:
        raise DomainError("single-photon rate too high for the antibunching time")
    return rate_sp_hz / (1.0 - x)


def gen_sp_events(cfg: SynthConfig) -> EventStream:
    """Antibunched single-photon stream by renewal thinning.

    Each candidate of a Poisson stream is accepted with probability
    g2_sp(t - t_last_accepted); in the sparse limit the pair correlation of
    the output follows the model dip to first order in rate*tau_c. All
    photons carry phase 0, the frame of the source's parent laser.
    """
    bias = cfg.rate_sp_hz * cfg.tau_c_ps * 1e-12
    if bias > RARITY_WARN:
        warnings.warn(
            f"rate_sp*tau_c = {bias:.3g} > {RARITY_WARN}; pair correlation biased by up to ~{bias:.2g}",
            RuntimeWarning,
            stacklevel=2,
        )
    if cfg.rate_sp_hz == 0 or cfg.duration_ps == 0:
        return EventStream.empty(SP)
    r0 = candidate_rate(cfg.rate_sp_hz, cfg.g2_sp0, cfg.tau_c_ps)
    cand, u = _poisson_times(r0, cfg.seed, STREAM_SP_TIMES, cfg.duration_ps, cfg.chunk_ps, cfg.workers, extra_uniform=True)
    t = cand[_thin_renewal(cand, u, cfg.g2_sp0, cfg.tau_c_ps)]
    return EventStream(t, np.full(t.size, SP, np.uint8), np.zeros(t.size))
