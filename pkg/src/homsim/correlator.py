"""Full-pair correlation histograms of picosecond timestamp streams.

Bins are half-open ``[tau_min + k*w, tau_min + (k+1)*w)`` in the signed delay
``tau = t_b - t_a``. Counts stay integer-exact; normalisation to g2 (with the
finite-duration edge correction) happens in :func:`normalize`.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numba
import numpy as np

from homsim.errors import ConfigError, DegenerateInputError, FormatError, PreconditionError

CSV_HEADER = ("tau_ps", "counts", "g2", "sigma")
NO_SELF = -1


@dataclass
class CorrelationHistogram:
    bin_width_ps: int
    tau_min_ps: int
    tau_max_ps: int
    counts: np.ndarray
    n_a: int = 0
    n_b: int = 0
    duration_ps: int = 0
    g2: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        span = self.tau_max_ps - self.tau_min_ps
        if self.bin_width_ps <= 0 or span <= 0 or span % self.bin_width_ps:
            raise ConfigError(
                f"window [{self.tau_min_ps}, {self.tau_max_ps}) is not a positive multiple of bin width {self.bin_width_ps}"
            )
        if len(self.counts) != self.n_bins:
            raise ConfigError(f"expected {self.n_bins} bins, got {len(self.counts)}")

    @property
    def n_bins(self) -> int:
        return (self.tau_max_ps - self.tau_min_ps) // self.bin_width_ps

    @property
    def bin_edges(self) -> np.ndarray:
        return self.tau_min_ps + self.bin_width_ps * np.arange(self.n_bins + 1, dtype=np.int64)

    @property
    def tau_lo(self) -> np.ndarray:
        return self.bin_edges[:-1]

    @property
    def bin_centers(self) -> np.ndarray:
        # mean of the integer delays a bin can hold
        return self.tau_lo + (self.bin_width_ps - 1) / 2.0

    @property
    def normalized(self) -> bool:
        return self.g2 is not None

    def same_binning(self, other: "CorrelationHistogram") -> bool:
        return (self.bin_width_ps, self.tau_min_ps, self.tau_max_ps) == (
            other.bin_width_ps,
            other.tau_min_ps,
            other.tau_max_ps,
        )

    @classmethod
    def empty(cls, bin_width_ps: int, tau_max_ps: int, tau_min_ps: Optional[int] = None) -> "CorrelationHistogram":
        tau_min_ps = -tau_max_ps if tau_min_ps is None else tau_min_ps
        n = (tau_max_ps - tau_min_ps) // bin_width_ps if bin_width_ps > 0 else 0
        return cls(bin_width_ps, tau_min_ps, tau_max_ps, np.zeros(max(n, 0), np.int64))


@numba.njit(cache=True, nogil=True)
def _sweep(a, b, tau_min, bin_width, counts, self_offset):
    """Add every pair with tau_min <= b[j] - a[i] < tau_min + n*w to counts.

    ``self_offset >= 0`` skips j == i + self_offset (autocorrelation);
    pass NO_SELF otherwise.
    """
    n_bins = counts.size
    hi = tau_min + bin_width * n_bins
    nb = b.size
    j0 = 0
    for i in range(a.size):
        lo_t = a[i] + tau_min
        hi_t = a[i] + hi
        while j0 < nb and b[j0] < lo_t:
            j0 += 1
        j = j0
        while j < nb and b[j] < hi_t:
            if self_offset < 0 or j != i + self_offset:
                counts[(b[j] - lo_t) // bin_width] += 1
            j += 1


def _as_times(x, name="stream") -> np.ndarray:
    arr = np.ascontiguousarray(getattr(x, "t_ps", x), dtype=np.int64)
    if arr.ndim != 1:
        raise PreconditionError(f"{name} must be one-dimensional")
    if arr.size > 1 and np.any(arr[1:] < arr[:-1]):
        raise PreconditionError(f"{name} is not sorted ascending")
    return arr


def _window(bin_width_ps: int, tau_max_ps: int, tau_min_ps: Optional[int]):
    bin_width_ps, tau_max_ps = int(bin_width_ps), int(tau_max_ps)
    tau_min_ps = -tau_max_ps if tau_min_ps is None else int(tau_min_ps)
    if bin_width_ps <= 0:
        raise ConfigError("bin width must be positive")
    span = tau_max_ps - tau_min_ps
    if span <= 0 or span % bin_width_ps:
        raise ConfigError(f"window [{tau_min_ps}, {tau_max_ps}) not divisible by bin width {bin_width_ps}")
    return bin_width_ps, tau_max_ps, tau_min_ps


def _default_duration(*streams) -> int:
    nonempty = [s for s in streams if s.size]
    if not nonempty:
        return 0
    return int(max(s[-1] for s in nonempty) - min(s[0] for s in nonempty) + 1)


def cross_correlate(stream_a, stream_b, bin_width_ps: int, tau_max_ps: int, duration_ps: Optional[int] = None,
                    tau_min_ps: Optional[int] = None) -> CorrelationHistogram:
    """Histogram of t_b - t_a over all pairs in the window, by sorted-merge sweep."""
    a, b = _as_times(stream_a, "stream_a"), _as_times(stream_b, "stream_b")
    w, tmax, tmin = _window(bin_width_ps, tau_max_ps, tau_min_ps)
    counts = np.zeros((tmax - tmin) // w, np.int64)
    _sweep(a, b, tmin, w, counts, NO_SELF)
    dur = _default_duration(a, b) if duration_ps is None else int(duration_ps)
    return CorrelationHistogram(w, tmin, tmax, counts, a.size, b.size, dur)


def auto_correlate(stream, bin_width_ps: int, tau_max_ps: int, duration_ps: Optional[int] = None,
                   tau_min_ps: Optional[int] = None) -> CorrelationHistogram:
    """Like :func:`cross_correlate` with a = b, excluding self-pairs."""
    a = _as_times(stream)
    w, tmax, tmin = _window(bin_width_ps, tau_max_ps, tau_min_ps)
    counts = np.zeros((tmax - tmin) // w, np.int64)
    _sweep(a, a, tmin, w, counts, 0)
    dur = _default_duration(a) if duration_ps is None else int(duration_ps)
    return CorrelationHistogram(w, tmin, tmax, counts, a.size, a.size, dur)


def normalize(hist: CorrelationHistogram) -> CorrelationHistogram:
    """g2 = counts * T / (n_a * n_b * w), edge-corrected by T / (T - |tau|).

    sigma = g2 / sqrt(counts); bins with zero counts get sigma = nan.
    """
    if hist.n_a <= 0 or hist.n_b <= 0 or hist.duration_ps <= 0:
        raise DegenerateInputError("normalisation needs nonzero counts in both streams and a positive duration")
    T = float(hist.duration_ps)
    tau = np.abs(hist.bin_centers)
    with np.errstate(divide="ignore", invalid="ignore"):
        edge = np.where(tau < T, T / (T - tau), np.nan)
        counts = hist.counts.astype(np.float64)
        g2 = counts * T / (float(hist.n_a) * float(hist.n_b) * hist.bin_width_ps) * edge
        sigma = np.where(counts > 0, g2 / np.sqrt(counts), np.nan)
    return replace(hist, g2=g2, sigma=sigma)


def merge(h1: CorrelationHistogram, h2: CorrelationHistogram) -> CorrelationHistogram:
    """Sum two histograms accumulated over disjoint data. Drops normalisation."""
    if not h1.same_binning(h2):
        raise ConfigError("cannot merge histograms with different binning")
    return CorrelationHistogram(
        h1.bin_width_ps,
        h1.tau_min_ps,
        h1.tau_max_ps,
        h1.counts + h2.counts,
        h1.n_a + h2.n_a,
        h1.n_b + h2.n_b,
        h1.duration_ps + h2.duration_ps,
    )


class StreamingCorrelator:
    """Incremental correlator fed with consecutive time slices.

    Every event in an update must be no earlier than every event already
    seen. Only a tail of width max(|tau_min|, tau_max) is retained.
    """

    def __init__(self, bin_width_ps: int, tau_max_ps: int, tau_min_ps: Optional[int] = None, auto: bool = False):
        self.bin_width_ps, self.tau_max_ps, self.tau_min_ps = _window(bin_width_ps, tau_max_ps, tau_min_ps)
        self.auto = auto
        self.counts = np.zeros((self.tau_max_ps - self.tau_min_ps) // self.bin_width_ps, np.int64)
        self.span = max(abs(self.tau_min_ps), abs(self.tau_max_ps))
        self._tail_a = np.empty(0, np.int64)
        self._tail_b = np.empty(0, np.int64)
        self._latest = None
        self.n_a = self.n_b = 0
        self._first = None

    def update(self, a_chunk, b_chunk=None) -> None:
        a = _as_times(a_chunk, "a_chunk")
        b = a if self.auto else _as_times(b_chunk if b_chunk is not None else [], "b_chunk")
        firsts = [x[0] for x in (a, b) if x.size]
        if not firsts:
            return
        if self._latest is not None and min(firsts) < self._latest:
            raise PreconditionError("update overlaps previously seen events")
        w, tmin = self.bin_width_ps, self.tau_min_ps
        if self.auto:
            combined = np.concatenate((self._tail_a, a))
            _sweep(a, combined, tmin, w, self.counts, self._tail_a.size)
            _sweep(self._tail_a, a, tmin, w, self.counts, NO_SELF)
        else:
            _sweep(a, np.concatenate((self._tail_b, b)), tmin, w, self.counts, NO_SELF)
            _sweep(self._tail_a, b, tmin, w, self.counts, NO_SELF)
        self.n_a += a.size
        self.n_b += b.size
        lasts = [x[-1] for x in (a, b) if x.size]
        self._latest = max(lasts)
        if self._first is None:
            self._first = min(firsts)
        cut = self._latest - self.span
        self._tail_a = np.concatenate((self._tail_a, a))
        self._tail_a = self._tail_a[self._tail_a >= cut]
        if not self.auto:
            self._tail_b = np.concatenate((self._tail_b, b))
            self._tail_b = self._tail_b[self._tail_b >= cut]

    def result(self, duration_ps: Optional[int] = None) -> CorrelationHistogram:
        if duration_ps is None:
            duration_ps = 0 if self._latest is None else int(self._latest - self._first + 1)
        return CorrelationHistogram(
            self.bin_width_ps,
            self.tau_min_ps,
            self.tau_max_ps,
            self.counts.copy(),
            self.n_a,
            self.n_b,
            int(duration_ps),
        )


def correlate_chunked(stream_a, stream_b, bin_width_ps: int, tau_max_ps: int, chunk_ps: int,
                      duration_ps: Optional[int] = None, tau_min_ps: Optional[int] = None,
                      workers: int = 1) -> CorrelationHistogram:
    """Chunk-parallel correlation: chunk-local pairs, a boundary pass between
    neighbouring chunks, then an associative merge. ``stream_b=None`` means
    autocorrelation of ``stream_a``."""
    auto = stream_b is None
    a = _as_times(stream_a, "stream_a")
    b = a if auto else _as_times(stream_b, "stream_b")
    w, tmax, tmin = _window(bin_width_ps, tau_max_ps, tau_min_ps)
    if chunk_ps < max(abs(tmin), abs(tmax)):
        raise ConfigError("chunk length must be at least the correlation window half-width")
    n_bins = (tmax - tmin) // w
    t0 = min([x[0] for x in (a, b) if x.size], default=0)
    t1 = max([x[-1] for x in (a, b) if x.size], default=0)
    edges = np.arange(t0, t1 + chunk_ps + 1, chunk_ps, dtype=np.int64)
    ia = np.searchsorted(a, edges)
    ib = ia if auto else np.searchsorted(b, edges)
    pieces = [(a[ia[k]:ia[k + 1]], b[ib[k]:ib[k + 1]]) for k in range(len(edges) - 1)]

    def local(k):
        pa, pb = pieces[k]
        c = np.zeros(n_bins, np.int64)
        _sweep(pa, pb, tmin, w, c, 0 if auto else NO_SELF)
        if k + 1 < len(pieces):
            na, nb = pieces[k + 1]
            _sweep(pa, nb, tmin, w, c, NO_SELF)
            _sweep(na, pb, tmin, w, c, NO_SELF)
        return CorrelationHistogram(w, tmin, tmax, c)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(local, range(len(pieces))))
    else:
        parts = [local(k) for k in range(len(pieces))]
    total = CorrelationHistogram.empty(w, tmax, tmin)
    for h in parts:
        total = merge(total, h)
    dur = _default_duration(a, b) if duration_ps is None else int(duration_ps)
    return replace(total, n_a=a.size, n_b=b.size, duration_ps=dur)


def write_histogram_csv(hist: CorrelationHistogram, path) -> None:
    """Write ``tau_ps,counts,g2,sigma`` rows; ``tau_ps`` is the bin's lower edge."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(histogram_csv_text(hist))


def histogram_csv_text(hist: Optional[CorrelationHistogram]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    if hist is not None:
        g2 = hist.g2 if hist.g2 is not None else np.full(hist.n_bins, np.nan)
        sigma = hist.sigma if hist.sigma is not None else np.full(hist.n_bins, np.nan)
        for lo, c, g, s in zip(hist.tau_lo, hist.counts, g2, sigma):
            writer.writerow((int(lo), int(c), repr(float(g)), repr(float(s))))
    return buf.getvalue()


def read_histogram_csv(path) -> CorrelationHistogram:
    """Read a histogram CSV back. Stream totals are not stored and read as 0."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not UTF-8") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise FormatError(f"{path}: expected header {','.join(CSV_HEADER)}")
    body = rows[1:]
    if len(body) < 2:
        raise FormatError(f"{path}: need at least two bins to infer the bin width")
    try:
        tau = np.array([int(r[0]) for r in body], np.int64)
        counts = np.array([int(r[1]) for r in body], np.int64)
        g2 = np.array([float(r[2]) for r in body])
        sigma = np.array([float(r[3]) for r in body])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed row") from exc
    steps = np.diff(tau)
    if np.any(steps != steps[0]) or steps[0] <= 0:
        raise FormatError(f"{path}: tau_ps column is not uniformly spaced")
    w = int(steps[0])
    return CorrelationHistogram(w, int(tau[0]), int(tau[-1]) + w, counts, g2=g2, sigma=sigma)
