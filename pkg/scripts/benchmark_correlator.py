"""Correlator throughput: 1e7 events, tau_max = 1 us, 10 ps bins.

    python3 scripts/benchmark_correlator.py [--events 1e7] [--rate 1e7]
"""

import argparse
import time

import numpy as np

from homsim import correlator


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=float, default=1e7, help="total events over both channels")
    ap.add_argument("--rate", type=float, default=1e7, help="per-channel rate in Hz")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    n = int(args.events) // 2
    duration = int(n / args.rate * 1e12)
    rng = np.random.default_rng(args.seed)
    a = np.sort(rng.integers(0, duration, n))
    b = np.sort(rng.integers(0, duration, n))
    correlator.cross_correlate(a[:1000], b[:1000], 10, 1_000_000)  # JIT warm-up
    t0 = time.perf_counter()
    h = correlator.cross_correlate(a, b, 10, 1_000_000, duration_ps=duration)
    dt = time.perf_counter() - t0
    pairs = int(h.counts.sum())
    print(f"{2 * n:.3g} events, {h.counts.size} bins, {pairs:.3g} pairs in {dt:.2f} s "
          f"({2 * n / dt:.3g} events/s, {pairs / dt:.3g} pairs/s)")


if __name__ == "__main__":
    main()
