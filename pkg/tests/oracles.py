"""Independent reference computations used by the test-suite.

Nothing here imports the code paths it is used to check.
"""

import cmath
import itertools
import math

import numpy as np


def fourth_order_moment_g2(tau_ps, eta, v0, r, t, tau_l_ps, tau_c_ps, g2_sp0, delta_f_hz, ports, parallel=True):
    """Normalised intensity correlation <I_a(0) I_b(tau)> / (<I_a><I_b>).

    Expands the normal-ordered product E_a*(0) E_b*(tau) E_b(tau) E_a(0) for
    output fields built from a laser (intensity eta, g2 = 1, coherence
    exp(-|tau|/tau_l), detuned by delta_f) and a single-photon stream
    (intensity 1, |g1| = 1, exponential antibunching dip), summing all 16
    source assignments. Source phases are independent and uniformly random,
    so only phase-balanced terms survive.

    ``ports`` is (a, b) with entries 1 or 2; port 1 = sqrt(R) E_L + sqrt(T) E_SP,
    port 2 = sqrt(T) E_L - sqrt(R) E_SP.
    """
    coef = {
        1: {"L": math.sqrt(r), "S": math.sqrt(t)},
        2: {"L": math.sqrt(t), "S": -math.sqrt(r)},
    }
    # polarisation/spatial mode overlap <u_L|u_S>
    overlap = {("L", "L"): 1.0, ("S", "S"): 1.0}
    overlap[("L", "S")] = overlap[("S", "L")] = math.sqrt(v0) if parallel else 0.0
    intensity = {"L": eta, "S": 1.0}
    tau_s = tau_ps * 1e-12

    def g1(src, dt):
        # <E*(t) E(t+dt)> / I for one source, dt in seconds
        if src == "L":
            return math.exp(-abs(dt) / (tau_l_ps * 1e-12)) * cmath.exp(-2j * math.pi * delta_f_hz * dt)
        return 1.0

    def g2_same(src, dt):
        if src == "L":
            return 1.0
        return 1.0 - (1.0 - g2_sp0) * math.exp(-abs(dt) / (tau_c_ps * 1e-12))

    a, b = ports
    total = 0.0 + 0.0j
    # order: E_a*(0) s1, E_b*(tau) s2, E_b(tau) s3, E_a(0) s4
    for s1, s2, s3, s4 in itertools.product("LS", repeat=4):
        if sorted((s1, s2)) != sorted((s3, s4)):
            continue
        amp = coef[a][s1] * coef[b][s2] * coef[b][s3] * coef[a][s4]
        # pairing of conjugated with unconjugated mode functions
        mode = overlap[(s1, s4)] * overlap[(s2, s3)]
        if s1 == s2 == s3 == s4:
            val = intensity[s1] ** 2 * g2_same(s1, tau_s)
        elif s1 == s4:
            # intensities of different sources at the two times
            val = intensity[s1] * intensity[s2]
        else:
            # exchange term: s1 == s3, s2 == s4
            # <E_s1*(0) E_s1(tau)> <E_s2*(tau) E_s2(0)>
            val = intensity[s1] * intensity[s2] * g1(s1, tau_s) * np.conj(g1(s2, tau_s))
        total += amp * mode * val

    def mean_intensity(port):
        return sum(coef[port][s] ** 2 * intensity[s] for s in "LS")

    return (total / (mean_intensity(a) * mean_intensity(b))).real


def brute_force_histogram(a, b, tau_min, bin_width, n_bins, exclude_self=False):
    """O(n*m) double loop over all pairs."""
    counts = [0] * n_bins
    hi = tau_min + bin_width * n_bins
    for i, ta in enumerate(a):
        for j, tb in enumerate(b):
            if exclude_self and i == j:
                continue
            d = int(tb) - int(ta)
            if tau_min <= d < hi:
                counts[(d - tau_min) // bin_width] += 1
    return np.array(counts, dtype=np.int64)


def pair_counts_searchsorted(a, b, edges, exclude_self=False):
    """Pairs with edges[k] <= b - a < edges[k+1], one binary search per edge."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    cum = np.array([np.searchsorted(b, a + e, side="left").sum() for e in edges], dtype=np.int64)
    counts = np.diff(cum)
    if exclude_self:
        k = np.searchsorted(edges, 0, side="right") - 1
        if 0 <= k < counts.size:
            counts[k] -= a.size
    return counts


def binned_mean(fn, edges):
    """Average of fn over the integer delays held by each half-open bin."""
    return np.array([np.mean(fn(np.arange(lo, hi))) for lo, hi in zip(edges[:-1], edges[1:])])


def auto_pair_counts_lagged(t, edges):
    """Autocorrelation counts from k-th neighbour differences t[i+k] - t[i]."""
    t = np.asarray(t, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64)
    reach = max(abs(int(edges[0])), abs(int(edges[-1])))
    counts = np.zeros(edges.size - 1, np.int64)
    k = 1
    while k < t.size:
        d = t[k:] - t[:-k]
        d = d[d <= reach]
        if d.size == 0:
            break
        for signed in (d, -d):
            idx = np.searchsorted(edges, signed, side="right") - 1
            ok = (idx >= 0) & (idx < counts.size)
            counts += np.bincount(idx[ok], minlength=counts.size)
        k += 1
    return counts
