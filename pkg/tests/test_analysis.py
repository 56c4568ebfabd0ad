import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homsim import analysis as an
from homsim import model as m
from homsim.correlator import CorrelationHistogram
from homsim.errors import BinWidthError, ConfigError, DegenerateInputError
from homsim.lsq import levenberg_marquardt

DEFAULT = m.ModelParams()


def bin_average(fn, w, tmin, tmax, p, oversample=1, jitter=0.0):
    h = CorrelationHistogram(w, tmin, tmax, np.zeros((tmax - tmin) // w, np.int64))
    pts, wts = an._sample_points(h, oversample, jitter)
    return np.asarray(fn(pts, p)).reshape(pts.shape) @ wts


def make_hist(g2, w, tmin, tmax, counts_scale=1e4, rng=None):
    """Histogram with given expected g2; Poisson noise if rng is given."""
    expected = g2 * counts_scale
    counts = rng.poisson(expected) if rng is not None else np.rint(expected).astype(np.int64)
    counts = np.asarray(counts, np.int64)
    g = counts / counts_scale if rng is not None else np.asarray(g2, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.where(counts > 0, g / np.sqrt(np.maximum(counts, 1)), np.nan)
    return CorrelationHistogram(w, tmin, tmax, counts, 1, 1, 1, g2=g, sigma=sigma)


def model_pair(p, w, tmax, scale=1e4, rng=None, oversample=1, jitter=0.0):
    out = []
    for fn in (m.g2_cross_perp, m.g2_cross_par):
        g = bin_average(fn, w, -tmax, tmax, p, oversample, jitter)
        out.append(make_hist(g, w, -tmax, tmax, scale, rng))
    return out


# -- visibility ------------------------------------------------------------


def test_visibility_examples():
    assert an.visibility(0.3264, 0.0903) == pytest.approx(0.7234, abs=1e-4)
    assert an.visibility(0.7, 0.7) == 0.0
    assert an.visibility(0.3264, 0.5625, same_port=True) == pytest.approx(0.7234, abs=2e-4)
    exact = an.visibility(m.g2_cross_perp(0, DEFAULT), m.g2_auto_par(0, DEFAULT), same_port=True)
    assert exact == pytest.approx(m.v_hom(0, DEFAULT), abs=1e-12)


def test_visibility_curve_from_histograms():
    hp, hq = model_pair(DEFAULT, 10, 2000, scale=1e6)
    vc = an.visibility_curve(hp, hq)
    zero = np.flatnonzero((hp.tau_lo <= 0) & (hp.tau_lo + 10 > 0))[0]
    assert vc.mask[zero]
    expected = (hp.g2 - hq.g2) / hp.g2
    np.testing.assert_allclose(vc.v[vc.mask], expected[vc.mask], rtol=1e-12)
    # first-order propagation against a direct formula
    k = zero
    s = math.hypot(hq.g2[k] * hp.sigma[k] / hp.g2[k] ** 2, hq.sigma[k] / hp.g2[k])
    assert vc.sigma[k] == pytest.approx(s, rel=1e-12)


def test_visibility_identical_is_zero():
    hp, _ = model_pair(DEFAULT, 100, 5000)
    vc = an.visibility_curve(hp, hp)
    assert np.all(vc.v[vc.mask] == 0)


def test_visibility_masks_low_bins():
    g = np.array([1.0, 0.01, 1.0, 1.0])
    sig = np.array([0.01, 0.01, 0.01, np.nan])
    h = CorrelationHistogram(10, -20, 20, np.ones(4, np.int64), g2=g, sigma=sig)
    vc = an.visibility_curve(h, h)
    assert vc.mask.tolist() == [True, False, True, False]
    assert np.isnan(vc.v[1])


def test_visibility_errors():
    a, _ = model_pair(DEFAULT, 10, 1000)
    b, _ = model_pair(DEFAULT, 20, 1000)
    with pytest.raises(ConfigError):
        an.visibility_curve(a, b)
    dead = CorrelationHistogram(10, -20, 20, np.zeros(4, np.int64), g2=np.zeros(4), sigma=np.full(4, np.nan))
    with pytest.raises(DegenerateInputError):
        an.visibility_curve(dead, dead)


def test_first_zero_crossing_10mhz():
    p = DEFAULT.with_(delta_f_hz=10e6)
    tau = np.arange(-100_000, 100_001, 100.0)
    z = an.first_zero_crossing(tau, m.v_hom(tau, p))
    assert z == pytest.approx(25_000, abs=100)
    assert an.first_zero_crossing(tau, np.ones_like(tau)) is None


# -- least squares core ------------------------------------------------------


def test_lm_solves_linear_problem_exactly():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(30, 4))
    y = rng.normal(size=30)
    res = levenberg_marquardt(lambda x: A @ x - y, lambda x: A, np.zeros(4))
    np.testing.assert_allclose(res.x, np.linalg.lstsq(A, y, rcond=None)[0], rtol=1e-8, atol=1e-10)
    assert res.converged


def test_lm_respects_bounds():
    res = levenberg_marquardt(lambda x: x - 5.0, lambda x: np.eye(1), np.array([0.0]), np.array([-1.0]), np.array([2.0]))
    assert res.x[0] == 2.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.1, 5.0), st.integers(0, 10**6))
def test_lm_cost_monotone(a, k, seed):
    rng = np.random.default_rng(seed)
    x = np.linspace(0, 5, 60)
    y = a * np.exp(-x / k) + rng.normal(0, 0.01, x.size)

    def r(p):
        return p[0] * np.exp(-x / p[1]) - y

    def j(p):
        e = np.exp(-x / p[1])
        return np.column_stack((e, p[0] * e * x / p[1] ** 2))

    res = levenberg_marquardt(r, j, np.array([1.0, 1.0]), np.array([-np.inf, 1e-3]), np.array([np.inf, np.inf]))
    assert np.all(np.diff(res.costs) < 0)


# -- model fit -----------------------------------------------------------------


SHORT = (10, 2_000)
LONG = (2_000, 1_000_000)


def perturbed(p, f=1.15):
    return p.with_(eta=p.eta * f, v0=min(p.v0 / f, 1.0), tau_l_ps=p.tau_l_ps * f, tau_c_ps=p.tau_c_ps / f,
                   g2_sp0=min(p.g2_sp0 * f, 1.0), delta_f_hz=p.delta_f_hz * (1 + (f - 1) / 50))


def test_eta_v0_g0_degenerate():
    # curves depend on (1-g0)/(1+eta)^2 and eta*v0/(1+eta)^2 only
    eta2 = 0.18
    g0 = 1 - (1 - DEFAULT.g2_sp0) * (1 + eta2) ** 2 / (1 + DEFAULT.eta) ** 2
    v02 = DEFAULT.eta * DEFAULT.v0 / (1 + DEFAULT.eta) ** 2 * (1 + eta2) ** 2 / eta2
    other = DEFAULT.with_(eta=eta2, g2_sp0=g0, v0=v02)
    tau = np.linspace(-3e5, 3e5, 601)
    np.testing.assert_allclose(m.g2_cross_perp(tau, other), m.g2_cross_perp(tau, DEFAULT), atol=1e-14)
    np.testing.assert_allclose(m.g2_cross_par(tau, other), m.g2_cross_par(tau, DEFAULT), atol=1e-14)
    s = model_pair(DEFAULT.with_(delta_f_hz=10e6), *SHORT)
    fit = an.fit_hom(s[0], s[1], DEFAULT.with_(delta_f_hz=10e6), ["eta", "v0", "g2_sp0"])
    assert not fit.converged


def test_default_free_set():
    assert an.default_free(DEFAULT) == ["v0", "tau_l_ps", "tau_c_ps", "g2_sp0"]
    assert "delta_f_hz" in an.default_free(DEFAULT.with_(delta_f_hz=1e6))


@pytest.mark.parametrize("df", [10e6, 50e6])
def test_noiseless_recovery(df):
    truth = DEFAULT.with_(delta_f_hz=df)
    s = model_pair(truth, *SHORT)
    l = model_pair(truth, *LONG)
    fit = an.fit_hom([s[0], l[0]], [s[1], l[1]], perturbed(truth).with_(eta=truth.eta))
    assert fit.converged
    for k in an.FIT_NAMES:
        assert getattr(fit.params, k) == pytest.approx(getattr(truth, k), rel=1e-6), k
    assert fit.chi2_reduced < 1e-10
    assert np.all(np.diff(fit.costs) < 0)


def test_noiseless_recovery_without_beat_freezes_df():
    s = model_pair(DEFAULT, *SHORT)
    l = model_pair(DEFAULT, *LONG)
    init = perturbed(DEFAULT).with_(delta_f_hz=0.0, eta=DEFAULT.eta)
    free = an.default_free(init)
    fit = an.fit_hom([s[0], l[0]], [s[1], l[1]], init)
    assert fit.converged
    for k in free:
        assert getattr(fit.params, k) == pytest.approx(getattr(DEFAULT, k), rel=1e-6), k
    assert fit.stderr["delta_f_hz"] == 0.0


def test_free_beat_without_beat_flags_singular():
    s = model_pair(DEFAULT, *SHORT)
    fit = an.fit_hom(s[0], s[1], DEFAULT, ["v0", "tau_c_ps", "delta_f_hz"])
    assert not fit.converged


def test_frozen_v0_recovers_eta():
    rng = np.random.default_rng(1)
    s = model_pair(DEFAULT, *SHORT, scale=2e4, rng=rng)
    l = model_pair(DEFAULT, *LONG, scale=2e4, rng=rng)
    fit = an.fit_hom([s[0], l[0]], [s[1], l[1]], DEFAULT.with_(eta=0.3), {"eta": True, "tau_l_ps": True, "tau_c_ps": True, "g2_sp0": True})
    assert fit.params.v0 == 0.85
    assert fit.params.eta == pytest.approx(0.2, rel=0.05)


def test_noisy_fit_statistics():
    rng = np.random.default_rng(2)
    truth = DEFAULT.with_(delta_f_hz=10e6)
    s = model_pair(truth, *SHORT, scale=5e3, rng=rng, oversample=8)
    l = model_pair(truth, *LONG, scale=5e3, rng=rng, oversample=8)
    fit = an.fit_hom([s[0], l[0]], [s[1], l[1]], perturbed(truth).with_(eta=truth.eta), oversample=8)
    assert fit.converged
    assert 0.85 < fit.chi2_reduced < 1.15
    for k in fit.free_names:
        z = (getattr(fit.params, k) - getattr(truth, k)) / fit.stderr[k]
        assert abs(z) < 4.5, (k, z)
    assert np.all(np.linalg.eigvalsh(fit.covariance) >= -1e-12 * np.abs(fit.covariance).max())
    v, sv = an.v_hom0_from_fit(fit)
    assert abs(v - m.v_hom(0, truth)) < 4.5 * sv


def test_jitter_convolution_recovery():
    truth = DEFAULT.with_(delta_f_hz=10e6)
    s = model_pair(truth, *SHORT, oversample=4, jitter=28.3)
    l = model_pair(truth, *LONG, oversample=4, jitter=28.3)
    init = perturbed(truth).with_(eta=truth.eta)
    fit = an.fit_hom([s[0], l[0]], [s[1], l[1]], init, oversample=4, jitter_sigma_ps=28.3)
    assert fit.converged
    assert fit.params.tau_c_ps == pytest.approx(115.0, rel=1e-6)
    # ignoring the jitter inflates the antibunching time
    naive = an.fit_hom([s[0], l[0]], [s[1], l[1]], init, oversample=4)
    assert naive.params.tau_c_ps > 120.0


def test_insufficient_bins():
    h = make_hist(np.ones(4), 10, -20, 20)  # 8 points for 4 free parameters
    with pytest.raises(DegenerateInputError):
        an.fit_hom(h, h, DEFAULT)


def test_mismatched_binning():
    a = model_pair(DEFAULT, 10, 1000)
    b = model_pair(DEFAULT, 20, 1000)
    with pytest.raises(ConfigError):
        an.fit_hom(a[0], b[1], DEFAULT)
    with pytest.raises(ConfigError):
        an.fit_hom(a[0], a[1], DEFAULT, {"bogus": True})


def test_fit_result_json_keys():
    truth = DEFAULT.with_(delta_f_hz=10e6)
    s = model_pair(truth, *LONG)
    fit = an.fit_hom(s[0], s[1], truth, ["eta", "v0", "tau_l_ps", "delta_f_hz"])
    doc = json.loads(json.dumps(fit.to_json()))
    assert {"params", "stderr", "chi2_reduced", "converged", "n_iter", "covariance"} <= doc.keys()
    assert all(v is None or v >= 0 for v in doc["stderr"].values())
    assert doc["chi2_reduced"] >= 0


# -- beat -----------------------------------------------------------------------


def vis_from_model(p, w, tmax, scale=1e6, rng=None):
    hp, hq = model_pair(p, w, tmax, scale, rng)
    return an.visibility_curve(hp, hq)


@pytest.mark.parametrize("df, w", [(10e6, 2_000), (50e6, 1_000), (50e6, 2_000)])
def test_extract_beat_noiseless(df, w):
    b = an.extract_beat(vis_from_model(DEFAULT.with_(delta_f_hz=df), w, 1_000_000))
    assert b.found
    assert b.delta_f_hz == pytest.approx(df, rel=1e-3)


@pytest.mark.parametrize("seed", range(3))
def test_extract_beat_noisy(seed):
    rng = np.random.default_rng(seed)
    vc = vis_from_model(DEFAULT.with_(delta_f_hz=10e6), 2_000, 1_000_000, scale=2_000, rng=rng)
    b = an.extract_beat(vc)
    assert b.found
    assert b.delta_f_hz == pytest.approx(10e6, rel=0.01)
    assert abs(b.delta_f_hz - 10e6) < 5 * b.stderr


def test_extract_beat_no_beat():
    rng = np.random.default_rng(5)
    b = an.extract_beat(vis_from_model(DEFAULT, 2_000, 1_000_000, scale=2_000, rng=rng))
    assert not b.found
    flat = vis_from_model(DEFAULT.with_(v0=0.0), 2_000, 1_000_000, scale=2_000, rng=rng)
    assert not an.extract_beat(flat).found


def test_extract_beat_nyquist_guard():
    vc = vis_from_model(DEFAULT.with_(delta_f_hz=500e6), 1_000, 200_000)
    with pytest.raises(BinWidthError):
        an.extract_beat(vc, delta_f_hint_hz=500e6)
    # just below Nyquist the periodogram peak itself trips the guard
    near = vis_from_model(DEFAULT.with_(delta_f_hz=480e6), 1_000, 200_000)
    with pytest.raises(BinWidthError):
        an.extract_beat(near)


# -- eta scan -------------------------------------------------------------------


def test_scan_eta():
    grid = np.round(np.arange(0.0, 2.0001, 0.01), 10)
    scan = an.scan_eta(DEFAULT, grid)
    assert scan.eta[np.argmax(scan.v_hom0)] == pytest.approx(0.17, abs=1e-12)
    assert scan.eta[np.argmax(scan.background_peak)] == 1.0
    assert scan.background_peak.max() == pytest.approx(0.425)
    assert scan.rows()[0] == (0.0, 0.0, 0.0)
    z = an.scan_eta(DEFAULT.with_(g2_sp0=0.0), [0.0])
    assert z.v_hom0[0] == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(0.001, 0.9))
def test_scan_argmax_matches_optimal_eta(g0):
    res = 0.002
    grid = np.arange(0.0, 2.0, res)
    scan = an.scan_eta(DEFAULT.with_(g2_sp0=g0), grid)
    assert abs(scan.eta[np.argmax(scan.v_hom0)] - m.optimal_eta(g0)) <= res


@pytest.mark.parametrize("seed", range(10))
def test_extract_beat_null_noise(seed):
    rng = np.random.default_rng(100 + seed)
    flat = vis_from_model(DEFAULT.with_(v0=0.0), 2_000, 1_000_000, scale=2_000, rng=rng)
    assert not an.extract_beat(flat).found


def test_fit_background_recovers_classical_term():
    rng = np.random.default_rng(9)
    vc = vis_from_model(DEFAULT, 2_000, 1_000_000, scale=5_000, rng=rng)
    bg = an.fit_background(vc)
    assert bg["converged"]
    assert abs(bg["amplitude"] - m.background_peak(0.2, 0.85)) < 4 * bg["amplitude_err"]
    assert abs(bg["tau_ps"] - 150_000) < 4 * bg["tau_err"]
    exact = an.fit_background(vis_from_model(DEFAULT, 2_000, 1_000_000, scale=1e8), min_abs_tau_ps=5_000)
    # V(tau) = 2*eta*v0*e/(eta^2 + 2*eta + g2_sp) -> background once g2_sp -> 1
    assert exact["amplitude"] == pytest.approx(m.background_peak(0.2, 0.85), rel=1e-6)
    assert exact["tau_ps"] == pytest.approx(150_000, rel=1e-6)
