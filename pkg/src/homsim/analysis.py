"""Visibility extraction and model fitting for correlation histograms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from homsim import model as m
from homsim.correlator import CorrelationHistogram
from homsim.errors import BinWidthError, ConfigError, DegenerateInputError, DomainError, PreconditionError
from homsim.lsq import levenberg_marquardt

FIT_NAMES = ("eta", "v0", "tau_l_ps", "tau_c_ps", "g2_sp0", "delta_f_hz")
BOUNDS = {
    "eta": (0.0, np.inf),
    "v0": (0.0, 1.0),
    "tau_l_ps": (1e-9, np.inf),
    "tau_c_ps": (1e-9, np.inf),
    "g2_sp0": (0.0, 1.0),
    "delta_f_hz": (0.0, np.inf),
}
# floors for the relative-step test, in each parameter's own unit
STEP_SCALE = {"eta": 1e-6, "v0": 1e-6, "tau_l_ps": 1.0, "tau_c_ps": 1e-3, "g2_sp0": 1e-6, "delta_f_hz": 1.0}
VIS_FLOOR_SIGMAS = 10.0


# -- visibility -----------------------------------------------------------


@dataclass
class VisibilityCurve:
    tau_ps: np.ndarray
    v: np.ndarray
    sigma: np.ndarray
    mask: np.ndarray  # True where the bin was usable
    bin_width_ps: int = 1

    @property
    def valid(self):
        return self.tau_ps[self.mask], self.v[self.mask], self.sigma[self.mask]


def visibility(g_perp, g_par, same_port: bool = False):
    """(g_perp - g_par)/g_perp, or (g_par - g_perp)/g_perp for the same-port topology."""
    g_perp = np.asarray(g_perp, np.float64)
    g_par = np.asarray(g_par, np.float64)
    v = (g_par - g_perp) / g_perp if same_port else (g_perp - g_par) / g_perp
    return float(v) if v.ndim == 0 else v


def visibility_curve(h_perp: CorrelationHistogram, h_par: CorrelationHistogram, same_port: bool = False) -> VisibilityCurve:
    """Per-bin visibility with first-order error propagation.

    Bins where g_perp < 10 sigma_perp (or with undefined errors) are masked.
    """
    if not h_perp.same_binning(h_par):
        raise ConfigError("visibility needs histograms with identical binning")
    if not (h_perp.normalized and h_par.normalized):
        raise PreconditionError("histograms must be normalized")
    gp, gq = h_perp.g2, h_par.g2
    sp, sq = h_perp.sigma, h_par.sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        mask = np.isfinite(sp) & np.isfinite(sq) & (gp > 0) & (gp >= VIS_FLOOR_SIGMAS * sp)
        v = np.where(mask, visibility(gp, gq, same_port), np.nan)
        sig = np.where(mask, np.sqrt((gq * sp / gp**2) ** 2 + (sq / gp) ** 2), np.nan)
    if not mask.any():
        raise DegenerateInputError("every bin was masked; no usable visibility")
    return VisibilityCurve(h_perp.bin_centers.astype(np.float64), v, sig, mask, h_perp.bin_width_ps)


def first_zero_crossing(tau_ps, v) -> Optional[float]:
    """Linearly interpolated first sign change of ``v`` at positive delay."""
    tau_ps, v = np.asarray(tau_ps, float), np.asarray(v, float)
    ok = (tau_ps > 0) & np.isfinite(v)
    t, y = tau_ps[ok], v[ok]
    flips = np.flatnonzero(np.sign(y[1:]) * np.sign(y[:-1]) <= 0)
    if flips.size == 0:
        return None
    k = flips[0]
    if y[k] == y[k + 1]:
        return float(t[k])
    return float(t[k] - y[k] * (t[k + 1] - t[k]) / (y[k + 1] - y[k]))


# -- model fit ------------------------------------------------------------


@dataclass
class FitResult:
    params: m.ModelParams
    stderr: dict
    chi2_reduced: float
    converged: bool
    n_iter: int
    covariance: np.ndarray
    free_names: tuple = ()
    costs: list = field(default_factory=list)
    n_points: int = 0

    def to_json(self) -> dict:
        p = self.params
        return {
            "params": {k: getattr(p, k) for k in ("eta", "v0", "r", "t", "tau_l_ps", "tau_c_ps", "g2_sp0", "delta_f_hz")},
            "stderr": {k: (None if not math.isfinite(v) else v) for k, v in self.stderr.items()},
            "chi2_reduced": self.chi2_reduced,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "free": list(self.free_names),
            "covariance": [[(None if not math.isfinite(c) else c) for c in row] for row in np.asarray(self.covariance).tolist()],
        }


def _sample_points(hist: CorrelationHistogram, oversample: int, jitter_sigma_ps: float):
    """Evaluation delays and weights averaging the model over each bin and,
    optionally, over a Gaussian timing spread (Gauss-Hermite)."""
    w = hist.bin_width_ps
    frac = (np.arange(oversample) + 0.5) / oversample
    sub = hist.tau_lo[:, None] + frac[None, :] * w - 0.5  # (bins, oversample)
    sub_w = np.full(oversample, 1.0 / oversample)
    if jitter_sigma_ps > 0:
        x, gw = np.polynomial.hermite.hermgauss(16)
        off = math.sqrt(2.0) * jitter_sigma_ps * x
        pts = (sub[:, :, None] + off[None, None, :]).reshape(hist.n_bins, -1)
        wts = (sub_w[:, None] * (gw / math.sqrt(math.pi))[None, :]).reshape(-1)
    else:
        pts, wts = sub, sub_w
    return pts, wts


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def default_free(init: m.ModelParams) -> list:
    return [k for k in FIT_NAMES if k != "eta" and not (k == "delta_f_hz" and init.delta_f_hz == 0)]


def fit_hom(
    h_perp,
    h_par,
    init: m.ModelParams,
    free_mask=None,
    oversample: int = 1,
    jitter_sigma_ps: float = 0.0,
    xtol: float = 1e-8,
    max_iter: int = 500,
) -> FitResult:
    """Joint weighted least-squares fit of the cross-port model to perpendicular
    and parallel histograms.

    ``h_perp``/``h_par`` may be single histograms or equal-length lists (for
    example a fine short-range and a coarse long-range pair). ``free_mask``
    is a mapping name -> bool or a sequence of names.

    With a balanced splitter the two curves depend on (eta, v0, g2_sp0) only
    through (1 - g2_sp0)/(1 + eta)^2 and eta*v0/(1 + eta)^2, so at most two of
    the three can be free. The default frees everything except eta (which is
    fixed by the singles rates) and, when ``init`` has no detuning, delta_f,
    whose Jacobian column vanishes at zero. A rank-deficient fit is reported
    as not converged.
    ``jitter_sigma_ps`` is the standard deviation of the delay spread (the
    two detector jitters combined).
    """
    perps, pars = _as_list(h_perp), _as_list(h_par)
    if len(perps) != len(pars) or not perps:
        raise ConfigError("need matching lists of perpendicular and parallel histograms")
    if free_mask is None:
        free = default_free(init)
    elif isinstance(free_mask, dict):
        free = [k for k in FIT_NAMES if free_mask.get(k, False)]
        unknown = set(free_mask) - set(FIT_NAMES)
        if unknown:
            raise ConfigError(f"unknown fit parameters {sorted(unknown)}")
    else:
        unknown = set(free_mask) - set(FIT_NAMES)
        if unknown:
            raise ConfigError(f"unknown fit parameters {sorted(unknown)}")
        free = [k for k in FIT_NAMES if k in set(free_mask)]
    if oversample < 1:
        raise DomainError("oversample must be >= 1")
    init.validate()

    blocks = []
    for hp, hq in zip(perps, pars):
        if not hp.same_binning(hq):
            raise ConfigError("perpendicular and parallel histograms have different binning")
        if not (hp.normalized and hq.normalized):
            raise PreconditionError("histograms must be normalized")
        pts, wts = _sample_points(hp, oversample, jitter_sigma_ps)
        for h, par in ((hp, False), (hq, True)):
            use = np.isfinite(h.sigma) & (h.sigma > 0) & np.isfinite(h.g2)
            blocks.append((pts[use], wts, h.g2[use], h.sigma[use], par))
    n_pts = sum(b[2].size for b in blocks)
    if n_pts < 3 * len(free):
        raise DegenerateInputError(f"{n_pts} usable bins for {len(free)} free parameters (need >= {3 * len(free)})")

    def params_of(x):
        return init.with_(**dict(zip(free, (float(v) for v in x))))

    def model_blocks(p):
        out = []
        for pts, wts, _, _, par in blocks:
            fn = m.g2_cross_par if par else m.g2_cross_perp
            out.append(np.asarray(fn(pts, p)).reshape(pts.shape) @ wts)
        return out

    def residual(x):
        p = params_of(x)
        return np.concatenate([(mod - b[2]) / b[3] for mod, b in zip(model_blocks(p), blocks)])

    def jacobian(x):
        p = params_of(x)
        rows = []
        for pts, wts, _, sig, par in blocks:
            jp, jq = m.jacobian_cross(pts.reshape(-1), p, tuple(free))
            j = (jq if par else jp).reshape(pts.shape[0], pts.shape[1], len(free))
            rows.append(np.einsum("bsk,s->bk", j, wts) / sig[:, None])
        return np.vstack(rows)

    lo = np.array([BOUNDS[k][0] for k in free])
    hi = np.array([BOUNDS[k][1] for k in free])
    x0 = np.array([getattr(init, k) for k in free], dtype=np.float64)
    res = levenberg_marquardt(
        residual, jacobian, x0, lo, hi, xtol=xtol, max_iter=max_iter,
        x_scale=np.array([STEP_SCALE[k] for k in free]),
    )
    dof = max(n_pts - len(free), 1)
    chi2_red = res.cost / dof
    J = res.jac
    converged = res.converged
    cov = np.full((len(free), len(free)), np.nan)
    if len(free):
        A = J.T @ J
        if np.linalg.matrix_rank(A) < len(free):
            converged = False
        else:
            cov = np.linalg.inv(A)
            cov = 0.5 * (cov + cov.T)
    err = np.sqrt(np.clip(np.diag(cov), 0, None)) if len(free) else np.empty(0)
    stderr = {k: 0.0 for k in FIT_NAMES}
    stderr.update({k: float(e) for k, e in zip(free, err)})
    return FitResult(params_of(res.x), stderr, float(chi2_red), bool(converged), res.n_iter, cov, tuple(free), res.costs, n_pts)


def v_hom0_from_fit(fit: FitResult) -> tuple[float, float]:
    """V_HOM(0) implied by the fitted parameters, with a propagated error."""
    p = fit.params
    v = float(m.v_hom(0.0, p))
    if not fit.free_names or not np.all(np.isfinite(fit.covariance)):
        return v, float("nan")
    grad = []
    for k in fit.free_names:
        x = getattr(p, k)
        h = 1e-6 * max(abs(x), STEP_SCALE[k])
        lo_b, hi_b = BOUNDS[k]
        up = min(x + h, hi_b)
        dn = max(x - h, lo_b)
        grad.append((m.v_hom(0.0, p.with_(**{k: up})) - m.v_hom(0.0, p.with_(**{k: dn}))) / (up - dn))
    g = np.array(grad)
    return v, float(math.sqrt(max(g @ fit.covariance @ g, 0.0)))


# -- beat -----------------------------------------------------------------


@dataclass
class BeatResult:
    found: bool
    delta_f_hz: float = float("nan")
    stderr: float = float("nan")
    amplitude: float = float("nan")
    decay_ps: float = float("nan")
    message: str = ""


def _false_alarm(z: float, n_indep: int) -> float:
    """Probability that the best of ``n_indep`` noise-only trial frequencies
    gains at least 2*z in chi-square."""
    if z <= 0:
        return 1.0
    return -math.expm1(n_indep * math.log1p(-math.exp(-z)))


def extract_beat(
    vis: VisibilityCurve,
    min_abs_tau_ps: float = 1_000.0,
    delta_f_hint_hz: Optional[float] = None,
    min_periods: float = 3.0,
    false_alarm: float = 1e-3,
) -> BeatResult:
    """Beat frequency from a damped-cosine fit A*exp(-|tau|/T)*cos(2*pi*f*tau)
    to the visibility curve outside the antibunching region.

    The starting frequency is the periodogram peak of the folded curve.
    A beat is reported when at least ``min_periods`` periods fit in the
    window, the amplitude exceeds 2 sigma, and the chi-square gain over no
    modulation has a false-alarm probability (corrected for the number of
    trial frequencies) below ``false_alarm``. Requests or peaks at the
    Nyquist limit of the binning raise BinWidthError.
    """
    w = float(vis.bin_width_ps)
    nyquist = 1.0 / (2.0 * w * m.PS)
    if delta_f_hint_hz is not None and delta_f_hint_hz >= nyquist:
        raise BinWidthError(
            f"{w:g} ps bins resolve beats below {nyquist:.4g} Hz; {delta_f_hint_hz:.4g} Hz would alias"
        )
    tau, v, sig = vis.valid
    keep = np.abs(tau) >= min_abs_tau_ps
    tau, v, sig = tau[keep], v[keep], sig[keep]
    if tau.size < 8:
        return BeatResult(False, message="too few usable bins")
    span = float(np.max(np.abs(tau)))

    # periodogram of the folded curve on the regular positive-delay grid
    at = np.abs(tau)
    grid = np.arange(at.min(), span + w / 2, w)
    idx = np.clip(np.rint((at - grid[0]) / w).astype(int), 0, grid.size - 1)
    acc = np.zeros(grid.size)
    cnt = np.zeros(grid.size)
    np.add.at(acc, idx, v)
    np.add.at(cnt, idx, 1)
    var_acc = np.zeros(grid.size)
    np.add.at(var_acc, idx, sig**2)
    var_y = np.where(cnt > 0, var_acc / np.maximum(cnt, 1) ** 2, 0.0)
    y = np.where(cnt > 0, acc / np.maximum(cnt, 1), 0.0)
    pad = 8 * grid.size
    spec = np.abs(np.fft.rfft(y - y.mean(), n=pad))
    freqs = np.fft.rfftfreq(pad, d=w * m.PS)
    k = 1 + int(np.argmax(spec[1:]))
    f0 = float(freqs[k])

    def residual(x):
        a, d, f = x
        return (a * np.exp(-at / d) * np.cos(2 * math.pi * f * m.PS * at) - v) / sig

    def jacobian(x):
        a, d, f = x
        e = np.exp(-at / d)
        c = np.cos(2 * math.pi * f * m.PS * at)
        s = np.sin(2 * math.pi * f * m.PS * at)
        return np.column_stack((e * c, a * e * c * at / d**2, -a * e * s * 2 * math.pi * m.PS * at)) / sig[:, None]

    # amplitude guess by projection onto the trial cosine
    c0 = np.cos(2 * math.pi * f0 * m.PS * at)
    a0 = float(np.sum(v * c0 / sig**2) / np.sum(c0**2 / sig**2))
    x0 = np.array([a0, span, f0])
    n_indep = max(grid.size // 2, 1)
    if f0 >= 0.9 * nyquist:
        # normalised periodogram power is Exp(1)-distributed for white noise
        z0 = float(spec[k] ** 2 / np.sum(var_y))
        if _false_alarm(z0, n_indep) <= false_alarm:
            raise BinWidthError(f"beat near the Nyquist limit of {w:g} ps bins; use finer bins")
        return BeatResult(False, message="no significant oscillation")
    res = levenberg_marquardt(
        residual, jacobian, x0, np.array([-np.inf, w, 0.0]), np.array([np.inf, 100.0 * span, nyquist]),
        x_scale=np.array([1e-9, 1.0, 1.0]),
    )
    a, d, f = res.x
    A = res.jac.T @ res.jac
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > 1e14:
        return BeatResult(False, f, float("inf"), a, d, "ill-conditioned damped-cosine fit")
    err = np.sqrt(np.clip(np.diag(np.linalg.inv(A)), 0, None))
    # scale by the reduced chi-square when the damped cosine fits worse than the errors suggest
    chi2r = res.cost / max(at.size - 3, 1)
    err = err * math.sqrt(max(chi2r, 1.0))
    if f * span * m.PS < min_periods:
        return BeatResult(False, f, err[2], a, d, "fewer than the required oscillation periods in the window")
    if not abs(a) >= 2 * err[0]:
        return BeatResult(False, f, err[2], a, d, "oscillation amplitude below 2 sigma")
    # false-alarm probability of the best of ~n_independent trial frequencies
    z = max(0.5 * (float(np.sum((v / sig) ** 2)) - res.cost), 0.0)
    fap = _false_alarm(z, n_indep)
    if fap > false_alarm:
        return BeatResult(False, f, err[2], a, d, f"false-alarm probability {fap:.2g}")
    return BeatResult(True, float(f), float(err[2]), float(a), float(d), "")


def fit_background(vis: VisibilityCurve, min_abs_tau_ps: float = 2_000.0) -> dict:
    """Classical background B*exp(-|tau|/T) fitted to the visibility outside
    the antibunching region. Returns amplitude, tau_ps and their errors."""
    tau, v, sig = vis.valid
    keep = np.abs(tau) >= min_abs_tau_ps
    at, v, sig = np.abs(tau[keep]), v[keep], sig[keep]
    if at.size < 6:
        raise DegenerateInputError("too few bins outside the antibunching region")

    def residual(x):
        return (x[0] * np.exp(-at / x[1]) - v) / sig

    def jacobian(x):
        e = np.exp(-at / x[1])
        return np.column_stack((e, x[0] * e * at / x[1] ** 2)) / sig[:, None]

    span = float(at.max())
    x0 = np.array([float(np.average(v[at < at.min() + 0.1 * span], weights=sig[at < at.min() + 0.1 * span] ** -2)), span / 3])
    res = levenberg_marquardt(residual, jacobian, x0, np.array([-np.inf, 1.0]), np.array([np.inf, 1e3 * span]),
                              x_scale=np.array([1e-9, 1.0]))
    cov = np.linalg.inv(res.jac.T @ res.jac)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    return {
        "amplitude": float(res.x[0]), "amplitude_err": float(err[0]),
        "tau_ps": float(res.x[1]), "tau_err": float(err[1]),
        "chi2_reduced": float(res.cost / max(at.size - 2, 1)), "converged": res.converged,
    }


# -- eta scan ------------------------------------------------------------


@dataclass
class EtaScan:
    eta: np.ndarray
    v_hom0: np.ndarray
    background_peak: np.ndarray

    def rows(self):
        return list(zip(self.eta.tolist(), self.v_hom0.tolist(), self.background_peak.tolist()))


def scan_eta(params: m.ModelParams, eta_grid: Sequence[float]) -> EtaScan:
    """V_HOM(0) and the classical background peak over a grid of intensity ratios."""
    eta = np.asarray(eta_grid, dtype=np.float64)
    if eta.size == 0:
        raise DomainError("eta grid is empty")
    if np.any(eta < 0):
        raise DomainError("eta must be >= 0")
    v = np.empty(eta.size)
    b = np.empty(eta.size)
    for i, e in enumerate(eta):
        p = params.with_(eta=float(e))
        denom = e * e + 2 * e + p.g2_sp0
        v[i] = 0.0 if denom == 0 else float(m.v_hom(0.0, p))
        b[i] = m.background_peak(float(e), p.v0)
    return EtaScan(eta, v, b)
