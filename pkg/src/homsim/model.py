"""Closed-form correlation functions for a laser superposed with a coherent
single-photon stream on a beam splitter.

All delays are in picoseconds and may be scalars or numpy arrays; every
function is vectorised over ``tau_ps``. Frequencies are in hertz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from homsim.errors import DegenerateInputError, DomainError

PS = 1e-12
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the two-source interference model.

    Defaults reproduce the experimental operating point: laser/single-photon
    intensity ratio 0.2, mode overlap 0.85, a balanced splitter, 150 ns
    laser coherence, 115 ps antibunching time and g2(0) = 0.03.
    """

    eta: float = 0.2
    v0: float = 0.85
    r: float = 0.5
    t: float = 0.5
    tau_l_ps: float = 150_000.0
    tau_c_ps: float = 115.0
    g2_sp0: float = 0.03
    delta_f_hz: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.eta >= 0:
            raise DomainError(f"eta must be >= 0, got {self.eta}")
        if not 0 <= self.v0 <= 1:
            raise DomainError(f"v0 must lie in [0, 1], got {self.v0}")
        if not 0 <= self.g2_sp0 <= 1:
            raise DomainError(f"g2_sp0 must lie in [0, 1], got {self.g2_sp0}")
        if not (0 <= self.r <= 1 and 0 <= self.t <= 1):
            raise DomainError(f"r, t must lie in [0, 1], got {self.r}, {self.t}")
        if self.r + self.t > 1 + 1e-12:
            raise DomainError(f"r + t must not exceed 1, got {self.r + self.t}")
        if not self.tau_l_ps > 0:
            raise DomainError(f"tau_l_ps must be > 0, got {self.tau_l_ps}")
        if not self.tau_c_ps > 0:
            raise DomainError(f"tau_c_ps must be > 0, got {self.tau_c_ps}")
        if not math.isfinite(self.delta_f_hz):
            raise DomainError("delta_f_hz must be finite")

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @property
    def balanced(self) -> bool:
        return self.r == 0.5 and self.t == 0.5


@dataclass(frozen=True)
class CqedParams:
    """Cavity-QED rates divided by 2*pi, in GHz."""

    g_ghz: float = 4.7
    kappa_ghz: float = 36.8
    gamma_par_ghz: float = 0.35
    gamma_star_ghz: float = 0.0

    def __post_init__(self):
        for name in ("g_ghz", "kappa_ghz", "gamma_par_ghz", "gamma_star_ghz"):
            if not getattr(self, name) >= 0:
                raise DomainError(f"{name} must be >= 0")

    @property
    def gamma_perp_ghz(self) -> float:
        return self.gamma_par_ghz / 2.0 + self.gamma_star_ghz


def _abs_tau(tau_ps):
    return np.abs(np.asarray(tau_ps, dtype=np.float64))


def _out(x):
    # 0-d arrays back to python floats so scalar calls return scalars
    return float(x) if np.ndim(x) == 0 else x


def g1_envelope(tau_ps, tau_l_ps: float):
    """Magnitude of the laser first-order coherence, exp(-|tau|/tau_l)."""
    if not tau_l_ps > 0:
        raise DomainError(f"tau_l_ps must be > 0, got {tau_l_ps}")
    return _out(np.exp(-_abs_tau(tau_ps) / tau_l_ps))


def g2_sp(tau_ps, g2_sp0: float, tau_c_ps: float):
    """Antibunching dip of the single-photon stream.

    Exponential recovery ``1 - (1 - g2_sp0) * exp(-|tau|/tau_c)``.
    """
    if not 0 <= g2_sp0 <= 1:
        raise DomainError(f"g2_sp0 must lie in [0, 1], got {g2_sp0}")
    if not tau_c_ps > 0:
        raise DomainError(f"tau_c_ps must be > 0, got {tau_c_ps}")
    return _out(1.0 - (1.0 - g2_sp0) * np.exp(-_abs_tau(tau_ps) / tau_c_ps))


def beat(tau_ps, delta_f_hz: float):
    """cos(2*pi*df*tau), evaluated on |tau| so it is exactly even."""
    return _out(np.cos(TWO_PI * delta_f_hz * PS * _abs_tau(tau_ps)))


def normalization(params: ModelParams) -> float:
    """Product of the mean output intensities, (1+eta^2)RT + eta(R^2+T^2)."""
    p = params
    n = (1.0 + p.eta**2) * p.r * p.t + p.eta * (p.r**2 + p.t**2)
    if n <= 0:
        raise DegenerateInputError("normalization vanishes (eta = 0 and r*t = 0)")
    return n


def _baseline_numerator(tau_ps, p: ModelParams):
    rt = p.r * p.t
    return p.eta**2 * rt + rt * np.asarray(g2_sp(tau_ps, p.g2_sp0, p.tau_c_ps)) + p.eta * (p.r**2 + p.t**2)


def interference_term(tau_ps, params: ModelParams):
    """Unnormalised fourth-order interference term 2*eta*RT*V0*|g1|*cos."""
    p = params
    env = np.asarray(g1_envelope(tau_ps, p.tau_l_ps))
    return 2.0 * p.eta * p.r * p.t * p.v0 * env * np.asarray(beat(tau_ps, p.delta_f_hz))


def g2_cross_perp(tau_ps, params: ModelParams):
    """Cross-port correlation for orthogonal polarisations (no interference)."""
    return _out(_baseline_numerator(tau_ps, params) / normalization(params))


def g2_cross_par(tau_ps, params: ModelParams):
    """Cross-port correlation for parallel polarisations."""
    num = _baseline_numerator(tau_ps, params) - interference_term(tau_ps, params)
    return _out(num / normalization(params))


def v_hom(tau_ps, params: ModelParams):
    """HOM visibility (g_perp - g_par) / g_perp.

    Uses the closed form for a balanced splitter and the definitional ratio
    otherwise; the two agree when r = t = 0.5.
    """
    p = params
    if p.balanced:
        env = np.asarray(g1_envelope(tau_ps, p.tau_l_ps)) * np.asarray(beat(tau_ps, p.delta_f_hz))
        den = p.eta**2 + 2.0 * p.eta + np.asarray(g2_sp(tau_ps, p.g2_sp0, p.tau_c_ps))
        if np.any(den == 0):
            raise DegenerateInputError("g2_perp vanishes; visibility undefined")
        return _out(2.0 * p.eta * p.v0 * env / den)
    perp = np.asarray(g2_cross_perp(tau_ps, p))
    if np.any(perp == 0):
        raise DegenerateInputError("g2_perp vanishes; visibility undefined")
    return _out((perp - np.asarray(g2_cross_par(tau_ps, p))) / perp)


def optimal_eta(g2_sp0: float) -> float:
    """Intensity ratio that maximises the zero-delay HOM visibility."""
    if not 0 <= g2_sp0 <= 1:
        raise DomainError(f"g2_sp0 must lie in [0, 1], got {g2_sp0}")
    return math.sqrt(g2_sp0)


def background_peak(eta: float, v0: float) -> float:
    """Visibility of the broad background, 2*eta*v0/(1+eta)^2 (never above 0.5)."""
    if not eta >= 0:
        raise DomainError(f"eta must be >= 0, got {eta}")
    if not 0 <= v0 <= 1:
        raise DomainError(f"v0 must lie in [0, 1], got {v0}")
    return 2.0 * eta * v0 / (1.0 + eta) ** 2


def _same_port_parts(tau_ps, p: ModelParams):
    # port 1 carries sqrt(R)*E_laser + sqrt(T)*E_sp
    num = (p.r * p.eta) ** 2 + p.t**2 * np.asarray(g2_sp(tau_ps, p.g2_sp0, p.tau_c_ps)) + 2.0 * p.r * p.t * p.eta
    norm = (p.r * p.eta + p.t) ** 2
    if norm <= 0:
        raise DegenerateInputError("port-1 intensity vanishes")
    return num, norm


def g2_auto_perp(tau_ps, params: ModelParams):
    """Same-output-port autocorrelation, orthogonal polarisations.

    Equal to :func:`g2_cross_perp` for a balanced splitter.
    """
    num, norm = _same_port_parts(tau_ps, params)
    return _out(num / norm)


def g2_auto_par(tau_ps, params: ModelParams):
    """Same-output-port autocorrelation, parallel polarisations.

    The interference term enters with a positive sign: coincidences within
    one output port are enhanced where cross-port ones are suppressed.
    """
    num, norm = _same_port_parts(tau_ps, params)
    return _out((num + interference_term(tau_ps, params)) / norm)


def v_same_port(tau_ps, params: ModelParams):
    """Bunching visibility (g_par - g_perp) / g_perp for the same-port setup."""
    perp = np.asarray(g2_auto_perp(tau_ps, params))
    return _out((np.asarray(g2_auto_par(tau_ps, params)) - perp) / perp)


def cqed_figures(cqed: CqedParams) -> tuple[float, float]:
    """Cooperativity 2g^2/(kappa*gamma_perp) and critical photon number
    gamma_perp*gamma_par/(4g^2)."""
    gp = cqed.gamma_perp_ghz
    if cqed.kappa_ghz * gp == 0 or cqed.g_ghz == 0:
        raise DomainError("zero rate in cooperativity or critical photon number")
    cooperativity = 2.0 * cqed.g_ghz**2 / (cqed.kappa_ghz * gp)
    n0 = gp * cqed.gamma_par_ghz / (4.0 * cqed.g_ghz**2)
    return cooperativity, n0


def jacobian_cross(tau_ps, params: ModelParams, names=("eta", "v0", "tau_l_ps", "tau_c_ps", "g2_sp0", "delta_f_hz")):
    """Analytic partial derivatives of (g2_perp, g2_par) with respect to ``names``.

    Returns two arrays of shape (len(tau), len(names)).
    """
    p = params
    tau = _abs_tau(tau_ps).reshape(-1)
    rt = p.r * p.t
    b = p.r**2 + p.t**2
    n = normalization(p)
    ec = np.exp(-tau / p.tau_c_ps)
    el = np.exp(-tau / p.tau_l_ps)
    theta = TWO_PI * p.delta_f_hz * PS * tau
    cos, sin = np.cos(theta), np.sin(theta)
    s = 1.0 - (1.0 - p.g2_sp0) * ec
    num_perp = p.eta**2 * rt + rt * s + p.eta * b
    inter = 2.0 * p.eta * rt * p.v0 * el * cos
    dn_deta = 2.0 * p.eta * rt + b

    d_perp, d_par = {}, {}
    d_perp["eta"] = dn_deta / n - num_perp * dn_deta / n**2
    d_par["eta"] = d_perp["eta"] - (2.0 * rt * p.v0 * el * cos / n - inter * dn_deta / n**2)
    d_perp["v0"] = np.zeros_like(tau)
    d_par["v0"] = -2.0 * p.eta * rt * el * cos / n
    d_perp["tau_l_ps"] = np.zeros_like(tau)
    d_par["tau_l_ps"] = -inter * tau / p.tau_l_ps**2 / n
    d_perp["tau_c_ps"] = -rt * (1.0 - p.g2_sp0) * ec * tau / p.tau_c_ps**2 / n
    d_par["tau_c_ps"] = d_perp["tau_c_ps"]
    d_perp["g2_sp0"] = rt * ec / n
    d_par["g2_sp0"] = d_perp["g2_sp0"]
    d_perp["delta_f_hz"] = np.zeros_like(tau)
    d_par["delta_f_hz"] = 2.0 * p.eta * rt * p.v0 * el * sin * TWO_PI * PS * tau / n
    jp = np.column_stack([d_perp[k] for k in names]) if names else np.zeros((tau.size, 0))
    jq = np.column_stack([d_par[k] for k in names]) if names else np.zeros((tau.size, 0))
    return jp, jq
