"""Emission spectra of the coupled dot-cavity system.

Two routes are provided. The linearised model treats <a> and <sigma> as
two coupled damped amplitudes,

    d<a>/dt = A <a> + g <sigma>,    d<sigma>/dt = B <sigma> - g <a>,

with A = -i Delta/2 - kappa/2 and B = +i Delta/2 - gamma/2 - gamma_d,
whose solutions are sums of e^{lambda t} terms with closed-form spectra.
The numerical route applies the quantum regression theorem to the full
master equation.

Frequency convention: a component e^{lambda t} shows up at omega = -Im(lambda)
(reference = mean of dot and cavity frequencies), so the bare cavity line sits
at +Delta/2 and the bare dot line at -Delta/2.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np

from .dynamics import (
    Propagator,
    _resolve_op,
    adjoint,
    cw_liouvillian,
    steady_state,
    time_integrated_state,
)
from .hilbert import basis_state, ket2dm

DEGENERACY_RTOL = 1e-8
PUMP_TARGETS = ("dot", "cavity")
TAU_CHUNK = 2048


@dataclass(frozen=True)
class LinearModelCoeffs:
    A: complex
    B: complex
    g: float
    lambda_minus: complex
    lambda_plus: complex
    discriminant_root: complex
    # principal square root: Re(root) >= 0, so Re(lambda_plus) >= Re(lambda_minus)
    branch: str = "principal"

    @property
    def discriminant(self):
        return (self.A - self.B) ** 2 - 4 * self.g**2

    @property
    def degenerate(self):
        scale = abs(self.A - self.B) ** 2 + 4 * self.g**2
        return abs(self.discriminant) <= DEGENERACY_RTOL * scale

    @property
    def eigenvalues(self):
        return np.array([self.lambda_minus, self.lambda_plus])

    @property
    def pole_positions(self):
        return -np.imag(self.eigenvalues)

    @property
    def pole_widths(self):
        """Full widths at half maximum, -2 Re(lambda)."""
        return -2 * np.real(self.eigenvalues)

    @property
    def splitting(self):
        return abs(self.lambda_plus.imag - self.lambda_minus.imag)


def linear_coeffs(params):
    A = -0.5j * params.delta - 0.5 * params.kappa
    B = 0.5j * params.delta - 0.5 * params.gamma - params.gamma_d
    root = np.sqrt(complex((A - B) ** 2 - 4 * params.g**2))
    if root.real < 0 or (root.real == 0 and root.imag < 0):
        root = -root
    return LinearModelCoeffs(
        A=complex(A),
        B=complex(B),
        g=float(params.g),
        lambda_minus=complex(0.5 * (A + B - root)),
        lambda_plus=complex(0.5 * (A + B + root)),
        discriminant_root=complex(root),
    )


def linear_matrix(params):
    """The 2x2 generator acting on (<a>, <sigma>)."""
    c = linear_coeffs(params)
    return np.array([[c.A, c.g], [-c.g, c.B]])


def _check_target(pump_target):
    if pump_target not in PUMP_TARGETS:
        raise ValueError(f"pump_target must be one of {PUMP_TARGETS}, got {pump_target!r}")


def _modes(coeffs, pump_target):
    """Exponential-polynomial decomposition of (a, sigma).

    Returns a list of (lam, c_a, c_s, power) terms with power 0 for
    c e^{lam t} and 1 for c t e^{lam t}.
    """
    A, B, g = coeffs.A, coeffs.B, coeffs.g
    lp, lm = coeffs.lambda_plus, coeffs.lambda_minus
    if coeffs.degenerate:
        lam = 0.5 * (A + B)
        h = 0.5 * (A - B)
        if pump_target == "dot":
            return [(lam, 0.0, 1.0, 0), (lam, g, -h, 1)]
        return [(lam, 1.0, 0.0, 0), (lam, h, -g, 1)]
    r = coeffs.discriminant_root
    if pump_target == "dot":
        return [
            (lp, g / r, (r - (A - B)) / (2 * r), 0),
            (lm, -g / r, (A - B + r) / (2 * r), 0),
        ]
    return [
        (lp, (r - (B - A)) / (2 * r), -g / r, 0),
        (lm, (B - A + r) / (2 * r), g / r, 0),
    ]


def analytic_time_solutions(params, pump_target, t):
    """Closed-form <a>(t), <sigma>(t) for a(0)=1 (cavity) or sigma(0)=1 (dot).

    At the exceptional point (A-B)^2 = 4g^2 the confluent t e^{lambda t}
    limit is used (flagged by ``linear_coeffs(params).degenerate``).
    """
    _check_target(pump_target)
    t = np.asarray(t, dtype=float)
    a = np.zeros(t.shape, dtype=complex)
    s = np.zeros(t.shape, dtype=complex)
    for lam, ca, cs, power in _modes(linear_coeffs(params), pump_target):
        e = np.exp(lam * t) * (t if power else 1.0)
        a += ca * e
        s += cs * e
    return a, s


def _transform(modes, omega, which):
    """Integral over t >= 0 of x(t) e^{i omega t} for x = a or sigma."""
    out = np.zeros(omega.shape, dtype=complex)
    for lam, ca, cs, power in modes:
        c = ca if which == 0 else cs
        s = lam + 1j * omega
        out += c * (1.0 / s**2 if power else -1.0 / s)
    return out


def _normalise(omega, s):
    s = np.clip(np.real(s), 0.0, None)
    area = np.trapezoid(s, omega) if hasattr(np, "trapezoid") else np.trapz(s, omega)
    return s / area if area > 0 else s


@dataclass
class SpectrumResult:
    omega_grid: np.ndarray
    s_cav: np.ndarray
    s_qd: np.ndarray
    pump_target: str
    method: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("s_cav", "s_qd"):
            v = getattr(self, name)
            if v.shape != self.omega_grid.shape or not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ValueError(f"{name} must be finite, nonnegative and match omega_grid")

    def mixed(self, qd_weight=0.0):
        """Collected spectrum s_cav + qd_weight * s_qd (renormalised)."""
        return _normalise(self.omega_grid, self.s_cav + qd_weight * self.s_qd)


def analytic_spectrum(params, pump_target, omega_grid, normalize=True):
    """|F(omega)|^2 of the linear-model amplitudes, for cavity and dot emission."""
    _check_target(pump_target)
    omega = np.asarray(omega_grid, dtype=float)
    coeffs = linear_coeffs(params)
    modes = _modes(coeffs, pump_target)
    s_cav = np.abs(_transform(modes, omega, 0)) ** 2
    s_qd = np.abs(_transform(modes, omega, 1)) ** 2
    if normalize:
        s_cav, s_qd = _normalise(omega, s_cav), _normalise(omega, s_qd)
    meta = {
        "pole_positions": coeffs.pole_positions,
        "pole_widths": coeffs.pole_widths,
        "degenerate": coeffs.degenerate,
    }
    return SpectrumResult(omega, s_cav, s_qd, pump_target, "analytic", meta)


def _initial_state(params, pump_target):
    if pump_target == "dot":
        return ket2dm(basis_state("e", 0, params.n_max))
    return ket2dm(basis_state("g", 1, params.n_max))


def correlator_horizon(params, decay_tol=1e-6, t_max=None):
    """tau horizon long enough for the slowest linear-model rate to decay by ``decay_tol``."""
    rates = -np.real(linear_coeffs(params).eigenvalues)
    slow = rates.min()
    if slow <= 0:
        raise ValueError("no damping: correlator never decays")
    horizon = 1.25 * np.log(1.0 / decay_tol) / slow
    return horizon if t_max is None else min(horizon, t_max)


def numerical_spectrum(
    params,
    pump_target,
    omega_grid,
    drive=None,
    dtau=0.05,
    decay_tol=1e-6,
    t_max=None,
    normalize=True,
):
    """Spectra from the quantum regression theorem on the full master equation.

    Spontaneous emission from |e,0> (dot pumped) or |g,1> (cavity pumped) is
    integrated over the emission time t, which gives the source
    X = c P with P = int_0^inf rho(t) dt. Then
    C(tau) = Tr[c^dag e^{L tau} X] and S(omega) = Re int_0^inf e^{-i omega tau} C dtau,
    evaluated by the trapezoidal rule on a uniform tau grid.
    With ``drive`` (cw) the steady state replaces P and the coherent part
    is removed.
    """
    _check_target(pump_target)
    omega = np.asarray(omega_grid, dtype=float)
    lv = cw_liouvillian(params, drive)
    prop = Propagator(lv)
    if drive is None:
        rho0 = _initial_state(params, pump_target)
        source_state = time_integrated_state(params, rho0)
    else:
        source_state = steady_state(params, drive)

    horizon = correlator_horizon(params, decay_tol, t_max)
    n = int(np.ceil(horizon / dtau))
    step = horizon / n
    lead = prop._step(step)

    spectra = []
    tails = []
    for name in ("cavity", "dot"):
        c = _resolve_op(params, name)
        x0 = c @ source_state
        if drive is not None:
            x0 = x0 - np.trace(x0) * source_state
        trace_vec = adjoint(c).T.ravel()
        x = x0.ravel().astype(complex)
        acc = np.zeros(omega.shape, dtype=complex)
        c0 = c_last = None
        for start in range(0, n + 1, TAU_CHUNK):
            idx = np.arange(start, min(start + TAU_CHUNK, n + 1))
            corr = np.empty(len(idx), dtype=complex)
            for j in range(len(idx)):
                if idx[j] > 0:
                    x = lead @ x
                corr[j] = trace_vec @ x
            w = np.full(len(idx), step)
            w[idx == 0] = w[idx == n] = 0.5 * step
            acc += np.exp(-1j * np.outer(omega, idx * step)) @ (w * corr)
            c0 = corr[0] if c0 is None else c0
            c_last = corr[-1]
        c0 = abs(c0)
        tails.append(abs(c_last) / c0 if c0 > 0 else 0.0)
        if c0 > 0 and abs(c_last) > decay_tol * c0 * (1 + 1e-6):
            warnings.warn(
                f"{name} correlator decayed only to {abs(c_last) / c0:.1e} of its initial value",
                RuntimeWarning,
                stacklevel=2,
            )
        s = np.real(acc)
        spectra.append(_normalise(omega, s) if normalize else np.clip(s, 0.0, None))
    coeffs = linear_coeffs(params)
    meta = {
        "pole_positions": coeffs.pole_positions,
        "pole_widths": coeffs.pole_widths,
        "tau_horizon": horizon,
        "tail_ratio": tails,
    }
    return SpectrumResult(omega, spectra[0], spectra[1], pump_target, "regression", meta)


def relative_l2(s1, s2, omega=None):
    """||s1 - s2|| / ||s2|| (optionally integrated over ``omega``)."""
    d = (np.asarray(s1) - np.asarray(s2)) ** 2
    r = np.asarray(s2) ** 2
    if omega is None:
        return float(np.sqrt(d.sum() / r.sum()))
    return float(np.sqrt(np.trapezoid(d, omega) / np.trapezoid(r, omega)))


def peak_positions(omega, s, min_rel_height=0.05):
    """Local maxima of ``s`` above ``min_rel_height`` of the global max, sorted by omega."""
    omega = np.asarray(omega)
    s = np.asarray(s)
    idx = np.nonzero((s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:]))[0] + 1
    idx = idx[s[idx] >= min_rel_height * s.max()]
    return omega[idx]
