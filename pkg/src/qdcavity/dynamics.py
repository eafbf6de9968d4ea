"""Lindblad master equation: evolution, steady states and quantum-regression correlators.

Density matrices are vectorised row-major (``rho.ravel()``), so a product
``A rho B`` becomes ``kron(A, B.T) @ vec(rho)``.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .errors import ConvergenceError, SteadyStateError, TruncationError
from .hilbert import (
    SystemParams,
    adjoint,
    build_annihilation,
    build_sigma,
    build_sigma_z,
    check_density_matrix,
    check_truncation,
    hamiltonian_parts,
    top_level_population,
)


@dataclass(frozen=True)
class TimeTrace:
    """An observable sampled on a strictly increasing time grid (ps)."""

    times: np.ndarray
    values: np.ndarray
    label: str
    params: SystemParams | None = None
    unit: str = ""

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have equal length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")


@dataclass(frozen=True)
class CorrelatorResult:
    tau: np.ndarray
    values: np.ndarray
    kind: str
    label: str = ""


@dataclass
class MasterSolution:
    times: np.ndarray
    states: np.ndarray
    traces: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.traces[name]


def collapse_operators(params):
    """Jump operators (label, c) reproducing the three dissipators.

    Dephasing uses sqrt(gamma_d / 2) sigma_z, which gives
    (gamma_d / 2)(sz rho sz - rho) because sigma_z^2 = 1.
    """
    n = params.n_max
    ops = []
    if params.kappa > 0:
        ops.append(("cavity", np.sqrt(params.kappa) * build_annihilation(n)))
    if params.gamma > 0:
        ops.append(("dot", np.sqrt(params.gamma) * build_sigma(n)))
    if params.gamma_d > 0:
        ops.append(("dephase", np.sqrt(params.gamma_d / 2.0) * build_sigma_z(n)))
    return ops


def liouvillian(h, c_ops=()):
    """Superoperator of -i[H, .] + sum_k D[c_k] acting on row-major vec(rho)."""
    d = h.shape[0]
    eye = np.eye(d)
    lv = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for c in c_ops:
        cdc = adjoint(c) @ c
        lv = lv + np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    return lv


def liouvillian_parts(params, drive=None):
    """(L0, Ld) with L(t) = L0 + E(t) Ld; Ld is None without a drive."""
    h0, hd = hamiltonian_parts(params, drive)
    l0 = liouvillian(h0, [c for _, c in collapse_operators(params)])
    ld = liouvillian(hd) if hd is not None else None
    return l0, ld


def cw_liouvillian(params, drive=None):
    if drive is not None and not drive.is_cw:
        raise ValueError("a time-independent generator needs a cw drive (or none)")
    l0, ld = liouvillian_parts(params, drive)
    return l0 if ld is None else l0 + drive.amplitude * ld


def lindblad_rhs(rho, params, drive=None, t=0.0):
    """d rho / dt for the driven, damped and dephased emitter-cavity system."""
    h0, hd = hamiltonian_parts(params, drive)
    h = h0 if hd is None else h0 + drive.envelope(t) * hd
    out = -1j * (h @ rho - rho @ h)
    for _, c in collapse_operators(params):
        cd = adjoint(c)
        cdc = cd @ c
        out += c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)
    return out


def default_observables(params):
    a = build_annihilation(params.n_max)
    s = build_sigma(params.n_max)
    return {"cavity_photons": adjoint(a) @ a, "dot_population": adjoint(s) @ s}


def expect(op, states):
    """Tr(op rho) for a single density matrix or a stack of them."""
    return np.einsum("ij,...ji->...", op, states)


STABILITY_FACTOR = 2.0


def default_max_step(drive, generator=None):
    """fwhm/8 for Gaussian drives, further capped at 2/||L||_1 when ``generator`` is given.

    The cap keeps explicit Runge-Kutta inside its stability region once the
    state has settled; otherwise the adaptive step grows until tiny, fast
    oscillating components (e.g. the anti-Hermitian rounding residue) are
    amplified up to the absolute tolerance.
    """
    step = np.inf if drive is None or drive.is_cw else drive.fwhm / 8.0
    if generator is not None:
        norm = np.abs(generator).sum(axis=0).max()
        if norm > 0:
            step = min(step, STABILITY_FACTOR / norm)
    return step


def evolve_master(
    rho0,
    t_grid,
    params,
    drive=None,
    observables=None,
    rtol=1e-8,
    atol=1e-10,
    method="RK45",
    max_step=None,
    validate=True,
    truncation_check=True,
):
    """Integrate the master equation and sample states/observables on ``t_grid``.

    Parameters
    ----------
    rho0 : ndarray
        Initial density matrix (or a ket, which is converted).
    t_grid : array_like
        Strictly increasing output times in ps; integration starts at ``t_grid[0]``.
    params : SystemParams
    drive : PulseShape, optional
        Evaluated at every Runge-Kutta stage time.
    observables : dict, optional
        name -> operator; defaults to cavity photon number and emitter population.
    rtol, atol : float
        Per-step tolerances of the embedded Runge-Kutta pair.
    max_step : float, optional
        Defaults to fwhm/8 for Gaussian drives so a pulse cannot be stepped over.

    Returns
    -------
    MasterSolution
        ``states`` has shape (len(t_grid), dim, dim); ``traces`` maps
        observable names to real TimeTrace objects.

    Raises
    ------
    ConvergenceError
        If step control fails.
    TruncationError
        If the top Fock level population exceeds 1e-6.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be a strictly increasing 1-D array")
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 1:
        rho0 = np.outer(rho0, rho0.conj())
    d = params.dim
    if rho0.shape != (d, d):
        raise ValueError(f"rho0 has shape {rho0.shape}, expected {(d, d)}")
    if validate:
        check_density_matrix(rho0)

    l0, ld = liouvillian_parts(params, drive)
    if ld is None or drive.is_cw:
        lt = l0 if ld is None else l0 + drive.amplitude * ld

        def rhs(t, y):
            return lt @ y

    else:

        def rhs(t, y):
            return l0 @ y + drive.envelope(t) * (ld @ y)

    if len(t_grid) == 1:
        states = rho0[None].copy()
    else:
        if max_step is None:
            peak = 0.0 if ld is None else drive.amplitude
            max_step = default_max_step(drive, l0 if ld is None else l0 + peak * ld)
        sol = solve_ivp(
            rhs,
            (t_grid[0], t_grid[-1]),
            rho0.ravel(),
            method=method,
            t_eval=t_grid,
            rtol=rtol,
            atol=atol,
            max_step=max_step,
        )
        if sol.status != 0:
            raise ConvergenceError(f"master equation integration failed: {sol.message}")
        states = sol.y.T.reshape(len(t_grid), d, d)
    if validate:
        for rho in states:
            check_density_matrix(rho)
    if truncation_check:
        check_truncation(top_level_population(states, params.n_max), params.n_max)

    if observables is None:
        observables = default_observables(params)
    traces = {
        name: TimeTrace(t_grid, expect(op, states).real, name, params)
        for name, op in observables.items()
    }
    return MasterSolution(t_grid, states, traces)


MAX_AUTO_NMAX = 40


def escalate_truncation(run, params, n_max_limit=MAX_AUTO_NMAX):
    """Call ``run(params)``, doubling ``n_max`` after every TruncationError.

    Returns (result, params actually used). The last error is re-raised once
    ``n_max`` would exceed ``n_max_limit``.
    """
    while True:
        try:
            return run(params), params
        except TruncationError:
            if 2 * params.n_max > n_max_limit:
                raise
            params = params.replace(n_max=2 * params.n_max)


def _solve_with_trace_row(lv, rhs_vec, d):
    """Solve lv x = rhs with the first equation replaced by Tr(x) = rhs_vec[0]."""
    m = lv.copy()
    m[0, :] = 0.0
    m[0, np.arange(d) * (d + 1)] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            return scipy.linalg.solve(m, rhs_vec)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise SteadyStateError(
                "Liouvillian is singular beyond the trace degeneracy (steady state not unique)"
            ) from exc


def steady_state(params, drive=None, residual_tol=1e-10):
    """Unique stationary density matrix under a cw (or absent) drive.

    Solved densely on the vectorised Liouvillian with the trace condition
    replacing one row.
    """
    if params.total_damping <= 0:
        raise SteadyStateError("steady state requires kappa + gamma + gamma_d > 0")
    lv = cw_liouvillian(params, drive)
    d = params.dim
    b = np.zeros(d * d, dtype=complex)
    b[0] = 1.0
    x = _solve_with_trace_row(lv, b, d)
    resid = np.linalg.norm(lv @ x)
    if resid > residual_tol * np.linalg.norm(lv):
        raise SteadyStateError(f"steady-state residual {resid:.3e} too large")
    rho = x.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    check_density_matrix(rho)
    check_truncation(top_level_population(rho, params.n_max), params.n_max)
    return rho


def time_integrated_state(params, rho0):
    """Integral over t of (rho(t) - rho_ss) for undriven decay from ``rho0``.

    It solves L X = rho_ss - rho0 with Tr X = 0 and is the source term for
    spontaneous-emission spectra integrated over emission time.
    """
    lv = cw_liouvillian(params)
    rho_ss = steady_state(params)
    d = params.dim
    b = (rho_ss - rho0).ravel().astype(complex)
    b[0] = 0.0
    return _solve_with_trace_row(lv, b, d).reshape(d, d)


class Propagator:
    """exp(L tau) applied to vectorised operators, with cached step matrices."""

    def __init__(self, lv):
        self.lv = lv
        self._cache = {}

    def _step(self, dt):
        key = float(np.round(dt, 12))
        if key not in self._cache:
            self._cache[key] = scipy.linalg.expm(self.lv * dt)
        return self._cache[key]

    def evolve(self, x0, taus):
        """Return array (len(taus), n) of exp(L tau) x0; taus must be non-decreasing, >= 0."""
        taus = np.asarray(taus, dtype=float)
        if np.any(taus < 0) or np.any(np.diff(taus) < 0):
            raise ValueError("tau grid must be non-negative and non-decreasing")
        out = np.empty((len(taus), x0.size), dtype=complex)
        x = np.asarray(x0, dtype=complex).ravel()
        t = 0.0
        for i, tau in enumerate(taus):
            if tau > t:
                x = self._step(tau - t) @ x
                t = tau
            out[i] = x
        return out


def _resolve_op(params, op):
    if isinstance(op, str):
        if op == "cavity":
            return build_annihilation(params.n_max)
        if op == "dot":
            return build_sigma(params.n_max)
        raise ValueError(f"unknown operator name {op!r}; use 'cavity' or 'dot'")
    return np.asarray(op, dtype=complex)


def _op_name(op):
    return op if isinstance(op, str) else "op"


def _trace_against(op, xs, d):
    """Tr(op X) for each row-major vectorised X in ``xs``."""
    return xs @ op.T.ravel()


def correlator_first_order(
    params, tau_grid, drive=None, rho0=None, op="cavity", source=None, subtract_coherent=False
):
    """Two-time correlator <op^dag(tau) source(0)> by the quantum regression theorem.

    The operator B(0) = source rho is propagated with the time-independent
    generator and traced against op^dag. ``rho`` is ``rho0`` when given
    (spontaneous emission from an initial condition) and otherwise the
    steady state under the cw ``drive``. ``source`` defaults to ``op``.
    With ``subtract_coherent`` the product <op^dag><source> is removed,
    leaving the fluctuation (incoherent) part.
    """
    lv = cw_liouvillian(params, drive)
    a_op = _resolve_op(params, op)
    b_op = a_op if source is None else _resolve_op(params, source)
    rho = steady_state(params, drive) if rho0 is None else np.asarray(rho0, dtype=complex)
    d = params.dim
    xs = Propagator(lv).evolve((b_op @ rho).ravel(), tau_grid)
    values = _trace_against(adjoint(a_op), xs, d)
    if subtract_coherent:
        values = values - np.trace(adjoint(a_op) @ rho) * np.trace(b_op @ rho)
    src = op if source is None else source
    label = f"<{_op_name(op)}^dag(tau) {_op_name(src)}(0)>"
    return CorrelatorResult(np.asarray(tau_grid, dtype=float), values, "first_order", label)


def g2_cw(params, drive, tau_grid, op="cavity", min_population=1e-12):
    """Normalised intensity correlation g2(tau) in the cw-driven steady state.

    g2(tau) = Tr[n e^{L tau}(c rho_ss c^dag)] / Tr[n rho_ss]^2 with n = c^dag c.
    """
    lv = cw_liouvillian(params, drive)
    c = _resolve_op(params, op)
    cd = adjoint(c)
    n_op = cd @ c
    rho = steady_state(params, drive)
    n_ss = np.trace(n_op @ rho).real
    if n_ss < min_population:
        raise ValueError(f"steady-state intensity {n_ss:.3e} too small to normalise g2")
    xs = Propagator(lv).evolve((c @ rho @ cd).ravel(), tau_grid)
    vals = _trace_against(n_op, xs, params.dim).real / n_ss**2
    return CorrelatorResult(np.asarray(tau_grid, dtype=float), vals, "second_order", f"g2[{op}]")
