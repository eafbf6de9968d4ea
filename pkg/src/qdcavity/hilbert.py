"""Truncated emitter (x) Fock space, operators and the driven Jaynes-Cummings Hamiltonian.

Basis ordering is ``|qd> (x) |n>`` with ``qd`` in {g=0, e=1} and ``n`` in
``0..n_max``; the flat index of ``|qd, n>`` is ``qd * (n_max + 1) + n``.
Operators are plain dense ``complex128`` numpy arrays.
"""

from dataclasses import dataclass, replace
import math

import numpy as np

from .drive import PulseShape
from .errors import StateValidityError, TruncationError

HERMITIAN_RTOL = 1e-12
TOP_LEVEL_BOUND = 1e-6


@dataclass(frozen=True)
class SystemParams:
    """Rates in rad/ps.

    ``kappa`` is the cavity photon-number decay rate, ``gamma`` the emitter
    excited-population decay rate and ``gamma_d`` the pure-dephasing rate
    entering as (gamma_d / 2) (sz rho sz - rho). ``delta`` is omega_c - omega_qd.
    """

    g: float
    kappa: float
    gamma: float
    gamma_d: float = 0.0
    delta: float = 0.0
    n_max: int = 5

    def __post_init__(self):
        for name in ("g", "kappa", "gamma", "gamma_d", "delta"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"{name} must be a finite number, got {v!r}")
        for name in ("g", "kappa", "gamma", "gamma_d"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError("n_max must be an integer >= 1")

    @property
    def dim(self):
        return 2 * (self.n_max + 1)

    @property
    def total_damping(self):
        return self.kappa + self.gamma + self.gamma_d

    def replace(self, **changes):
        return replace(self, **changes)


def _check_nmax(n_max):
    if int(n_max) != n_max or n_max < 1:
        raise ValueError("n_max must be an integer >= 1 (n_max = 0 cannot hold a photon)")
    return int(n_max)


def dimension(n_max):
    return 2 * (_check_nmax(n_max) + 1)


def tensor(a, b):
    """Kronecker product."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("tensor expects two matrices")
    return np.kron(a, b)


def adjoint(a):
    return np.asarray(a).conj().T


def commutator(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.shape[0] != a.shape[-1]:
        raise ValueError(f"incompatible operator shapes {a.shape} and {b.shape}")
    return a @ b - b @ a


def build_annihilation(n_max):
    """Cavity lowering operator a = I_2 (x) a_fock."""
    n_max = _check_nmax(n_max)
    a_fock = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)
    return tensor(np.eye(2), a_fock).astype(complex)


def build_sigma(n_max):
    """Emitter lowering operator sigma = |g><e| (x) I_fock."""
    n_max = _check_nmax(n_max)
    s = np.array([[0.0, 1.0], [0.0, 0.0]])
    return tensor(s, np.eye(n_max + 1)).astype(complex)


def build_sigma_z(n_max):
    """sigma_z = [sigma^dag, sigma] = |e><e| - |g><g|."""
    s = build_sigma(n_max)
    return commutator(adjoint(s), s)


def number_op(n_max):
    a = build_annihilation(n_max)
    return adjoint(a) @ a


def excited_projector(n_max):
    s = build_sigma(n_max)
    return adjoint(s) @ s


def top_level_projector(n_max):
    n_max = _check_nmax(n_max)
    p = np.zeros((n_max + 1, n_max + 1))
    p[n_max, n_max] = 1.0
    return tensor(np.eye(2), p).astype(complex)


def basis_state(qd, n, n_max):
    """|qd, n> as a normalized vector; ``qd`` is 0/'g' or 1/'e'."""
    n_max = _check_nmax(n_max)
    q = {"g": 0, "e": 1}.get(qd, qd)
    if q not in (0, 1) or not 0 <= n <= n_max:
        raise ValueError(f"no basis state |{qd},{n}> for n_max={n_max}")
    psi = np.zeros(dimension(n_max), dtype=complex)
    psi[q * (n_max + 1) + n] = 1.0
    return psi


def ket2dm(psi):
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def frame_detunings(params, drive=None):
    """(omega_c - omega_p, omega_qd - omega_p) in the frame of the drive carrier.

    Without a drive the frame rotates at the mean of the emitter and cavity
    frequencies.
    """
    carrier = drive.carrier if drive is not None else 0.0
    return 0.5 * params.delta - carrier, -0.5 * params.delta - carrier


def drive_operator(n_max, drive):
    """Hermitian coupling operator multiplying the envelope E(t)."""
    out = np.zeros((dimension(n_max),) * 2, dtype=complex)
    phase = np.exp(1j * drive.phase)
    if drive.target in ("cavity", "both"):
        a = build_annihilation(n_max)
        out += phase * adjoint(a) + np.conj(phase) * a
    if drive.target in ("dot", "both"):
        s = build_sigma(n_max)
        out += phase * adjoint(s) + np.conj(phase) * s
    return out


def hamiltonian_parts(params, drive=None):
    """Split H(t) = H0 + E(t) * Hd. ``Hd`` is None without a drive."""
    a = build_annihilation(params.n_max)
    s = build_sigma(params.n_max)
    ad, sd = adjoint(a), adjoint(s)
    det_c, det_q = frame_detunings(params, drive)
    h0 = det_c * (ad @ a) + det_q * (sd @ s) + 1j * params.g * (s @ ad - a @ sd)
    hd = drive_operator(params.n_max, drive) if drive is not None else None
    return h0, hd


def build_hamiltonian(params, drive=None, t=0.0):
    """H(t) = (w_c - w_p) a^dag a + (w_qd - w_p) s^dag s + i g (s a^dag - a s^dag) + E(t) V.

    With no drive and zero carrier this is the symmetric form
    (delta/2) a^dag a - (delta/2) s^dag s + i g (s a^dag - a s^dag).
    """
    if drive is not None and not isinstance(drive, PulseShape):
        raise TypeError("drive must be a PulseShape or None")
    h0, hd = hamiltonian_parts(params, drive)
    if hd is None:
        return h0
    return h0 + drive.envelope(t) * hd


def check_hermitian(h, rtol=HERMITIAN_RTOL):
    scale = max(np.abs(h).max(), 1e-300)
    if np.abs(h - adjoint(h)).max() > rtol * scale:
        raise StateValidityError("operator is not Hermitian")


def check_pure_state(psi, atol=1e-10):
    psi = np.asarray(psi)
    nrm = np.vdot(psi, psi).real
    if abs(nrm - 1.0) > atol:
        raise StateValidityError(f"state norm^2 = {nrm!r} differs from 1")


def check_density_matrix(rho, trace_tol=1e-9, herm_tol=1e-9, psd_tol=1e-8):
    """Raise StateValidityError unless rho is a numerically valid density matrix."""
    rho = np.asarray(rho)
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise StateValidityError(f"trace {tr!r} differs from 1 by more than {trace_tol}")
    herm = np.abs(rho - rho.conj().T).max()
    if herm > herm_tol:
        raise StateValidityError(f"Hermiticity violation {herm:.3e}")
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lam < -psd_tol:
        raise StateValidityError(f"negative eigenvalue {lam:.3e}")


def top_level_population(state, n_max):
    """Population in Fock level n_max for a ket, a density matrix or a stack of either."""
    state = np.asarray(state)
    nf = n_max + 1
    idx = [n_max, nf + n_max]
    if state.ndim >= 2 and state.shape[-1] == state.shape[-2] == 2 * nf:
        return np.real(state[..., idx[0], idx[0]] + state[..., idx[1], idx[1]])
    return np.abs(state[..., idx[0]]) ** 2 + np.abs(state[..., idx[1]]) ** 2


def check_truncation(population, n_max, bound=TOP_LEVEL_BOUND):
    worst = float(np.max(population))
    if worst > bound:
        raise TruncationError(
            f"top Fock level population {worst:.3e} exceeds {bound:.0e} at n_max={n_max}"
        )
