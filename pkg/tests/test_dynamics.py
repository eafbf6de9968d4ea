import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdcavity.drive import PulseShape
from qdcavity.dynamics import (
    correlator_first_order,
    cw_liouvillian,
    escalate_truncation,
    evolve_master,
    g2_cw,
    lindblad_rhs,
    steady_state,
    time_integrated_state,
)
from qdcavity.errors import SteadyStateError, TruncationError
from qdcavity.hilbert import (
    SystemParams,
    adjoint,
    basis_state,
    build_annihilation,
    build_sigma,
    check_density_matrix,
    ket2dm,
)

from conftest import G, GAMMA, KAPPA

T = np.linspace(0, 60, 61)


def _ge_coherence_state(n_max):
    psi = (basis_state("g", 0, n_max) + basis_state("e", 0, n_max)) / np.sqrt(2)
    return ket2dm(psi)


def test_rhs_matches_vectorised_liouvillian(rng):
    p = SystemParams(G, KAPPA, GAMMA, 0.02, delta=0.3, n_max=2)
    x = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    lv = cw_liouvillian(p)
    assert np.allclose(lindblad_rhs(x, p), (lv @ x.ravel()).reshape(6, 6), atol=1e-14)


def test_emitter_decay():
    p = SystemParams(0.0, KAPPA, GAMMA, n_max=1)
    sol = evolve_master(basis_state("e", 0, 1), T, p, truncation_check=False)
    assert np.allclose(sol["dot_population"].values, np.exp(-GAMMA * T), rtol=1e-7)


def test_cavity_decay_pins_kappa_convention():
    p = SystemParams(0.0, KAPPA, GAMMA, n_max=1)
    sol = evolve_master(basis_state("g", 1, 1), T, p, truncation_check=False)
    assert np.allclose(sol["cavity_photons"].values, np.exp(-KAPPA * T), rtol=1e-7, atol=1e-9)


def test_dephasing_rate_from_dissipator_algebra():
    # (gd/2)(sz rho sz - rho) maps rho_ge -> (gd/2)(-rho_ge - rho_ge) = -gd rho_ge
    gd = 0.05
    p = SystemParams(0.0, 0.0, 0.0, gd, n_max=1)
    rho0 = _ge_coherence_state(1)
    drho = lindblad_rhs(rho0, p)
    assert drho[0, 2] == pytest.approx(-gd * rho0[0, 2])
    sol = evolve_master(rho0, T, p, truncation_check=False)
    coh = np.abs(sol.states[:, 0, 2])
    assert np.allclose(coh, 0.5 * np.exp(-gd * T), rtol=1e-7)


def test_frozen_state_without_dynamics():
    p = SystemParams(0.0, 0.0, 0.0, n_max=1)
    rho0 = _ge_coherence_state(1)
    sol = evolve_master(rho0, T, p, truncation_check=False)
    assert np.allclose(sol.states, rho0[None], atol=1e-14)


def test_vacuum_rabi_oscillation():
    p = SystemParams(G, 0.0, 0.0, n_max=1)
    sol = evolve_master(basis_state("e", 0, 1), T, p, truncation_check=False)
    assert np.allclose(sol["cavity_photons"].values, np.sin(G * T) ** 2, atol=1e-7)


def test_truncation_overflow_flagged_and_escalated():
    p = SystemParams(G, KAPPA, GAMMA, n_max=1)
    with pytest.raises(TruncationError):
        evolve_master(basis_state("e", 0, 1), T, p)
    sol, used = escalate_truncation(lambda q: evolve_master(basis_state("e", 0, q.n_max), T, q), p)
    assert used.n_max == 2
    assert sol["cavity_photons"].values.max() > 0.1


def test_steady_state_without_drive_is_ground():
    p = SystemParams(G, KAPPA, GAMMA, 0.01, n_max=2)
    assert np.allclose(steady_state(p), ket2dm(basis_state("g", 0, 2)), atol=1e-12)


def test_steady_state_requires_damping():
    with pytest.raises(SteadyStateError):
        steady_state(SystemParams(G, 0.0, 0.0, n_max=2), PulseShape("cw", 0.01))


def test_empty_cavity_lorentzian_tail():
    p = SystemParams(0.0, KAPPA, GAMMA, n_max=4)
    e0 = 0.002
    for carrier in (-1.0, 0.5, 2.0):
        rho = steady_state(p, PulseShape("cw", e0, carrier=carrier, target="cavity"))
        a = build_annihilation(4)
        n = np.trace(adjoint(a) @ a @ rho).real
        assert n == pytest.approx(e0**2 / (carrier**2 + (KAPPA / 2) ** 2), rel=1e-5)


def test_steady_state_residual_and_dip():
    p = SystemParams(G, KAPPA, GAMMA, 0.1 * G, n_max=2)
    lv = cw_liouvillian(p, PulseShape("cw", 0.002, target="cavity"))
    rho = steady_state(p, PulseShape("cw", 0.002, target="cavity"))
    assert np.linalg.norm(lv @ rho.ravel()) <= 1e-10 * np.linalg.norm(lv)
    a = build_annihilation(2)
    n = lambda c: np.trace(adjoint(a) @ a @ steady_state(p, PulseShape("cw", 0.002, carrier=c))).real  # noqa: E731
    assert n(0.0) < 0.2 * n(G)


def test_empty_cavity_correlator():
    delta = 0.4
    p = SystemParams(0.0, KAPPA, GAMMA, delta=delta, n_max=1)
    tau = np.linspace(0, 20, 41)
    c = correlator_first_order(p, tau, rho0=ket2dm(basis_state("g", 1, 1)))
    assert np.allclose(c.values, np.exp((1j * delta / 2 - KAPPA / 2) * tau), atol=1e-10)


def test_correlator_equal_time_moment():
    p = SystemParams(G, KAPPA, GAMMA, 0.02, n_max=3)
    drive = PulseShape("cw", 0.01, carrier=0.05, target="cavity")
    c = correlator_first_order(p, np.array([0.0, 1.0]), drive=drive)
    rho = steady_state(p, drive)
    a = build_annihilation(3)
    assert abs(c.values[0] - np.trace(adjoint(a) @ a @ rho)) <= 1e-9


def test_no_cross_feeding_when_decoupled():
    p = SystemParams(0.0, KAPPA, GAMMA, 0.0, delta=0.3, n_max=1)
    rho0 = ket2dm(basis_state("e", 0, 1))
    c = correlator_first_order(p, np.linspace(0, 50, 11), rho0=rho0, op="cavity", source="dot")
    assert np.allclose(c.values, 0, atol=1e-15)


def test_g2_coherent_empty_cavity():
    p = SystemParams(0.0, KAPPA, GAMMA, n_max=5)
    res = g2_cw(p, PulseShape("cw", 0.002, target="cavity"), np.linspace(0, 100, 101))
    assert np.max(np.abs(res.values - 1)) <= 1e-6


def test_g2_antibunching_detuned_dot():
    from qdcavity.units import detuning_from_nm

    d = detuning_from_nm(-1.2)
    p = SystemParams(G, KAPPA, GAMMA, 0.1 * G, delta=d, n_max=2)
    res = g2_cw(p, PulseShape("cw", 0.002, carrier=-d / 2, target="dot"), np.array([0.0, 3000.0]))
    assert res.values[0] < 0.5
    assert abs(res.values[-1] - 1) < 0.01


def test_g2_single_emitter_blockade():
    # bad-cavity limit: the cavity only relays the emitter, and one photon fills n_max = 1
    p = SystemParams(0.01, 50.0, GAMMA, n_max=1)
    res = g2_cw(p, PulseShape("cw", 0.01, target="dot"), np.array([0.0]))
    assert abs(res.values[0]) <= 1e-6


def test_g2_guard_for_undriven_system():
    p = SystemParams(G, KAPPA, GAMMA, n_max=2)
    with pytest.raises(ValueError):
        g2_cw(p, PulseShape("cw", 0.0), np.array([0.0]))


def test_time_integrated_state_trace():
    p = SystemParams(G, KAPPA, GAMMA, 0.02, n_max=2)
    pint = time_integrated_state(p, ket2dm(basis_state("e", 0, 2)))
    a, s = build_annihilation(2), build_sigma(2)
    emitted = KAPPA * np.trace(adjoint(a) @ a @ pint).real + GAMMA * np.trace(adjoint(s) @ s @ pint).real
    assert emitted == pytest.approx(1.0, rel=1e-9)


params_st = st.builds(
    SystemParams,
    g=st.floats(0, 0.3),
    kappa=st.floats(0.01, 0.5),
    gamma=st.floats(0.0, 0.05),
    gamma_d=st.floats(0.0, 0.05),
    delta=st.floats(-2, 2),
    n_max=st.just(4),
)


@given(p=params_st, a=st.floats(-2, 2), b=st.floats(-2, 2), seed=st.integers(0, 1000))
def test_liouvillian_linearity(p, a, b, seed):
    rng = np.random.default_rng(seed)
    d = p.dim
    x1 = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    x2 = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    lhs = lindblad_rhs(a * x1 + b * x2, p)
    rhs = a * lindblad_rhs(x1, p) + b * lindblad_rhs(x2, p)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


@given(p=params_st, amp=st.floats(0, 0.003), target=st.sampled_from(["cavity", "dot"]))
def test_state_invariants_along_pulsed_evolution(p, amp, target):
    pulse = PulseShape("gaussian", amp, 60.0, 40.0, 0.0, target)
    sol = evolve_master(basis_state("g", 0, 4), np.linspace(0, 200, 41), p, pulse, validate=False)
    for rho in sol.states:
        check_density_matrix(rho)
