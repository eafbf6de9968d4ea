import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdcavity.drive import PulseShape
from qdcavity.errors import StateValidityError, TruncationError
from qdcavity.hilbert import (
    SystemParams,
    adjoint,
    basis_state,
    build_annihilation,
    build_hamiltonian,
    build_sigma,
    build_sigma_z,
    check_density_matrix,
    check_truncation,
    commutator,
    dimension,
    tensor,
)

rates = st.floats(min_value=0.0, max_value=2.0)


def test_dimension_and_validation():
    assert dimension(3) == 8
    with pytest.raises(ValueError):
        build_annihilation(0)
    with pytest.raises(ValueError):
        SystemParams(g=-1.0, kappa=0.1, gamma=0.0)
    with pytest.raises(ValueError):
        SystemParams(g=0.1, kappa=0.1, gamma=0.0, n_max=0)


def test_annihilation_ladder():
    a1 = build_annihilation(1)
    assert np.allclose(a1 @ basis_state("g", 1, 1), basis_state("g", 0, 1))
    a3 = build_annihilation(3)
    assert np.allclose(a3 @ basis_state("e", 3, 3), np.sqrt(3) * basis_state("e", 2, 3))


def test_number_operator_spectrum():
    a = build_annihilation(2)
    ev = np.sort(np.linalg.eigvalsh(adjoint(a) @ a))
    assert np.allclose(ev, [0, 0, 1, 1, 2, 2])


def test_sigma_action():
    s = build_sigma(2)
    assert np.allclose(s @ basis_state("e", 0, 2), basis_state("g", 0, 2))
    for n in range(3):
        assert np.allclose(s @ basis_state("g", n, 2), 0)
    sd = adjoint(s)
    assert np.array_equal(build_sigma_z(2), sd @ s - s @ sd)
    assert np.array_equal(commutator(sd, s), build_sigma_z(2))


def test_tensor_adjoint_commutator():
    assert np.array_equal(tensor(np.eye(2), np.eye(3)), np.eye(6))
    x = np.arange(16).reshape(4, 4) * (1 + 2j)
    assert np.array_equal(adjoint(adjoint(x)), x)
    a = build_annihilation(4)
    # exact on the truncated space
    assert np.allclose(commutator(adjoint(a) @ a, a), -a, atol=1e-14)
    with pytest.raises(ValueError):
        commutator(np.eye(2), np.eye(3))


def test_zero_hamiltonian():
    assert np.allclose(build_hamiltonian(SystemParams(0.0, 0.1, 0.1)), 0)


def test_dressed_states():
    g = 2 * np.pi * 0.025
    h = build_hamiltonian(SystemParams(g, 0.0, 0.0, n_max=1))
    # single-excitation block {|e,0>, |g,1>}
    idx = [2, 1]
    ev = np.linalg.eigvalsh(h[np.ix_(idx, idx)])
    assert np.allclose(ev, [-g, g], atol=1e-14)
    assert ev[1] - ev[0] == pytest.approx(2 * g)


@given(g=rates, kappa=rates, delta=st.floats(-3, 3), amp=rates, carrier=st.floats(-3, 3),
       target=st.sampled_from(["cavity", "dot", "both"]), t=st.floats(0, 500))
def test_hamiltonian_hermitian(g, kappa, delta, amp, carrier, target, t):
    p = SystemParams(g, kappa, 0.01, delta=delta, n_max=3)
    pulse = PulseShape("gaussian", amp, 100.0, 40.0, carrier, target)
    h = build_hamiltonian(p, pulse, t)
    scale = max(np.abs(h).max(), 1e-300)
    assert np.abs(h - adjoint(h)).max() <= 1e-12 * scale


@given(g=rates, delta=st.floats(-3, 3), n_max=st.integers(1, 5))
def test_excitation_number_conserved(g, delta, n_max):
    p = SystemParams(g, 0.1, 0.01, delta=delta, n_max=n_max)
    a, s = build_annihilation(n_max), build_sigma(n_max)
    n_exc = adjoint(a) @ a + adjoint(s) @ s
    assert np.abs(commutator(n_exc, build_hamiltonian(p))).max() <= 1e-10


def test_negative_amplitude_rejected():
    with pytest.raises(ValueError):
        PulseShape("cw", -0.1)


def test_density_matrix_checks():
    rho = np.diag([0.5, 0.5, 0, 0]).astype(complex)
    check_density_matrix(rho)
    with pytest.raises(StateValidityError):
        check_density_matrix(2 * rho)
    bad = rho.copy()
    bad[0, 1] = 1e-3
    with pytest.raises(StateValidityError):
        check_density_matrix(bad)
    with pytest.raises(StateValidityError):
        check_density_matrix(np.diag([1.2, -0.2, 0, 0]).astype(complex))


def test_truncation_flag():
    check_truncation(np.array([1e-7]), 3)
    with pytest.raises(TruncationError):
        check_truncation(np.array([1e-7, 2e-6]), 3)
