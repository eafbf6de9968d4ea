import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdcavity.drive import PulseShape, pi_pulse_amplitude
from qdcavity.dynamics import evolve_master
from qdcavity.hilbert import SystemParams, basis_state
from qdcavity.mcwf import (
    coincidence_histogram,
    ensemble_average,
    evolve_trajectory,
    photon_number_g2,
    pulsed_g2_histogram,
    stream,
)

from conftest import G, GAMMA, KAPPA

T = np.linspace(0, 200, 81)


def _pulse(amp=0.01, target="cavity"):
    return PulseShape("gaussian", amp, center=50.0, fwhm=20.0, target=target)


def test_streams_are_reproducible_and_distinct():
    a = stream(3, 7).random(4)
    assert np.array_equal(a, stream(3, 7).random(4))
    assert not np.array_equal(a, stream(3, 8).random(4))
    assert not np.array_equal(a, stream(4, 7).random(4))


def test_trajectory_deterministic(device_params):
    p = device_params.replace(n_max=3)
    psi0 = basis_state("e", 0, 3)
    r1 = evolve_trajectory(psi0, T, p, _pulse(), seed=5, index=2)
    r2 = evolve_trajectory(psi0, T, p, _pulse(), seed=5, index=2)
    assert np.array_equal(r1.states, r2.states)
    assert r1.jumps == r2.jumps


def test_ensemble_member_equals_single_trajectory(device_params):
    p = device_params.replace(n_max=3)
    psi0 = basis_state("e", 0, 3)
    ens = ensemble_average(psi0, T, p, _pulse(), n_traj=6, master_seed=11, keep_records=True, chunk_size=4)
    for i in (0, 5):
        single = evolve_trajectory(psi0, T, p, _pulse(), seed=11, index=i)
        assert single.jumps == ens.records[i].jumps
        np.testing.assert_allclose(single.states, ens.records[i].states, atol=1e-12)


def test_one_trajectory_ensemble(device_params):
    p = device_params.replace(n_max=2)
    psi0 = basis_state("e", 0, 2)
    ens = ensemble_average(psi0, T, p, n_traj=1, master_seed=4)
    single = evolve_trajectory(psi0, T, p, seed=4, index=0)
    np.testing.assert_allclose(ens.mean["dot_population"], single.expectations["dot_population"], atol=1e-12)
    assert np.all(ens.stderr["dot_population"] == 0)


def test_independent_of_threads_and_chunks(device_params):
    p = device_params.replace(n_max=3)
    psi0 = basis_state("g", 0, 3)
    runs = [
        ensemble_average(psi0, T, p, _pulse(0.02), n_traj=40, master_seed=1, threads=t, chunk_size=c)
        for t, c in ((1, 256), (1, 7), (3, 5))
    ]
    for r in runs[1:]:
        for k in r.mean:
            np.testing.assert_array_equal(r.mean[k], runs[0].mean[k])
            np.testing.assert_array_equal(r.stderr[k], runs[0].stderr[k])


def test_no_jumps_without_dissipation():
    p = SystemParams(G, 0.0, 0.0, 0.0, n_max=2)
    rec = evolve_trajectory(basis_state("e", 0, 2), T, p, seed=0)
    assert rec.jumps == []
    # closed-system vacuum Rabi oscillation
    expected = np.cos(G * T) ** 2
    np.testing.assert_allclose(rec.expectations["dot_population"], expected, atol=1e-5)


@pytest.mark.parametrize("seed", range(5))
def test_single_excitation_emits_once(device_params, seed):
    p = device_params.replace(gamma_d=0.0, n_max=2)
    t = np.linspace(0, 2000, 11)
    rec = evolve_trajectory(basis_state("e", 0, 2), t, p, seed=seed)
    assert rec.count("cavity") + rec.count("dot") == 1
    assert rec.expectations["dot_population"][-1] < 1e-6


def test_checkpoints_normalised_and_jumps_ordered(device_params):
    p = device_params.replace(n_max=5)
    rec = evolve_trajectory(basis_state("g", 0, 5), T, p, PulseShape("cw", 0.02, target="cavity"), seed=2)
    norms = np.linalg.norm(rec.states, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-10)
    assert len(rec.jump_times) > 0
    assert np.all(np.diff(rec.jump_times) >= 0)
    assert rec.jump_times.min() >= T[0] and rec.jump_times.max() <= T[-1]


@settings(max_examples=3)
@given(gamma_d=st.floats(0.0, 0.02), target=st.sampled_from(["dot", "cavity"]))
def test_ensemble_unbiased(gamma_d, target):
    p = SystemParams(G, KAPPA, GAMMA, gamma_d, n_max=5)
    amp = pi_pulse_amplitude(20.0) if target == "dot" else 0.02
    pulse = PulseShape("gaussian", amp, center=40.0, fwhm=20.0, target=target)
    t = np.linspace(0, 150, 31)
    psi0 = basis_state("g", 0, 5)
    ens = ensemble_average(psi0, t, p, pulse, n_traj=300, master_seed=3)
    ref = evolve_master(psi0, t, p, pulse)
    for obs in ("cavity_photons", "dot_population"):
        diff = np.abs(ens.mean[obs] - ref[obs].values)
        # 4 sigma per point, plus a floor for points where every trajectory agrees
        assert np.all(diff <= 4 * ens.stderr[obs] + 2e-3)


def test_photon_number_g2():
    assert photon_number_g2([0, 1, 0, 1, 0]) == 0.0
    rng = np.random.default_rng(0)
    assert photon_number_g2(rng.poisson(0.5, 200_000)) == pytest.approx(1.0, abs=0.01)
    assert math.isnan(photon_number_g2([0, 0]))


def test_coincidence_windows():
    rep = 100.0
    ev = np.arange(20) * rep + 5.0
    _, _, centers, counts = coincidence_histogram(ev, rep, n_side=2)
    np.testing.assert_array_equal(centers, [-200, -100, 0, 100, 200])
    assert counts[2] == 0
    assert counts[1] == counts[3] == 19 and counts[0] == counts[4] == 18


def test_pulsed_g2_ideal_emitter_antibunched():
    # short pi pulse on a bare emitter: re-excitation within the pulse is rare
    p = SystemParams(0.0, KAPPA, 0.01, 0.0, n_max=1)
    pulse = PulseShape("gaussian", pi_pulse_amplitude(1.0), center=10.0, fwhm=1.0, target="dot")
    with pytest.warns(RuntimeWarning, match="pile-up"):
        h = pulsed_g2_histogram(p, pulse, rep_period=2000.0, n_pulses=2000, channel="dot", window=1500.0)
    assert h.mean_photons_per_pulse == pytest.approx(1.0, abs=0.02)
    assert h.ratio < 0.05


def test_pulsed_g2_coherent_cavity_poissonian():
    # weakly driven empty cavity: coherent light, g2 ratio near one
    p = SystemParams(0.0, KAPPA, GAMMA, 0.0, n_max=4)
    pulse = PulseShape("gaussian", 0.08, center=20.0, fwhm=10.0, target="cavity")
    with pytest.warns(RuntimeWarning):
        h = pulsed_g2_histogram(p, pulse, rep_period=500.0, n_pulses=3000, window=100.0)
    assert abs(h.ratio - 1.0) <= 3 * h.ratio_stderr
    assert photon_number_g2(h.photons_per_pulse) == pytest.approx(1.0, abs=0.15)
