"""Acceptance criteria 1-8, each at its stated tolerance.

Every test records one PASS/FAIL line (printed, and repeated in the pytest
terminal summary) before asserting.
"""

import math
import time

import numpy as np

from qdcavity.config import PRESETS, load_config
from qdcavity.drive import PulseShape
from qdcavity.dynamics import evolve_master, g2_cw, steady_state
from qdcavity.errors import UnsupportedFeatureError
from qdcavity.experiments import (
    ExperimentConfig,
    detuned_resonant_drive,
    fit_dephasing,
    g2_cw_experiment,
    g2_pulsed_experiment,
    pl_decay_resonant,
    preset_dynamics,
    pulsed_reflectivity_series,
    reflectivity_scan,
)
from qdcavity.hilbert import check_density_matrix
from qdcavity.mcwf import ensemble_average
from qdcavity.spectra import analytic_spectrum, linear_coeffs, numerical_spectrum, relative_l2

from conftest import record

# absolute accuracy of the master-equation oracle (its atol is 1e-10 per step)
ORACLE_FLOOR = 1e-8


def verdict(n, ok, detail):
    record(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_criterion_1_vacuum_rabi_doublet():
    config = load_config("fig1f_reflectivity")
    res, dt = timed(reflectivity_scan, config)
    target = 2 * linear_coeffs(config.params).lambda_plus.imag
    sep = res.scalars["peak_separation"]
    sep_err = abs(sep - target) / target
    dip = res.scalars["dot_resonance_to_peak"]
    ok = res.scalars["n_peaks"] == 2 and sep_err <= 0.02 and dip < 0.30 and dt < 10
    assert verdict(
        1,
        ok,
        f"separation {sep:.4f} vs 2 Im(lambda+) {target:.4f} rad/ps (err {sep_err:.1%}, need <=2%); "
        f"on-dot signal/peak {dip:.3f} (need <0.30); runtime {dt:.1f}s (need <10s)",
    )


def test_criterion_2_time_domain_rabi_period():
    config = load_config("fig2_rabi")
    res, dt = timed(pulsed_reflectivity_series, config)
    expected = 2 * math.pi / config.params.g
    period = res.scalars["periods"][0]
    vis = res.scalars["visibilities"]
    period_ok = period is not None and abs(period - expected) / expected <= 0.05
    vis_ok = all(b < a for a, b in zip(vis, vis[1:]))
    ok = period_ok and vis_ok and dt < 30
    shown = "unresolved (fewer than two peaks)" if period is None else f"{period:.2f} ps"
    assert verdict(
        2,
        ok,
        f"period at lowest power {shown} vs {expected:.1f} ps (need within 5%); "
        f"visibilities {['%.3f' % v for v in vis]} (need strictly decreasing); runtime {dt:.1f}s (need <30s)",
    )


def test_criterion_3_resonant_pl_lifetime():
    config = load_config("fig1g_pl")
    res, dt = timed(pl_decay_resonant, config)
    t_e = res.scalars["one_over_e_time"]
    fit = res.scalars["lifetime"]
    lo, hi = 17.0 * 0.8, 17.0 * 1.2
    ok = lo <= t_e <= hi and lo <= fit <= hi and dt < 10
    assert verdict(
        3,
        ok,
        f"1/e time {t_e:.2f} ps, fitted tail lifetime {fit:.2f} ps (need both in [{lo:.1f}, {hi:.1f}]); "
        f"runtime {dt:.2f}s (need <10s)",
    )


def test_criterion_4_detuned_lifetime_and_dephasing_recovery():
    config = load_config("fig4d_lifetime")
    t0 = time.perf_counter()
    res = detuned_resonant_drive(config)
    lifetime = res.scalars["lifetime"]
    gd = fit_dephasing(config, 118.0)
    dt = time.perf_counter() - t0
    ratio = gd / config.params.g
    ok = abs(lifetime - 118.0) <= 0.25 * 118.0 and abs(ratio - 0.10) <= 0.02 and dt < 120
    assert verdict(
        4,
        ok,
        f"lifetime {lifetime:.2f} ps (need 118 +/- 29.5); recovered gamma_d/g {ratio:.4f} "
        f"(need 0.10 +/- 0.02); runtime {dt:.1f}s (need <120s)",
    )


def _mcwf_vs_master(name):
    config = load_config(name)
    sc = preset_dynamics(config)
    ens = ensemble_average(sc.psi0, sc.t_grid, sc.params, sc.drive, n_traj=1000, master_seed=config.seed)
    ref = evolve_master(sc.psi0, sc.t_grid, sc.params, sc.drive)
    worst = []
    for obs in ("cavity_photons", "dot_population"):
        diff = np.abs(ens.mean[obs] - ref[obs].values)
        bad = diff > 3 * ens.stderr[obs] + ORACLE_FLOOR
        worst.append((obs, int(bad.sum()), len(diff)))
    return worst


def test_criterion_5_solver_cross_validation():
    t0 = time.perf_counter()
    failures = []
    for name in PRESETS:
        for obs, n_bad, n in _mcwf_vs_master(name):
            if n_bad:
                failures.append(f"{name}:{obs} {n_bad}/{n} points beyond 3 SE")
    spec_fail = []
    worst_l2 = 0.0
    for name in PRESETS:
        params = load_config(name).params
        w = np.linspace(-abs(params.delta) / 2 - 1.0, abs(params.delta) / 2 + 1.0, 1601) + 1e-4
        for target in ("dot", "cavity"):
            an = analytic_spectrum(params, target, w)
            nu = numerical_spectrum(params, target, w)
            for label, a, b in (("s_cav", nu.s_cav, an.s_cav), ("s_qd", nu.s_qd, an.s_qd)):
                err = relative_l2(a, b, w)
                worst_l2 = max(worst_l2, err)
                if err > 0.05:
                    spec_fail.append(f"{name}/{target}/{label} L2={err:.3f}")
    dt = time.perf_counter() - t0
    ok = not failures and not spec_fail and dt < 300
    detail = (
        f"MCWF(1000) vs master: {'all presets within 3 SE' if not failures else '; '.join(failures)}; "
        f"spectra: {'all within 5% L2' if not spec_fail else ', '.join(spec_fail)} (worst {worst_l2:.3f}); "
        f"runtime {dt:.0f}s (need <300s)"
    )
    assert verdict(5, ok, detail)


def test_criterion_6_state_validity():
    problems = []
    n_checked = 0
    for name in PRESETS:
        config = load_config(name)
        sc = preset_dynamics(config)
        sol = evolve_master(sc.psi0, sc.t_grid, sc.params, sc.drive, validate=False)
        for rho in sol.states:
            try:
                check_density_matrix(rho)
            except Exception as exc:  # noqa: BLE001 - collected into the verdict
                problems.append(f"{name}: {exc}")
                break
        n_checked += len(sol.states)
        if config.pulse is not None and config.pulse.is_cw:
            check_density_matrix(steady_state(config.params, config.pulse))
            tail = g2_cw(config.params, config.pulse, np.array([0.0, 2000.0])).values[-1]
            if abs(tail - 1) > 0.01:
                problems.append(f"{name}: g2(2000 ps) = {tail:.4f}")
    # default truncation n_max = 5; at n_max = 2 the coherent state is cut at O(|alpha|^2)
    empty = load_config("fig1f_reflectivity").params.replace(g=0.0, n_max=5)
    coh = g2_cw(empty, PulseShape("cw", 0.002, target="cavity"), np.linspace(0, 100, 201)).values
    coh_err = float(np.max(np.abs(coh - 1)))
    if coh_err > 1e-6:
        problems.append(f"coherent empty cavity max |g2-1| = {coh_err:.2e}")
    ok = not problems
    assert verdict(
        6,
        ok,
        f"{n_checked} checkpoints over {len(PRESETS)} presets; cw g2(tau->inf) within 1%; "
        f"coherent empty-cavity (n_max=5) max |g2-1| {coh_err:.1e}" + ("" if ok else "; " + "; ".join(problems)),
    )


def test_criterion_7_antibunching():
    config = load_config("fig4_g2")
    t0 = time.perf_counter()
    pulsed = g2_pulsed_experiment(config)
    cw = g2_cw_experiment(config)
    dt = time.perf_counter() - t0
    r = pulsed.scalars["center_to_side"]
    se = pulsed.scalars["center_to_side_stderr"]
    g0 = cw.scalars["g2_0"]
    ok = r < 0.5 and g0 < 0.5 and dt < 300
    assert verdict(
        7,
        ok,
        f"pulsed centre/side {r:.3f} +/- {se:.3f} over {pulsed.scalars['n_pulses']} pulses (need <0.5); "
        f"cw g2(0) {g0:.4f} (need <0.5); runtime {dt:.0f}s (need <300s)",
    )


def test_criterion_8_exclusions():
    config = load_config("fig4_g2")
    try:
        ExperimentConfig(config.params, xx_driving=True)
        rejected = False
    except UnsupportedFeatureError:
        rejected = True
    ok = rejected
    assert verdict(
        8,
        ok,
        "absolute count rates, the temperature-series data/theory gap, spectrometer-limited widths and "
        "XX two-photon driving are out of scope; XX requests raise UnsupportedFeatureError",
    )
