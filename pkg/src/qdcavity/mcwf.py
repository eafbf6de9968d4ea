"""Monte Carlo wavefunction (quantum jump) unravelling of the master equation.

Trajectories evolve under H_eff = H - (i/2) sum_k c_k^dag c_k until the
squared norm drops below a uniform random threshold; the jump time is then
refined by bisection on the dense Runge-Kutta output, a channel is drawn
with probability proportional to ||c_k psi||^2 and the state renormalised.

Randomness comes from counter-based Philox streams: trajectory ``i`` of an
ensemble with master seed ``s`` uses key ``(s, 0)`` and counter offset ``i``,
so a trajectory's output is fixed by ``(s, i)`` alone.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from . import integrate as rk
from .dynamics import collapse_operators, default_max_step, default_observables
from .errors import ConvergenceError, QDCavityError
from .hilbert import (
    adjoint,
    check_pure_state,
    check_truncation,
    hamiltonian_parts,
    top_level_projector,
)

TRAJECTORY_DOMAIN = 0
DETECTOR_DOMAIN = 1
DEFAULT_CHUNK = 256


def stream(seed, index, domain=TRAJECTORY_DOMAIN):
    """Independent generator for (seed, domain, index) via a Philox counter offset."""
    bitgen = np.random.Philox(key=[int(seed) % 2**64, domain], counter=[0, 0, 0, int(index)])
    return np.random.Generator(bitgen)


@dataclass
class TrajectoryRecord:
    seed: int
    index: int
    times: np.ndarray
    jump_times: np.ndarray
    jump_channels: tuple
    states: np.ndarray | None = None
    expectations: dict = field(default_factory=dict)

    @property
    def jumps(self):
        return list(zip(self.jump_times.tolist(), self.jump_channels))

    def count(self, channel):
        return sum(1 for c in self.jump_channels if c == channel)


@dataclass
class EnsembleResult:
    times: np.ndarray
    n_traj: int
    master_seed: int
    mean: dict
    stderr: dict
    jump_counts: dict
    records: list | None = None


class _Model:
    """Pre-multiplied generators for d psi / dt = -i H_eff(t) psi."""

    def __init__(self, params, drive):
        h0, hd = hamiltonian_parts(params, drive)
        self.c_ops = collapse_operators(params)
        self.labels = tuple(label for label, _ in self.c_ops)
        decay = sum((adjoint(c) @ c for _, c in self.c_ops), np.zeros_like(h0))
        self.m0 = -1j * (h0 - 0.5j * decay)
        self.md = None if hd is None else -1j * hd
        self.drive = drive
        self.cw_amp = drive.amplitude if (drive is not None and drive.is_cw) else None
        if self.cw_amp is not None:
            self.m0 = self.m0 + self.cw_amp * self.md
            self.md = None

    def rhs(self, t, y):
        out = rk.matvec(self.m0, y)
        if self.md is not None:
            out += self.drive.envelope(t)[:, None] * rk.matvec(self.md, y)
        return out


def _norm2(y):
    return np.sum(y.real**2 + y.imag**2, axis=1)


SWITCH_SIGMAS = 8.0
EIG_COND_LIMIT = 1e8


def _exact_generator(model):
    """Eigen-decomposition of the constant generator, or None if ill-conditioned."""
    evals, vecs = np.linalg.eig(model.m0)
    if np.linalg.cond(vecs) > EIG_COND_LIMIT:
        return None
    return evals, vecs, np.linalg.inv(vecs)


def _switch_time(drive, t0, t_end):
    """Start of the interval on which the generator is constant.

    A Gaussian pulse is treated as over 8 sigma after its centre, where the
    envelope is below 1e-14 of its peak.
    """
    if drive is None or drive.is_cw:
        return t0
    return min(max(drive.center + SWITCH_SIGMAS * drive.sigma, t0), t_end)


def _run_batch(
    model,
    psi0,
    t_grid,
    rngs,
    observables,
    rtol,
    atol,
    jump_tol,
    max_step,
    store_states,
    max_steps,
):
    """Evolve one batch of trajectories; every row shares ``t_grid``.

    While the drive is time dependent the rows are stepped with adaptive
    Dormand-Prince and jump times are bisected on the dense output. Once
    the generator is constant each row is propagated exactly through the
    eigenvectors of -i H_eff and the jump time is bisected on the exact,
    monotonically decreasing norm.
    """
    n_rows, d = psi0.shape
    n_t = len(t_grid)
    t0, t_end = float(t_grid[0]), float(t_grid[-1])
    obs_ops = list(observables.values())

    t = np.full(n_rows, t0)
    y = psi0.astype(complex).copy()
    thresh = np.array([g.random() for g in rngs])
    k_out = np.zeros(n_rows, dtype=int)
    obs_vals = np.zeros((n_rows, n_t, len(obs_ops)))
    states = np.zeros((n_rows, n_t, d), dtype=complex) if store_states else None
    jumps = [[] for _ in range(n_rows)]

    def record(rows, k_idx, psi):
        psi = psi / np.sqrt(_norm2(psi))[:, None]
        for m, op in enumerate(obs_ops):
            obs_vals[rows, k_idx, m] = np.sum((psi.conj() * rk.matvec(op, psi)).real, axis=1)
        if store_states:
            states[rows, k_idx] = psi

    def jump(rows, psi, t_jump):
        y[rows], labels = _apply_jumps(model, psi, [rngs[r] for r in rows])
        for n, r in enumerate(rows):
            thresh[r] = rngs[r].random()
            jumps[r].append((float(t_jump[n]), labels[n]))
        t[rows] = t_jump

    def flush_checkpoints(rows, t_stop, state_at):
        while True:
            kq = k_out[rows]
            due = kq < n_t
            due[due] = t_grid[kq[due]] <= t_stop[due]
            if not due.any():
                return
            q = np.nonzero(due)[0]
            record(rows[q], kq[q], state_at(q, t_grid[kq[q]]))
            k_out[rows[q]] += 1

    record(np.arange(n_rows), k_out.copy(), y)
    k_out += 1

    gen = _exact_generator(model)
    t_rk = t_end if gen is None else _switch_time(model.drive, t0, t_end)
    if t_rk > t0:
        _rk_phase(model, t, y, t_rk, t0, thresh, rtol, atol, jump_tol, max_step, max_steps, flush_checkpoints, jump)
    if t_rk < t_end:
        _exact_phase(gen, t, y, t_end, thresh, jump_tol, flush_checkpoints, jump)

    if np.any(k_out < n_t):
        raise ConvergenceError("trajectory ended before the last checkpoint")
    return obs_vals, states, jumps


def _rk_phase(model, t, y, t_stop_all, t0, thresh, rtol, atol, jump_tol, max_step, max_steps, flush, jump):
    f = model.rhs(t, y)
    h = rk.initial_step(model.rhs, t, y, f, rtol, atol, max_step)
    n_steps = np.zeros(len(t), dtype=int)
    active = t < t_stop_all
    while active.any():
        rows = np.nonzero(active)[0]
        tt, yy, ff = t[rows], y[rows], f[rows]
        remaining = t_stop_all - tt
        hh = np.minimum(h[rows], remaining)
        y_new, f_new, kk, err = rk.dopri_step(model.rhs, tt, yy, ff, hh)
        en = rk.error_norm(err, yy, y_new, rtol, atol)
        fac = rk.step_factor(en)
        acc = en <= 1.0
        h[rows] = np.minimum(np.where(acc, hh * fac, hh * np.minimum(fac, 1.0)), max_step)
        n_steps[rows] += 1
        if np.any(n_steps[rows] > max_steps) or np.any(h[rows] < 1e-12 * max(t_stop_all - t0, 1.0)):
            raise ConvergenceError("trajectory step control failed (step underflow or budget)")
        if not acc.any():
            continue

        sel = np.nonzero(acc)[0]
        rows = rows[sel]
        tt, yy, hh = tt[sel], yy[sel], hh[sel]
        y_new, f_new = y_new[sel], f_new[sel]
        kk = [k[sel] for k in kk]
        t_stop = np.where(hh == remaining[sel], t_stop_all, tt + hh)

        jumped = _norm2(y_new) <= thresh[rows]
        theta_stop = np.ones(len(rows))
        if jumped.any():
            j = np.nonzero(jumped)[0]
            theta_stop[j] = _bisect_jump(yy[j], hh[j], [k[j] for k in kk], thresh[rows[j]], jump_tol)
            t_stop[j] = tt[j] + theta_stop[j] * hh[j]

        def state_at(q, times):
            theta = np.clip((times - tt[q]) / hh[q], 0.0, 1.0)
            return rk.dense_eval(yy[q], hh[q], [k[q] for k in kk], theta)

        flush(rows, t_stop, state_at)

        keep = ~jumped
        r_keep = rows[keep]
        t[r_keep] = t_stop[keep]
        y[r_keep] = y_new[keep]
        f[r_keep] = f_new[keep]
        if jumped.any():
            j = np.nonzero(jumped)[0]
            psi_j = rk.dense_eval(yy[j], hh[j], [k[j] for k in kk], theta_stop[j])
            jump(rows[j], psi_j, t_stop[j])
            f[rows[j]] = model.rhs(t[rows[j]], y[rows[j]])
        active = t < t_stop_all


def _exact_phase(gen, t, y, t_end, thresh, jump_tol, flush, jump):
    evals, vecs, inv = gen

    def prop(c, dt):
        return rk.matvec(vecs, np.exp(dt[:, None] * evals[None, :]) * c)

    active = t < t_end
    while active.any():
        rows = np.nonzero(active)[0]
        c = rk.matvec(inv, y[rows])
        dt_end = t_end - t[rows]
        jumped = _norm2(prop(c, dt_end)) <= thresh[rows]
        dt_stop = dt_end.copy()
        if jumped.any():
            j = np.nonzero(jumped)[0]
            lo = np.zeros(len(j))
            hi = dt_end[j].copy()
            n_iter = np.ceil(np.log2(np.maximum(hi / jump_tol, 1.0))).astype(int)
            for it in range(int(n_iter.max(initial=0))):
                live = it < n_iter
                mid = 0.5 * (lo + hi)
                below = _norm2(prop(c[j], mid)) <= thresh[rows[j]]
                hi = np.where(live & below, mid, hi)
                lo = np.where(live & ~below, mid, lo)
            dt_stop[j] = hi
        t_start = t[rows].copy()
        t_stop = np.where(jumped, t_start + dt_stop, t_end)

        flush(rows, t_stop, lambda q, times: prop(c[q], times - t_start[q]))

        keep = ~jumped
        y[rows[keep]] = prop(c[keep], dt_end[keep])
        t[rows[keep]] = t_end
        if jumped.any():
            j = np.nonzero(jumped)[0]
            jump(rows[j], prop(c[j], dt_stop[j]), t_stop[j])
        active = t < t_end


def _bisect_jump(y_old, h, k, thresh, jump_tol):
    """theta in (0, 1] at which ||psi||^2 first falls to the threshold, per row.

    Each row gets a fixed iteration count from its own step size so that the
    result does not depend on the other rows of the batch.
    """
    lo = np.zeros(len(h))
    hi = np.ones(len(h))
    n_iter = np.ceil(np.log2(np.maximum(h / jump_tol, 1.0))).astype(int)
    for it in range(int(n_iter.max(initial=0))):
        live = it < n_iter
        mid = 0.5 * (lo + hi)
        below = _norm2(rk.dense_eval(y_old, h, k, mid)) <= thresh
        hi = np.where(live & below, mid, hi)
        lo = np.where(live & ~below, mid, lo)
    return hi


def _apply_jumps(model, psi, rngs):
    """Collapse each row of ``psi`` through a channel drawn from its own stream."""
    labels = []
    outs = np.stack([rk.matvec(c, psi) for _, c in model.c_ops])
    weights = _norm2_stack(outs)
    new = np.empty_like(psi)
    for n, rng in enumerate(rngs):
        w = weights[:, n]
        total = w.sum()
        if not total > 0:
            raise QDCavityError("jump triggered with zero jump probability")
        u = rng.random() * total
        k = min(int(np.searchsorted(np.cumsum(w), u, side="right")), len(w) - 1)
        new[n] = outs[k, n] / np.sqrt(w[k])
        labels.append(model.labels[k])
    return new, labels


def _norm2_stack(x):
    return np.sum(x.real**2 + x.imag**2, axis=-1)


def _prepare(psi0, t_grid, params):
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (params.dim,):
        raise ValueError(f"psi0 must have shape ({params.dim},)")
    check_pure_state(psi0)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 2 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing with at least two points")
    return psi0, t_grid


def _observables(params, observables):
    obs = default_observables(params) if observables is None else dict(observables)
    obs["_top_level"] = top_level_projector(params.n_max)
    return obs


def _simulate(
    psi0,
    t_grid,
    params,
    drive,
    seed,
    indices,
    observables,
    rtol,
    atol,
    jump_tol,
    store_states,
    max_steps,
):
    model = _Model(params, drive)
    rngs = [stream(seed, i) for i in indices]
    max_step = default_max_step(drive)
    batch = np.repeat(psi0[None, :], len(indices), axis=0)
    return _run_batch(
        model, batch, t_grid, rngs, observables, rtol, atol, jump_tol, max_step, store_states, max_steps
    )


def evolve_trajectory(
    psi0,
    t_grid,
    params,
    drive=None,
    seed=0,
    index=0,
    observables=None,
    rtol=1e-6,
    atol=1e-8,
    jump_tol=1e-3,
    max_steps=10_000_000,
):
    """Single quantum trajectory with state checkpoints on ``t_grid``.

    ``(seed, index)`` selects the random stream; ensemble trajectory ``i``
    with master seed ``s`` equals ``evolve_trajectory(..., seed=s, index=i)``.
    """
    psi0, t_grid = _prepare(psi0, t_grid, params)
    obs = _observables(params, observables)
    vals, states, jumps = _simulate(
        psi0, t_grid, params, drive, seed, [index], obs, rtol, atol, jump_tol, True, max_steps
    )
    check_truncation(vals[0, :, -1], params.n_max)
    jt = np.array([t for t, _ in jumps[0]])
    names = list(obs)
    expectations = {name: vals[0, :, m] for m, name in enumerate(names) if not name.startswith("_")}
    return TrajectoryRecord(
        seed=seed,
        index=index,
        times=t_grid,
        jump_times=jt,
        jump_channels=tuple(c for _, c in jumps[0]),
        states=states[0],
        expectations=expectations,
    )


def ensemble_average(
    psi0,
    t_grid,
    params,
    drive=None,
    n_traj=500,
    master_seed=0,
    observables=None,
    rtol=1e-6,
    atol=1e-8,
    jump_tol=1e-3,
    threads=1,
    chunk_size=DEFAULT_CHUNK,
    keep_records=False,
    max_steps=10_000_000,
):
    """Mean and standard error of observables over ``n_traj`` trajectories.

    Trajectories run in fixed chunks (optionally on several threads); the
    reduction is done over the full per-trajectory array in index order, so
    the result is independent of ``threads`` and ``chunk_size``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    psi0, t_grid = _prepare(psi0, t_grid, params)
    obs = _observables(params, observables)
    names = list(obs)
    chunks = [range(i, min(i + chunk_size, n_traj)) for i in range(0, n_traj, chunk_size)]

    def work(idx):
        try:
            return _simulate(
                psi0, t_grid, params, drive, master_seed, list(idx), obs, rtol, atol, jump_tol,
                keep_records, max_steps,
            )
        except QDCavityError as exc:
            exc.args = (f"trajectories {idx.start}-{idx.stop - 1}: {exc}",)
            raise

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]

    vals = np.concatenate([p[0] for p in parts], axis=0)
    jumps = [j for p in parts for j in p[2]]
    mean = vals.mean(axis=0)
    if n_traj > 1:
        stderr = vals.std(axis=0, ddof=1) / math.sqrt(n_traj)
    else:
        stderr = np.zeros_like(mean)
    check_truncation(mean[:, -1], params.n_max)

    labels = [label for label, _ in collapse_operators(params)]
    counts = {lab: np.array([sum(1 for _, c in js if c == lab) for js in jumps]) for lab in labels}
    records = None
    if keep_records:
        states = np.concatenate([p[1] for p in parts], axis=0)
        records = [
            TrajectoryRecord(
                seed=master_seed,
                index=i,
                times=t_grid,
                jump_times=np.array([t for t, _ in js]),
                jump_channels=tuple(c for _, c in js),
                states=states[i],
                expectations={n: vals[i, :, m] for m, n in enumerate(names) if not n.startswith("_")},
            )
            for i, js in enumerate(jumps)
        ]
    return EnsembleResult(
        times=t_grid,
        n_traj=n_traj,
        master_seed=master_seed,
        mean={n: mean[:, m] for m, n in enumerate(names) if not n.startswith("_")},
        stderr={n: stderr[:, m] for m, n in enumerate(names) if not n.startswith("_")},
        jump_counts=counts,
        records=records,
    )


def photodetection_times(
    params,
    drive,
    t_end,
    n_runs,
    master_seed,
    channel="cavity",
    rtol=1e-6,
    atol=1e-8,
    jump_tol=1e-3,
    chunk_size=None,
    threads=1,
):
    """Jump times on ``channel`` for ``n_runs`` trajectories starting in |g, 0>.

    Returns a list (one entry per run) of arrays of detection times in ps.
    """
    psi0 = np.zeros(params.dim, dtype=complex)
    psi0[0] = 1.0
    t_grid = np.array([0.0, float(t_end)])
    obs = {"_top_level": _observables(params, {})["_top_level"]}
    chunk_size = chunk_size or max(1, -(-n_runs // max(threads, 1)))
    chunks = [range(i, min(i + chunk_size, n_runs)) for i in range(0, n_runs, chunk_size)]

    def work(idx):
        return _simulate(
            psi0, t_grid, params, drive, master_seed, list(idx), obs, rtol, atol, jump_tol, False,
            10_000_000,
        )

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    out = []
    for _, _, jumps in parts:
        for js in jumps:
            out.append(np.array([t for t, c in js if c == channel]))
    return out


@dataclass
class G2Histogram:
    """Coincidence histogram of detection-time differences.

    ``window_centers``/``window_counts`` bin delays into rep-period-wide
    windows centred on multiples of the repetition period; ``ratio`` is the
    centre-window area over the mean side-window area.
    """

    delays: np.ndarray
    counts: np.ndarray
    window_centers: np.ndarray
    window_counts: np.ndarray
    ratio: float
    ratio_stderr: float
    mean_photons_per_pulse: float
    n_pulses: int
    photons_per_pulse: np.ndarray


def coincidence_histogram(event_times, rep_period, n_side=5, resolution=None):
    """Histogram all pairwise delays t_j - t_i (i != j) within +-(n_side + 1/2) periods."""
    ev = np.sort(np.asarray(event_times, dtype=float))
    reach = (n_side + 0.5) * rep_period
    delays = []
    for lag in range(1, len(ev)):
        dt = ev[lag:] - ev[:-lag]
        if dt.min() > reach:
            break
        delays.append(dt[dt <= reach])
    pos = np.concatenate(delays) if delays else np.zeros(0)
    all_delays = np.concatenate([-pos, pos])
    edges = (np.arange(-n_side, n_side + 2) - 0.5) * rep_period
    window_counts, _ = np.histogram(all_delays, bins=edges)
    res = resolution or rep_period / 50.0
    n_fine = int(round(2 * reach / res))
    fine_edges = np.linspace(-reach, reach, n_fine + 1)
    counts, _ = np.histogram(all_delays, bins=fine_edges)
    centers = 0.5 * (fine_edges[1:] + fine_edges[:-1])
    return centers, counts, np.arange(-n_side, n_side + 1) * rep_period, window_counts


def pulsed_g2_histogram(
    params,
    pulse,
    rep_period=12_500.0,
    n_pulses=20_000,
    detector_irf_sigma=0.0,
    master_seed=0,
    window=None,
    channel="cavity",
    n_side=5,
    resolution=None,
    threads=1,
):
    """Simulated HBT histogram of photodetections under a periodic pulse train.

    Each pulse is an independent trajectory from |g, 0> (the repetition
    period is assumed much longer than every decay time). Detection times
    are shifted to absolute time, smeared by Gaussian detector jitter of
    standard deviation ``detector_irf_sigma`` and all pairwise delays are
    histogrammed.
    """
    if pulse.is_cw:
        raise ValueError("pulsed_g2_histogram needs a gaussian pulse")
    if window is None:
        rates = [r for r in (params.kappa, params.gamma) if r > 0]
        slow = 1.0 / min(rates) if rates else 0.0
        window = pulse.end_time() + 12.0 * slow
    window = min(window, rep_period)
    if pulse.end_time() >= rep_period:
        raise ValueError("rep_period must be much longer than the pulse")

    det = photodetection_times(params, pulse, window, n_pulses, master_seed, channel, threads=threads)
    m = np.array([len(x) for x in det])
    mean_m = float(m.mean())
    if mean_m > 0.1:
        warnings.warn(
            f"mean photons per pulse {mean_m:.3f} > 0.1: pile-up regime beyond the model",
            RuntimeWarning,
            stacklevel=2,
        )
    rng = stream(master_seed, 0, DETECTOR_DOMAIN)
    ev = np.concatenate([k * rep_period + x for k, x in enumerate(det)]) if det else np.zeros(0)
    if detector_irf_sigma > 0 and ev.size:
        ev = ev + rng.normal(0.0, detector_irf_sigma, size=ev.size)
    centers, counts, wc, wcounts = coincidence_histogram(ev, rep_period, n_side, resolution)
    center = wcounts[n_side]
    side = np.concatenate([wcounts[:n_side], wcounts[n_side + 1 :]])
    side_mean = side.mean() if side.size else 0.0
    if side_mean > 0:
        ratio = center / side_mean
        ratio_err = ratio * math.sqrt((1.0 / center if center else 0.0) + 1.0 / side.sum())
        if center == 0:
            ratio_err = 1.0 / side_mean
    else:
        ratio, ratio_err = math.nan, math.nan
    return G2Histogram(
        delays=centers,
        counts=counts,
        window_centers=wc,
        window_counts=wcounts,
        ratio=float(ratio),
        ratio_stderr=float(ratio_err),
        mean_photons_per_pulse=mean_m,
        n_pulses=n_pulses,
        photons_per_pulse=m,
    )


def photon_number_g2(counts):
    """<m(m-1)> / <m>^2 from per-pulse photon counts."""
    m = np.asarray(counts, dtype=float)
    mean = m.mean()
    if mean == 0:
        return math.nan
    return float(np.mean(m * (m - 1)) / mean**2)
