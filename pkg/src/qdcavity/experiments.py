"""Measurement-level drivers: reflectivity scans, pulsed Rabi traces, PL decays,
detuned resonant driving, cross-feeding and temperature series, photon statistics.

Every driver takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentResult` holding named tables (columns with units), scalar
summaries and the config snapshot it was computed from.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
import math

import numpy as np
from numpy.polynomial.laguerre import laggauss
from scipy.optimize import brentq
from scipy.signal import find_peaks

from . import spectra
from .drive import PulseShape
from .dynamics import (
    TimeTrace,
    escalate_truncation,
    evolve_master,
    g2_cw,
    steady_state,
)
from .errors import FitError, UnsupportedFeatureError
from .hilbert import SystemParams, adjoint, basis_state, build_annihilation, build_sigma, ket2dm
from .mcwf import photon_number_g2, pulsed_g2_histogram
from .units import detuning_to_nm

SIGNALS = ("photon_number", "coherent")
JITTER_NODES = 48


# --------------------------------------------------------------------------
# configuration types


@dataclass(frozen=True)
class DetectorModel:
    """Gaussian instrument response; ``irf_fwhm`` in ps (0 disables it)."""

    irf_fwhm: float = 0.0
    time_resolution: float | None = None

    def __post_init__(self):
        if self.irf_fwhm < 0:
            raise ValueError("irf_fwhm must be >= 0")
        if self.time_resolution is not None and not self.time_resolution > 0:
            raise ValueError("time_resolution must be > 0")

    @property
    def irf_sigma(self):
        return self.irf_fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class TimeGrid:
    stop: float
    step: float
    start: float = 0.0

    def __post_init__(self):
        if not self.step > 0 or not self.stop > self.start:
            raise ValueError("time grid needs step > 0 and stop > start")

    def array(self):
        n = int(round((self.stop - self.start) / self.step))
        return self.start + self.step * np.arange(n + 1)


@dataclass(frozen=True)
class ScanGrid:
    """Uniform grid of laser detunings (rad/ps, from the reference frequency)."""

    start: float
    stop: float
    points: int

    def __post_init__(self):
        if self.points < 2 or not self.stop > self.start:
            raise ValueError("scan grid needs points >= 2 and stop > start")

    def array(self):
        return np.linspace(self.start, self.stop, int(self.points))


@dataclass(frozen=True)
class DetuningModel:
    """delta(T) in rad/ps from (temperature K, delta) anchor points.

    ``kind="linear"`` fits a straight line through the anchors and
    extrapolates; ``kind="table"`` interpolates and refuses to extrapolate.
    """

    kind: str = "linear"
    temperatures: tuple = ()
    deltas: tuple = ()

    def __post_init__(self):
        if self.kind not in ("linear", "table"):
            raise ValueError("detuning model kind must be 'linear' or 'table'")
        if len(self.temperatures) != len(self.deltas):
            raise ValueError("temperatures and deltas must have equal length")
        if self.temperatures and len(self.temperatures) < 2:
            raise ValueError("detuning model needs at least two anchor points")

    def __call__(self, temperature):
        t = np.asarray(self.temperatures, dtype=float)
        d = np.asarray(self.deltas, dtype=float)
        if t.size == 0:
            raise ValueError("no detuning model configured")
        if self.kind == "linear":
            slope, offset = np.polyfit(t, d, 1)
            return slope * np.asarray(temperature, dtype=float) + offset
        order = np.argsort(t)
        temp = np.asarray(temperature, dtype=float)
        if np.any(temp < t.min()) or np.any(temp > t.max()):
            raise ValueError("temperature outside the detuning table")
        return np.interp(temp, t[order], d[order])


@dataclass(frozen=True)
class G2Settings:
    rep_period: float = 12_500.0
    n_pulses: int = 20_000
    detector_sigma: float = 0.0
    n_side: int = 5
    window: float | None = None
    cw_amplitude: float = 0.002


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment driver needs; rates in rad/ps, times in ps."""

    params: SystemParams
    pulse: PulseShape | None = None
    detector: DetectorModel = field(default_factory=DetectorModel)
    p_dark: float = 0.0
    jitter_tau: float = 0.0
    temperatures: tuple = ()
    gamma0: float = 0.0
    alpha0: float = 0.0
    detuning_model: DetuningModel = field(default_factory=DetuningModel)
    qd_weight: float = 0.0
    signal: str = "photon_number"
    pump_target: str = "dot"
    wavelength_nm: float = 920.0
    time_grid: TimeGrid = field(default_factory=lambda: TimeGrid(400.0, 0.25))
    scan: ScanGrid = field(default_factory=lambda: ScanGrid(-0.6, 0.6, 601))
    powers: tuple = ()
    fit_window: tuple = (1.0, math.exp(-1.0))
    g2: G2Settings = field(default_factory=G2Settings)
    n_traj: int = 1000
    seed: int = 0
    xx_driving: bool = False
    name: str = ""

    def __post_init__(self):
        if not 0.0 <= self.p_dark <= 1.0:
            raise ValueError("p_dark must lie in [0, 1]")
        if self.jitter_tau < 0:
            raise ValueError("jitter_tau must be >= 0")
        if any(not t > 0 for t in self.temperatures):
            raise ValueError("temperatures must be positive")
        if self.signal not in SIGNALS:
            raise ValueError(f"signal must be one of {SIGNALS}")
        if self.pump_target not in spectra.PUMP_TARGETS:
            raise ValueError(f"pump_target must be one of {spectra.PUMP_TARGETS}")
        if self.qd_weight < 0:
            raise ValueError("qd_weight must be >= 0")
        lo, hi = self.fit_window
        if not 0 < hi < lo <= 1:
            raise ValueError("fit_window must be (start, stop) fractions with 1 >= start > stop > 0")
        if any(not p > 0 for p in self.powers):
            raise ValueError("powers must be positive")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if self.xx_driving:
            raise UnsupportedFeatureError(
                "two-photon biexciton (XX) driving is not modelled; only the exciton line is supported"
            )

    def replace(self, **changes):
        return replace(self, **changes)

    def with_params(self, **changes):
        return replace(self, params=self.params.replace(**changes))

    def to_dict(self):
        """Plain nested dict in canonical units; inverse of :meth:`from_dict`."""
        out = asdict(self)
        out["temperatures"] = list(self.temperatures)
        out["powers"] = list(self.powers)
        out["fit_window"] = list(self.fit_window)
        dm = out["detuning_model"]
        dm["temperatures"], dm["deltas"] = list(dm["temperatures"]), list(dm["deltas"])
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["params"] = SystemParams(**d["params"])
        d["pulse"] = None if d.get("pulse") is None else PulseShape(**d["pulse"])
        d["detector"] = DetectorModel(**d.get("detector", {}))
        dm = dict(d.get("detuning_model", {}))
        dm["temperatures"] = tuple(dm.get("temperatures", ()))
        dm["deltas"] = tuple(dm.get("deltas", ()))
        d["detuning_model"] = DetuningModel(**dm)
        if "time_grid" in d:
            d["time_grid"] = TimeGrid(**d["time_grid"])
        if "scan" in d:
            d["scan"] = ScanGrid(**d["scan"])
        d["g2"] = G2Settings(**d.get("g2", {}))
        for key in ("temperatures", "powers", "fit_window"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


# --------------------------------------------------------------------------
# results


@dataclass
class Table:
    """Columns of equal length; each column is (name, unit, values)."""

    columns: list

    def __post_init__(self):
        lengths = {len(np.asarray(c[2])) for c in self.columns}
        if len(lengths) > 1:
            raise ValueError("table columns must have equal length")

    def __getitem__(self, name):
        for col, _, values in self.columns:
            if col == name:
                return np.asarray(values)
        raise KeyError(name)

    @property
    def names(self):
        return [c[0] for c in self.columns]


@dataclass
class ExperimentResult:
    name: str
    config: ExperimentConfig
    tables: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    objects: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# signal processing helpers


def uniform_step(t):
    t = np.asarray(t, dtype=float)
    steps = np.diff(t)
    if len(steps) == 0 or np.ptp(steps) > 1e-9 * max(abs(steps.mean()), 1.0):
        raise ValueError("a uniform time grid is required")
    return float(steps.mean())


def gaussian_kernel(sigma, dt, n_sigma=6.0):
    half = int(math.ceil(n_sigma * sigma / dt))
    x = np.arange(-half, half + 1) * dt
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def convolve_irf(t, y, sigma):
    """Convolve ``y`` sampled on uniform ``t`` with a unit-area Gaussian of std ``sigma``.

    Samples beyond the grid are taken as zero on the left; area is preserved
    as long as ``y`` has decayed before the right edge.
    """
    y = np.asarray(y, dtype=float)
    if sigma <= 0:
        return y.copy()
    k = gaussian_kernel(sigma, uniform_step(t))
    half = (len(k) - 1) // 2
    full = np.convolve(y, k)
    return full[half : half + len(y)]


def exponential_jitter(t, y, tau, nodes=JITTER_NODES):
    """Average ``y(t - s)`` over delays s ~ Exp(mean tau) by Gauss-Laguerre quadrature.

    ``y`` is taken as zero before ``t[0]``.
    """
    y = np.asarray(y, dtype=float)
    if tau <= 0:
        return y.copy()
    if nodes < 32:
        raise ValueError("use at least 32 quadrature nodes")
    x, w = laggauss(nodes)
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(y)
    for xi, wi in zip(x, w):
        if wi == 0.0:
            continue
        out += wi * np.interp(t - tau * xi, t, y, left=0.0, right=0.0)
    return out


def fit_exponential_tail(t, y, window=(1.0, math.exp(-1.0))):
    """Mono-exponential lifetime from a log-linear fit after the global maximum.

    The fit window runs from where the trace first falls to ``window[0]`` of
    its peak to where it first falls below ``window[1]``. Returns
    (lifetime, amplitude, (t_start, t_stop)).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    start_frac, stop_frac = window
    ip = int(np.argmax(y))
    peak = y[ip]
    if not peak > 0:
        raise FitError("trace has no positive maximum")
    after = np.arange(ip, len(y))
    started = after[y[after] <= start_frac * peak]
    if start_frac >= 1.0:
        started = after
    if started.size == 0:
        raise FitError("trace never reaches the start of the fit window")
    i0 = started[0]
    below = np.nonzero(y[i0:] < stop_frac * peak)[0]
    if below.size == 0:
        raise FitError("trace does not decay to the end of the fit window before the grid ends")
    i1 = i0 + below[0]
    sel = slice(i0, i1)
    if i1 - i0 < 3:
        raise FitError("fewer than three samples in the fit window")
    if np.any(np.diff(y[sel]) > 0):
        raise FitError("trace is not monotone inside the fit window")
    slope, intercept = np.polyfit(t[sel], np.log(y[sel]), 1)
    if not slope < 0:
        raise FitError("fitted decay rate is not positive")
    return float(-1.0 / slope), math.exp(intercept), (float(t[i0]), float(t[i1 - 1]))


def one_over_e_time(t, y):
    """Time from the global maximum until ``y`` first drops to max/e (linear interpolation)."""
    i = int(np.argmax(y))
    level = y[i] / math.e
    below = np.nonzero(y[i:] <= level)[0]
    if len(below) == 0:
        raise FitError("signal never falls to 1/e of its maximum")
    j = i + int(below[0])
    t_cross = t[j - 1] + (y[j - 1] - level) / (y[j - 1] - y[j]) * (t[j] - t[j - 1])
    return float(t_cross - t[i])


def refine_peak(x, y, i):
    """Parabolic interpolation of a sampled maximum at index ``i``."""
    if i <= 0 or i >= len(y) - 1:
        return float(x[i]), float(y[i])
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = y0 - 2 * y1 + y2
    if denom == 0:
        return float(x[i]), float(y1)
    p = 0.5 * (y0 - y2) / denom
    h = x[i + 1] - x[i]
    return float(x[i] + p * h), float(y1 - 0.25 * (y0 - y2) * p)


def local_maxima(x, y, rel_prominence=1e-2):
    """Refined (position, height) pairs of maxima with prominence above a fraction of max(y)."""
    y = np.asarray(y, dtype=float)
    if y.max() <= 0:
        return []
    idx, _ = find_peaks(y, prominence=rel_prominence * y.max())
    return [refine_peak(np.asarray(x), y, i) for i in idx]


def oscillation_summary(t, y, rel_prominence=1e-2):
    """Period from peak-to-peak spacing and visibility of the first oscillation.

    ``resolved`` is False (and ``period`` None) when fewer than two peaks exist.
    """
    peaks = local_maxima(t, y, rel_prominence)
    out = {"n_peaks": len(peaks), "peak_times": [p[0] for p in peaks], "resolved": len(peaks) >= 2}
    if len(peaks) < 2:
        out["period"] = None
        out["visibility"] = 0.0
        return out
    times = np.array(out["peak_times"])
    out["period"] = float(np.mean(np.diff(times)))
    t = np.asarray(t)
    between = (t >= times[0]) & (t <= times[1])
    vmin = float(np.min(np.asarray(y)[between]))
    out["visibility"] = (peaks[0][1] - vmin) / (peaks[0][1] + vmin)
    return out


def peak_fwhm(x, y, x0):
    """Full width at half maximum of the local peak nearest ``x0`` (linear interpolation)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    idx, _ = find_peaks(y)
    if idx.size == 0:
        return math.nan
    i = idx[np.argmin(np.abs(x[idx] - x0))]
    half = 0.5 * y[i]
    left = np.nonzero(y[:i] < half)[0]
    right = np.nonzero(y[i:] < half)[0]
    if left.size == 0 or right.size == 0:
        return math.nan
    l1 = left[-1]
    r1 = i + right[0]
    xl = np.interp(half, [y[l1], y[l1 + 1]], [x[l1], x[l1 + 1]])
    xr = np.interp(half, [y[r1], y[r1 - 1]], [x[r1], x[r1 - 1]])
    return float(xr - xl)


def _map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _require(pulse, kind=None, target=None, what="experiment"):
    if pulse is None:
        raise ValueError(f"{what} needs a drive")
    if kind == "cw" and not pulse.is_cw:
        raise ValueError(f"{what} needs a cw drive")
    if kind == "gaussian" and pulse.is_cw:
        raise ValueError(f"{what} needs a gaussian pulse")
    if target is not None and pulse.target != target:
        raise ValueError(f"{what} needs a {target}-targeted drive")


def _cavity_signal(params, rho, signal):
    a = build_annihilation(params.n_max)
    if signal == "coherent":
        return abs(np.trace(a @ rho)) ** 2
    return np.trace(adjoint(a) @ a @ rho).real


# --------------------------------------------------------------------------
# experiments


def reflectivity_scan(config, laser_detunings=None, threads=1):
    """cw cross-polarised signal vs laser detuning, with dark-state mixing.

    signal' = p_dark * signal(g=0) + (1 - p_dark) * signal, where the signal is
    the intracavity photon number (or |<a>|^2 with ``signal="coherent"``).
    """
    pulse = config.pulse
    _require(pulse, "cw", "cavity", "reflectivity_scan")
    w = config.scan.array() if laser_detunings is None else np.asarray(laser_detunings, dtype=float)
    params = config.params
    empty = params.replace(g=0.0)

    def point(c):
        drive = pulse.with_carrier(c)
        rho = steady_state(params, drive)
        rho0 = steady_state(empty, drive)
        return (
            _cavity_signal(params, rho, config.signal),
            _cavity_signal(empty, rho0, config.signal),
            np.trace(adjoint(build_sigma(params.n_max)) @ build_sigma(params.n_max) @ rho).real,
        )

    vals = np.array(_map(point, list(w), threads))
    coupled, bare, dot = vals.T
    mixed = config.p_dark * bare + (1.0 - config.p_dark) * coupled
    peaks = local_maxima(w, mixed)
    scalars = {"n_peaks": len(peaks)}
    if len(peaks) >= 2:
        top = sorted(peaks, key=lambda p: -p[1])[:2]
        lo, hi = sorted(top)
        scalars["peak_positions"] = [lo[0], hi[0]]
        scalars["peak_separation"] = hi[0] - lo[0]
        mid = 0.5 * (lo[0] + hi[0])
        scalars["center_to_peak"] = float(np.interp(mid, w, mixed) / max(lo[1], hi[1]))
    # on-dot-resonance signal relative to the peak
    dot_res = -0.5 * params.delta
    scalars["dot_resonance_to_peak"] = float(np.interp(dot_res, w, mixed) / mixed.max())
    coeffs = spectra.linear_coeffs(params)
    scalars["linear_splitting"] = coeffs.splitting
    table = Table(
        [
            ("laser_detuning", "rad/ps", w),
            ("signal", "photons", mixed),
            ("signal_coupled", "photons", coupled),
            ("signal_empty_cavity", "photons", bare),
            ("dot_population", "1", dot),
        ]
    )
    result = spectra.SpectrumResult(
        w, np.clip(mixed, 0, None), np.clip(dot, 0, None), "cavity", "reflectivity", scalars
    )
    return ExperimentResult("reflectivity_scan", config, {"reflectivity": table}, scalars, {"spectrum": result})


def _pulsed_cavity_traces(config, pulse):
    t = config.time_grid.array()

    def traces(params):
        rho0 = ket2dm(basis_state("g", 0, params.n_max))
        a = build_annihilation(params.n_max)
        obs = {"n": adjoint(a) @ a}
        out = []
        for p in (params, params.replace(g=0.0)):
            sol = evolve_master(rho0, t, p, pulse, observables=obs)
            if config.signal == "coherent":
                out.append(np.abs(np.einsum("ij,tji->t", a, sol.states)) ** 2)
            else:
                out.append(sol["n"].values)
        return out

    (coupled, bare), used = escalate_truncation(traces, config.params)
    return t, coupled, bare, used.n_max


def pulsed_reflectivity(config, power=None):
    """Time-resolved reflectivity under a Gaussian cavity pulse.

    ``power`` (same unit as ``config.powers``) rescales the field amplitude
    by sqrt(power / powers[0]); the amplitude in the config is the
    calibration for the first (lowest) power.
    """
    pulse = config.pulse
    _require(pulse, "gaussian", "cavity", "pulsed_reflectivity")
    if power is not None:
        if not config.powers:
            raise ValueError("config.powers must list the calibration power first")
        pulse = pulse.scaled(math.sqrt(power / config.powers[0]))
    t, coupled, bare, n_max = _pulsed_cavity_traces(config, pulse)
    mixed = config.p_dark * bare + (1.0 - config.p_dark) * coupled
    signal = convolve_irf(t, mixed, config.detector.irf_sigma)
    summary = oscillation_summary(t, signal)
    scalars = {
        "period": summary["period"],
        "oscillation_resolved": summary["resolved"],
        "visibility": summary["visibility"],
        "n_peaks": summary["n_peaks"],
        "peak_times": summary["peak_times"],
        "amplitude": pulse.amplitude,
        "expected_period": 2 * math.pi / config.params.g if config.params.g else None,
        "n_max_used": n_max,
    }
    table = Table(
        [
            ("time", "ps", t),
            ("signal", "photons", signal),
            ("photons_coupled", "photons", coupled),
            ("photons_empty_cavity", "photons", bare),
        ]
    )
    trace = TimeTrace(t, signal, "pulsed_reflectivity", config.params, "photons")
    return ExperimentResult("pulsed_reflectivity", config, {"trace": table}, scalars, {"trace": trace})


def pulsed_reflectivity_series(config):
    """pulsed_reflectivity at every power in ``config.powers`` (a single run if empty)."""
    if not config.powers:
        return pulsed_reflectivity(config)
    runs = [pulsed_reflectivity(config, p) for p in config.powers]
    t = runs[0].tables["trace"]["time"]
    cols = [("time", "ps", t)]
    for p, r in zip(config.powers, runs):
        cols.append((f"signal_P{p:g}", "photons", r.tables["trace"]["signal"]))
    scalars = {
        "powers": list(config.powers),
        "periods": [r.scalars["period"] for r in runs],
        "oscillation_resolved": [r.scalars["oscillation_resolved"] for r in runs],
        "visibilities": [r.scalars["visibility"] for r in runs],
        "n_peaks": [r.scalars["n_peaks"] for r in runs],
        "expected_period": runs[0].scalars["expected_period"],
    }
    return ExperimentResult("pulsed_reflectivity", config, {"traces": Table(cols)}, scalars, {"runs": runs})


def emission_fluxes(params, sol):
    """(cavity flux kappa <a^dag a>, dot flux gamma <s^dag s>) from a MasterSolution."""
    return params.kappa * sol["cavity_photons"].values, params.gamma * sol["dot_population"].values


def pl_decay_resonant(config):
    """Emission after initialising the emitter in |e, 0>, with timing jitter and IRF.

    The collected flux is kappa <a^dag a> + qd_weight * gamma <s^dag s>.
    """
    if config.pulse is not None:
        raise ValueError("pl_decay_resonant takes no coherent drive")
    params = config.params
    t = config.time_grid.array()
    sol, params = escalate_truncation(
        lambda p: evolve_master(ket2dm(basis_state("e", 0, p.n_max)), t, p), config.params
    )
    cav, dot = emission_fluxes(params, sol)
    raw = cav + config.qd_weight * dot
    jittered = exponential_jitter(t, raw, config.jitter_tau)
    signal = convolve_irf(t, jittered, config.detector.irf_sigma)
    lifetime, amp, window = fit_exponential_tail(t, signal, config.fit_window)
    scalars = {
        "one_over_e_time": one_over_e_time(t, signal),
        "lifetime": lifetime,
        "fit_window": list(window),
        "n_max_used": params.n_max,
        "peak_time": float(t[np.argmax(signal)]),
        "emitted_via_cavity": float(np.trapezoid(cav, t)),
    }
    table = Table(
        [
            ("time", "ps", t),
            ("signal", "1/ps", signal),
            ("cavity_flux", "1/ps", cav),
            ("dot_flux", "1/ps", dot),
        ]
    )
    trace = TimeTrace(t, signal, "pl_decay", params, "1/ps")
    return ExperimentResult("pl_decay", config, {"trace": table}, scalars, {"trace": trace})


def detuned_resonant_drive(config, delta=None, gamma_d=None):
    """Cavity emission after a Gaussian pulse resonant with a detuned emitter.

    ``delta``/``gamma_d`` override the config values; the pulse carrier
    follows the emitter frequency (-delta/2 from the reference).
    """
    pulse = config.pulse
    _require(pulse, "gaussian", "dot", "detuned_resonant_drive")
    changes = {}
    if delta is not None:
        changes["delta"] = float(delta)
    if gamma_d is not None:
        changes["gamma_d"] = float(gamma_d)
    params = config.params.replace(**changes)
    if params.delta == 0:
        raise ValueError("detuned_resonant_drive needs a nonzero detuning")
    pulse = pulse.with_carrier(-0.5 * params.delta)
    t = config.time_grid.array()
    sol, params = escalate_truncation(
        lambda p: evolve_master(ket2dm(basis_state("g", 0, p.n_max)), t, p, pulse), params
    )
    cav, dot = emission_fluxes(params, sol)
    signal = convolve_irf(t, cav + config.qd_weight * dot, config.detector.irf_sigma)
    lifetime, amp, window = fit_exponential_tail(t, signal, config.fit_window)
    cav_yield = float(np.trapezoid(cav, t))
    dot_yield = float(np.trapezoid(dot, t))
    scalars = {
        "lifetime": lifetime,
        "fit_window": list(window),
        "n_max_used": params.n_max,
        "delta": params.delta,
        "delta_nm": detuning_to_nm(params.delta, config.wavelength_nm),
        "gamma_d": params.gamma_d,
        "cavity_yield": cav_yield,
        "dot_yield": dot_yield,
        "cavity_to_dot_ratio": cav_yield / dot_yield if dot_yield > 0 else math.inf,
    }
    table = Table(
        [
            ("time", "ps", t),
            ("signal", "1/ps", signal),
            ("cavity_flux", "1/ps", cav),
            ("dot_flux", "1/ps", dot),
        ]
    )
    trace = TimeTrace(t, signal, "detuned_drive", params, "1/ps")
    return ExperimentResult("detuned_drive", config, {"trace": table}, scalars, {"trace": trace})


def fit_dephasing(config, target_lifetime, bracket=None, xtol=None):
    """Pure-dephasing rate whose detuned-drive cavity lifetime equals ``target_lifetime``.

    ``bracket`` defaults to (0.02 g, 0.3 g). Raises FitError when the target
    lies outside the lifetimes spanned by the bracket.
    """
    g = config.params.g
    lo, hi = bracket if bracket is not None else (0.02 * g, 0.3 * g)

    def miss(gd):
        return detuned_resonant_drive(config, gamma_d=gd).scalars["lifetime"] - target_lifetime

    f_lo, f_hi = miss(lo), miss(hi)
    if f_lo * f_hi > 0:
        raise FitError(
            f"target lifetime {target_lifetime:.4g} ps outside the range "
            f"[{f_hi + target_lifetime:.4g}, {f_lo + target_lifetime:.4g}] ps spanned by the bracket"
        )
    return brentq(miss, lo, hi, xtol=xtol or 1e-5 * g)


def cross_feeding_scan(config, laser_detunings=None, threads=1):
    """Steady-state channel fluxes while a cw laser is tuned across both resonances."""
    pulse = config.pulse
    _require(pulse, "cw", None, "cross_feeding_scan")
    params = config.params
    w = config.scan.array() if laser_detunings is None else np.asarray(laser_detunings, dtype=float)
    a = build_annihilation(params.n_max)
    s = build_sigma(params.n_max)
    n_op, e_op = adjoint(a) @ a, adjoint(s) @ s

    def point(c):
        rho = steady_state(params, pulse.with_carrier(c))
        n = np.trace(n_op @ rho).real
        coh = abs(np.trace(a @ rho)) ** 2
        return n, coh, np.trace(e_op @ rho).real

    n, coh, pe = np.array(_map(point, list(w), threads)).T
    cav = params.kappa * n
    cav_inc = params.kappa * (n - coh)
    dot = params.gamma * pe
    dot_res = -0.5 * params.delta
    cav_res = 0.5 * params.delta
    scalars = {
        "dot_absorption_fwhm": peak_fwhm(w, cav_inc, dot_res),
        "cavity_flux_at_dot": float(np.interp(dot_res, w, cav)),
        "cavity_flux_at_cavity": float(np.interp(cav_res, w, cav)),
        "dot_flux_at_cavity": float(np.interp(cav_res, w, dot)),
        "dot_flux_at_dot": float(np.interp(dot_res, w, dot)),
        "argmax_cavity_flux": float(w[np.argmax(cav)]),
    }
    table = Table(
        [
            ("laser_detuning", "rad/ps", w),
            ("cavity_flux", "1/ps", cav),
            ("cavity_flux_incoherent", "1/ps", cav_inc),
            ("dot_flux", "1/ps", dot),
        ]
    )
    return ExperimentResult("cross_feeding", config, {"fluxes": table}, scalars)


def temperature_series(config, temperatures=None, threads=1):
    """Cavity flux under resonant cw emitter driving as temperature tunes delta and gamma_d.

    gamma_d(T) = gamma0 + alpha0 * T; delta(T) comes from the detuning model.
    """
    pulse = config.pulse
    _require(pulse, "cw", "dot", "temperature_series")
    temps = np.asarray(config.temperatures if temperatures is None else temperatures, dtype=float)
    if temps.size == 0 or np.any(temps <= 0):
        raise ValueError("temperatures must be a nonempty list of positive values")
    deltas = np.asarray(config.detuning_model(temps), dtype=float)
    gds = config.gamma0 + config.alpha0 * temps

    def point(i):
        p = config.params.replace(delta=float(deltas[i]), gamma_d=float(gds[i]))
        rho = steady_state(p, pulse.with_carrier(-0.5 * p.delta))
        return p.kappa * _cavity_signal(p, rho, "photon_number")

    flux = np.array(_map(point, list(range(len(temps))), threads))
    scalars = {
        "argmax_temperature": float(temps[np.argmax(flux)]),
        "delta_at_max": float(deltas[np.argmax(flux)]),
        "min_abs_delta_temperature": float(temps[np.argmin(np.abs(deltas))]),
    }
    table = Table(
        [
            ("temperature", "K", temps),
            ("delta", "rad/ps", deltas),
            ("delta_nm", "nm", detuning_to_nm(deltas, config.wavelength_nm)),
            ("gamma_d", "rad/ps", gds),
            ("cavity_flux", "1/ps", flux),
        ]
    )
    return ExperimentResult("temperature_series", config, {"series": table}, scalars)


def g2_cw_experiment(config):
    """Steady-state g2(tau) of the cavity output.

    A Gaussian pulse in the config is replaced by a cw drive with the same
    target and carrier and amplitude ``config.g2.cw_amplitude``.
    """
    pulse = config.pulse
    if pulse is None:
        raise ValueError("g2_cw needs a drive")
    if not pulse.is_cw:
        pulse = PulseShape("cw", config.g2.cw_amplitude, carrier=pulse.carrier, target=pulse.target)
    tau = config.time_grid.array()
    res = g2_cw(config.params, pulse, tau)
    scalars = {"g2_0": float(res.values[0]), "g2_end": float(res.values[-1])}
    table = Table([("tau", "ps", tau), ("g2", "1", res.values)])
    return ExperimentResult("g2_cw", config, {"g2": table}, scalars, {"correlator": res})


def g2_pulsed_experiment(config, threads=1):
    pulse = config.pulse
    _require(pulse, "gaussian", None, "g2_pulsed")
    s = config.g2
    hist = pulsed_g2_histogram(
        config.params,
        pulse,
        rep_period=s.rep_period,
        n_pulses=s.n_pulses,
        detector_irf_sigma=s.detector_sigma,
        master_seed=config.seed,
        window=s.window,
        n_side=s.n_side,
        threads=threads,
    )
    scalars = {
        "center_to_side": hist.ratio,
        "center_to_side_stderr": hist.ratio_stderr,
        "mean_photons_per_pulse": hist.mean_photons_per_pulse,
        "photon_number_g2": photon_number_g2(hist.photons_per_pulse),
        "n_pulses": hist.n_pulses,
    }
    tables = {
        "histogram": Table([("delay", "ps", hist.delays), ("counts", "1", hist.counts)]),
        "windows": Table(
            [("window_center", "ps", hist.window_centers), ("counts", "1", hist.window_counts)]
        ),
    }
    return ExperimentResult("g2_pulsed", config, tables, scalars, {"histogram": hist})


def spectra_compare(config, omega=None):
    """Analytic linear-model spectra next to quantum-regression spectra."""
    w = config.scan.array() if omega is None else np.asarray(omega, dtype=float)
    an = spectra.analytic_spectrum(config.params, config.pump_target, w)
    nu = spectra.numerical_spectrum(config.params, config.pump_target, w)
    scalars = {
        "relative_l2_cavity": spectra.relative_l2(nu.s_cav, an.s_cav, w),
        "relative_l2_dot": spectra.relative_l2(nu.s_qd, an.s_qd, w),
        "pole_positions": [float(x) for x in an.metadata["pole_positions"]],
        "pole_widths": [float(x) for x in an.metadata["pole_widths"]],
    }
    table = Table(
        [
            ("omega", "rad/ps", w),
            ("analytic_cavity", "1/(rad/ps)", an.s_cav),
            ("analytic_dot", "1/(rad/ps)", an.s_qd),
            ("numerical_cavity", "1/(rad/ps)", nu.s_cav),
            ("numerical_dot", "1/(rad/ps)", nu.s_qd),
        ]
    )
    return ExperimentResult(
        "spectra_compare", config, {"spectra": table}, scalars, {"analytic": an, "numerical": nu}
    )


@dataclass(frozen=True)
class DynamicsScenario:
    """A time-dependent run used to cross-check the master equation and trajectories."""

    psi0: np.ndarray
    t_grid: np.ndarray
    params: SystemParams
    drive: PulseShape | None


def preset_dynamics(config, t_stop=None, step=None):
    """Representative evolution for a config.

    No drive: decay from |e, 0>. Gaussian drive: the pulse acting on |g, 0>
    (a dot-targeted pulse is made resonant with the emitter). cw drive:
    switch-on transient from |g, 0>.
    """
    params = config.params
    pulse = config.pulse
    tg = config.time_grid
    stop = min(tg.stop, t_stop) if t_stop else tg.stop
    t = TimeGrid(stop, step or max(tg.step, stop / 400.0), tg.start).array()
    if pulse is None:
        return DynamicsScenario(basis_state("e", 0, params.n_max), t, params, None)
    if pulse.target == "dot" and not pulse.is_cw and params.delta != 0:
        pulse = pulse.with_carrier(-0.5 * params.delta)
    return DynamicsScenario(basis_state("g", 0, params.n_max), t, params, pulse)


EXPERIMENTS = {
    "reflectivity_scan": reflectivity_scan,
    "pulsed_reflectivity": pulsed_reflectivity_series,
    "pl_decay": pl_decay_resonant,
    "detuned_drive": detuned_resonant_drive,
    "cross_feeding": cross_feeding_scan,
    "temperature_series": temperature_series,
    "g2_cw": g2_cw_experiment,
    "g2_pulsed": g2_pulsed_experiment,
    "spectra_compare": spectra_compare,
}
