"""YAML experiment configs with explicit units, bundled presets and a canonical hash.

Every physical quantity is written as ``"<number> <unit>"``::

    params:
      g: 25 GHz          # g / 2pi
      kappa: 1e4 Q       # omega / Q at the reference wavelength
      gamma_d: 0.1 g     # multiples of g or kappa are allowed
      delta: -1.2 nm     # dot wavelength minus cavity wavelength

Parsing produces an :class:`~qdcavity.experiments.ExperimentConfig` in
canonical units (rad/ps, ps, K). Violations raise ConfigError naming the
dotted field path.
"""

from hashlib import sha256
from importlib import resources
import json
import math
import os
import re

import yaml

from .drive import PulseShape, pi_pulse_amplitude
from .errors import ConfigError, UnitError, UnsupportedFeatureError
from .experiments import (
    DetectorModel,
    DetuningModel,
    ExperimentConfig,
    G2Settings,
    ScanGrid,
    TimeGrid,
)
from .hilbert import SystemParams
from . import units

PRESETS = (
    "fig1f_reflectivity",
    "fig1g_pl",
    "fig2_rabi",
    "fig3_crossfeed",
    "fig3h_temperature",
    "fig4d_lifetime",
    "fig4_g2",
)

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUANTITY = re.compile(rf"^\s*({_NUMBER})\s*([^\s].*?)?\s*$")

_RATE_UNITS = {
    "rad/ps": 1.0,
    "1/ps": 1.0,
    "rad/ns": 1e-3,
    "1/ns": 1e-3,
}
_TIME_UNITS = {"fs": 1e-3, "ps": 1.0, "ns": 1e3, "us": 1e6}
_POWER_UNITS = {"pW": 1e-3, "nW": 1.0, "uW": 1e3, "mW": 1e6}


def _split(value, path):
    if isinstance(value, bool):
        raise ConfigError(path, "expected a quantity, got a boolean")
    if isinstance(value, (int, float)):
        return float(value), None
    if not isinstance(value, str):
        raise ConfigError(path, f"expected a quantity string like '25 GHz', got {value!r}")
    m = _QUANTITY.match(value)
    if not m:
        raise ConfigError(path, f"cannot parse quantity {value!r}")
    number = float(m.group(1))
    if not math.isfinite(number):
        raise ConfigError(path, "value must be finite")
    return number, m.group(2)


class _Context:
    """Values already parsed that later fields may refer to (g, kappa, wavelength)."""

    def __init__(self, wavelength_nm):
        self.wavelength_nm = wavelength_nm
        self.g = None
        self.kappa = None
        self.delta = None


def _rate(value, path, ctx, allow_nm=False, nm_meaning="detuning"):
    number, unit = _split(value, path)
    if unit is None:
        raise ConfigError(path, "missing unit (e.g. '25 GHz', '0.2 rad/ps', '1e4 Q')")
    key = unit.strip()
    low = key.lower()
    if low in _RATE_UNITS:
        return number * _RATE_UNITS[low]
    if low == "ghz":
        return units.ghz_to_rad_ps(number)
    if low == "mhz":
        return units.ghz_to_rad_ps(number * 1e-3)
    if low in ("uev", "µev", "μev"):
        return units.uev_to_rad_ps(number)
    if low == "mev":
        return units.uev_to_rad_ps(number * 1e3)
    if key == "Q":
        if number <= 0:
            raise ConfigError(path, "quality factor must be positive")
        return units.q_to_rad_ps(number, ctx.wavelength_nm)
    if low == "g":
        if ctx.g is None:
            raise ConfigError(path, "'g' multiple used before params.g is known")
        return number * ctx.g
    if low == "kappa":
        if ctx.kappa is None:
            raise ConfigError(path, "'kappa' multiple used before params.kappa is known")
        return number * ctx.kappa
    if low == "nm" and allow_nm:
        if nm_meaning == "detuning":
            return units.detuning_from_nm(number, ctx.wavelength_nm)
        return units.nm_to_rad_ps(number, ctx.wavelength_nm)
    raise ConfigError(path, f"unsupported unit {unit!r} for a rate")


def _time(value, path):
    number, unit = _split(value, path)
    if unit is None or unit.strip() not in _TIME_UNITS:
        raise ConfigError(path, f"expected a time with unit in {sorted(_TIME_UNITS)}")
    return number * _TIME_UNITS[unit.strip()]


def _temperature(value, path):
    number, unit = _split(value, path)
    if unit is None or unit.strip() != "K":
        raise ConfigError(path, "expected a temperature in K")
    if number <= 0:
        raise ConfigError(path, "temperature must be positive")
    return number


def _rate_per_kelvin(value, path, ctx):
    number, unit = _split(value, path)
    if unit is None or not unit.strip().endswith("/K"):
        raise ConfigError(path, "expected a rate per kelvin, e.g. '0.5 ueV/K'")
    return _rate(f"{number!r} {unit.strip()[:-2]}", path, ctx)


def _power(value, path):
    number, unit = _split(value, path)
    if unit is None or unit.strip() not in _POWER_UNITS:
        raise ConfigError(path, f"expected a power with unit in {sorted(_POWER_UNITS)}")
    if number <= 0:
        raise ConfigError(path, "power must be positive")
    return number * _POWER_UNITS[unit.strip()]


def _number(value, path, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or (lo is not None and value < lo) or (hi is not None and value > hi):
        raise ConfigError(path, f"value {value!r} outside [{lo}, {hi}]")
    return value


def _integer(value, path, lo=None):
    if isinstance(value, bool) or not isinstance(value, int) or (lo is not None and value < lo):
        raise ConfigError(path, f"expected an integer >= {lo}, got {value!r}")
    return value


def _mapping(value, path, allowed, required=()):
    if not isinstance(value, dict):
        raise ConfigError(path, "expected a mapping")
    for key in value:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown field")
    for key in required:
        if key not in value:
            raise ConfigError(f"{path}.{key}" if path else key, "required field missing")
    return value


def _params(raw, ctx):
    raw = _mapping(raw, "params", {"g", "kappa", "gamma", "gamma_d", "delta", "n_max"}, ("g", "kappa", "gamma"))
    ctx.g = _rate(raw["g"], "params.g", ctx)
    ctx.kappa = _rate(raw["kappa"], "params.kappa", ctx)
    gamma = _rate(raw["gamma"], "params.gamma", ctx)
    gamma_d = _rate(raw.get("gamma_d", "0 rad/ps"), "params.gamma_d", ctx)
    delta = _rate(raw.get("delta", "0 rad/ps"), "params.delta", ctx, allow_nm=True)
    ctx.delta = delta
    n_max = _integer(raw.get("n_max", 5), "params.n_max", lo=1)
    for name, v in (("g", ctx.g), ("kappa", ctx.kappa), ("gamma", gamma), ("gamma_d", gamma_d)):
        if v < 0:
            raise ConfigError(f"params.{name}", "rate must be >= 0")
    return SystemParams(g=ctx.g, kappa=ctx.kappa, gamma=gamma, gamma_d=gamma_d, delta=delta, n_max=n_max)


def _pulse(raw, ctx):
    if raw is None:
        return None
    raw = _mapping(raw, "pulse", {"kind", "amplitude", "center", "fwhm", "carrier", "target", "phase"}, ("kind",))
    kind = raw["kind"]
    if kind not in ("cw", "gaussian"):
        raise ConfigError("pulse.kind", "must be 'cw' or 'gaussian'")
    target = raw.get("target", "cavity")
    if target not in ("cavity", "dot", "both"):
        raise ConfigError("pulse.target", "must be 'cavity', 'dot' or 'both'")
    fwhm = _time(raw["fwhm"], "pulse.fwhm") if "fwhm" in raw else None
    if kind == "gaussian" and (fwhm is None or fwhm <= 0):
        raise ConfigError("pulse.fwhm", "gaussian pulse needs a positive fwhm")
    amp = raw.get("amplitude", "0 rad/ps")
    if amp == "pi":
        if kind != "gaussian" or target != "dot":
            raise ConfigError("pulse.amplitude", "'pi' is only defined for gaussian dot pulses")
        amplitude = pi_pulse_amplitude(fwhm)
    else:
        amplitude = _rate(amp, "pulse.amplitude", ctx)
    if amplitude < 0:
        raise ConfigError("pulse.amplitude", "amplitude must be >= 0")
    carrier = raw.get("carrier", "0 rad/ps")
    if carrier == "dot":
        carrier = -0.5 * ctx.delta
    elif carrier == "cavity":
        carrier = 0.5 * ctx.delta
    else:
        carrier = _rate(carrier, "pulse.carrier", ctx, allow_nm=True, nm_meaning="offset")
    center = _time(raw.get("center", "0 ps"), "pulse.center")
    phase = _number(raw.get("phase", 0.0), "pulse.phase")
    return PulseShape(kind, amplitude, center, fwhm, carrier, target, phase)


def _temperature_block(raw, ctx):
    raw = _mapping(raw, "temperature", {"values", "gamma0", "alpha0", "detuning"})
    vals = raw.get("values", [])
    if isinstance(vals, dict):
        _mapping(vals, "temperature.values", {"start", "stop", "step"}, ("start", "stop", "step"))
        start = _temperature(vals["start"], "temperature.values.start")
        stop = _temperature(vals["stop"], "temperature.values.stop")
        step = _temperature(vals["step"], "temperature.values.step")
        n = int(round((stop - start) / step))
        temps = tuple(float(start + step * i) for i in range(n + 1))
    else:
        if not isinstance(vals, list):
            raise ConfigError("temperature.values", "expected a list or a start/stop/step mapping")
        temps = tuple(_temperature(v, f"temperature.values[{i}]") for i, v in enumerate(vals))
    gamma0 = _rate(raw.get("gamma0", "0 rad/ps"), "temperature.gamma0", ctx)
    alpha0 = _rate_per_kelvin(raw.get("alpha0", "0 rad/ps/K"), "temperature.alpha0", ctx)
    model = DetuningModel()
    if "detuning" in raw:
        det = _mapping(raw["detuning"], "temperature.detuning", {"kind", "points"}, ("points",))
        kind = det.get("kind", "linear")
        if kind not in ("linear", "table"):
            raise ConfigError("temperature.detuning.kind", "must be 'linear' or 'table'")
        pts = det["points"]
        if not isinstance(pts, list) or len(pts) < 2:
            raise ConfigError("temperature.detuning.points", "need at least two [T, delta] pairs")
        ts, ds = [], []
        for i, pair in enumerate(pts):
            p = f"temperature.detuning.points[{i}]"
            if not isinstance(pair, list) or len(pair) != 2:
                raise ConfigError(p, "expected a [temperature, detuning] pair")
            ts.append(_temperature(pair[0], p))
            ds.append(_rate(pair[1], p, ctx, allow_nm=True))
        model = DetuningModel(kind, tuple(ts), tuple(ds))
    return temps, gamma0, alpha0, model


_TOP = {
    "name",
    "description",
    "wavelength",
    "params",
    "pulse",
    "detector",
    "p_dark",
    "jitter_tau",
    "qd_weight",
    "signal",
    "pump_target",
    "time",
    "scan",
    "powers",
    "fit_window",
    "temperature",
    "g2",
    "mcwf",
    "seed",
    "xx_driving",
}


def config_from_mapping(raw):
    """Validate a parsed YAML mapping and build an ExperimentConfig."""
    raw = _mapping(raw, "", _TOP, ("params",))
    wl = units.DEFAULT_WAVELENGTH_NM
    if "wavelength" in raw:
        number, unit = _split(raw["wavelength"], "wavelength")
        if unit != "nm" or number <= 0:
            raise ConfigError("wavelength", "expected a positive wavelength in nm")
        wl = number
    ctx = _Context(wl)
    if raw.get("xx_driving", False) is not False:
        raise UnsupportedFeatureError("xx_driving: two-photon biexciton driving is not supported")
    params = _params(raw["params"], ctx)
    kw = {"params": params, "wavelength_nm": wl, "pulse": _pulse(raw.get("pulse"), ctx)}
    if "name" in raw:
        kw["name"] = str(raw["name"])
    if "detector" in raw:
        det = _mapping(raw["detector"], "detector", {"irf_fwhm", "time_resolution"})
        kw["detector"] = DetectorModel(
            irf_fwhm=_time(det.get("irf_fwhm", "0 ps"), "detector.irf_fwhm"),
            time_resolution=_time(det["time_resolution"], "detector.time_resolution")
            if "time_resolution" in det
            else None,
        )
        if kw["detector"].irf_fwhm < 0:
            raise ConfigError("detector.irf_fwhm", "must be >= 0")
    if "p_dark" in raw:
        kw["p_dark"] = _number(raw["p_dark"], "p_dark", 0.0, 1.0)
    if "jitter_tau" in raw:
        kw["jitter_tau"] = _time(raw["jitter_tau"], "jitter_tau")
        if kw["jitter_tau"] < 0:
            raise ConfigError("jitter_tau", "must be >= 0")
    if "qd_weight" in raw:
        kw["qd_weight"] = _number(raw["qd_weight"], "qd_weight", 0.0)
    for key, allowed in (("signal", ("photon_number", "coherent")), ("pump_target", ("dot", "cavity"))):
        if key in raw:
            if raw[key] not in allowed:
                raise ConfigError(key, f"must be one of {allowed}")
            kw[key] = raw[key]
    if "time" in raw:
        tm = _mapping(raw["time"], "time", {"start", "stop", "step"}, ("stop", "step"))
        start = _time(tm.get("start", "0 ps"), "time.start")
        stop = _time(tm["stop"], "time.stop")
        step = _time(tm["step"], "time.step")
        if not step > 0 or not stop > start:
            raise ConfigError("time", "need step > 0 and stop > start")
        kw["time_grid"] = TimeGrid(stop, step, start)
    if "scan" in raw:
        sc = _mapping(raw["scan"], "scan", {"start", "stop", "points"}, ("start", "stop", "points"))
        start = _rate(sc["start"], "scan.start", ctx, allow_nm=True, nm_meaning="offset")
        stop = _rate(sc["stop"], "scan.stop", ctx, allow_nm=True, nm_meaning="offset")
        if stop < start:
            start, stop = stop, start
        pts = _integer(sc["points"], "scan.points", lo=2)
        if not stop > start:
            raise ConfigError("scan", "scan range is empty")
        kw["scan"] = ScanGrid(start, stop, pts)
    if "powers" in raw:
        if not isinstance(raw["powers"], list) or not raw["powers"]:
            raise ConfigError("powers", "expected a nonempty list of powers")
        kw["powers"] = tuple(_power(v, f"powers[{i}]") for i, v in enumerate(raw["powers"]))
    if "fit_window" in raw:
        fw = raw["fit_window"]
        if not isinstance(fw, list) or len(fw) != 2:
            raise ConfigError("fit_window", "expected [start_fraction, stop_fraction]")
        lo = _number(fw[0], "fit_window[0]", 0.0, 1.0)
        hi = _number(fw[1], "fit_window[1]", 0.0, 1.0)
        if not 0 < hi < lo:
            raise ConfigError("fit_window", "need 1 >= start > stop > 0")
        kw["fit_window"] = (lo, hi)
    if "temperature" in raw:
        temps, g0, a0, model = _temperature_block(raw["temperature"], ctx)
        kw.update(temperatures=temps, gamma0=g0, alpha0=a0, detuning_model=model)
    if "g2" in raw:
        g2 = _mapping(raw["g2"], "g2", {"rep_period", "n_pulses", "detector_fwhm", "n_side", "window", "cw_amplitude"})
        s = {}
        if "rep_period" in g2:
            s["rep_period"] = _time(g2["rep_period"], "g2.rep_period")
        if "n_pulses" in g2:
            s["n_pulses"] = _integer(g2["n_pulses"], "g2.n_pulses", lo=1)
        if "detector_fwhm" in g2:
            s["detector_sigma"] = _time(g2["detector_fwhm"], "g2.detector_fwhm") / (
                2.0 * math.sqrt(2.0 * math.log(2.0))
            )
        if "n_side" in g2:
            s["n_side"] = _integer(g2["n_side"], "g2.n_side", lo=1)
        if "window" in g2:
            s["window"] = _time(g2["window"], "g2.window")
        if "cw_amplitude" in g2:
            s["cw_amplitude"] = _rate(g2["cw_amplitude"], "g2.cw_amplitude", ctx)
        kw["g2"] = G2Settings(**s)
    if "mcwf" in raw:
        mc = _mapping(raw["mcwf"], "mcwf", {"n_traj"})
        if "n_traj" in mc:
            kw["n_traj"] = _integer(mc["n_traj"], "mcwf.n_traj", lo=1)
    if "seed" in raw:
        kw["seed"] = _integer(raw["seed"], "seed", lo=0)
    try:
        return ExperimentConfig(**kw)
    except ConfigError:
        raise
    except (ValueError, UnitError) as exc:
        raise ConfigError("", str(exc)) from exc


def preset_path(name):
    if name not in PRESETS:
        raise ConfigError("config", f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return resources.files("qdcavity").joinpath("presets").joinpath(f"{name}.yaml")


def load_text(source):
    """YAML text for a file path or a preset name."""
    if os.path.exists(str(source)):
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    return preset_path(str(source)).read_text(encoding="utf-8")


def parse_config(text):
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"invalid YAML: {exc}") from exc
    if raw is None:
        raise ConfigError("", "empty config")
    return config_from_mapping(raw)


def load_config(source):
    """ExperimentConfig from a YAML file path or a bundled preset name."""
    return parse_config(load_text(source))


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def config_hash(config):
    """sha256 over the canonical JSON of the resolved config."""
    return sha256(canonical_json(config.to_dict()).encode("utf-8")).hexdigest()
