"""Command-line front end.

    qdcavity run --config fig4d_lifetime --experiment detuned_drive --out runs/fig4d
    qdcavity convert --value 25 --from GHz --to rad/ps

``run`` writes one CSV per result table plus ``<experiment>.json`` holding
the resolved config, scalar results and a run manifest. Failures print a
JSON error object (also written to ``<out>/error.json``) and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
from dataclasses import asdict, dataclass, field
import inspect
import json
import math
import os
from pathlib import Path
import sys
import time

import numpy as np

from . import __version__
from .config import PRESETS, canonical_json, config_hash, load_config
from .errors import ConfigError, QDCavityError, UnitError, UnsupportedFeatureError
from .experiments import EXPERIMENTS
from .units import DEFAULT_WAVELENGTH_NM, convert_units

THREADS_ENV = "QDCAVITY_THREADS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INTERNAL = 4


class OutputError(QDCavityError):
    """A result could not be serialised (non-finite value, ragged table)."""

    code = "invalid_output"


@dataclass
class RunManifest:
    experiment: str
    config_hash: str
    version: str
    duration_s: float
    seed: int
    threads: int
    outputs: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)


def _jsonable(obj, path="result"):
    """Plain JSON types; refuses NaN/Inf."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v, f"{path}.{k}") for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v, f"{path}[{i}]") for i, v in enumerate(list(obj))]
    if obj is None or isinstance(obj, (bool, np.bool_, str)):
        return bool(obj) if isinstance(obj, np.bool_) else obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise OutputError(f"non-finite value at {path}")
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        raise OutputError(f"complex value at {path}")
    raise OutputError(f"cannot serialise {type(obj).__name__} at {path}")


def _format(v, where):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        raise OutputError(f"non-finite value in {where}")
    return repr(v)


def write_table(path, table):
    """RFC-4180 CSV with a ``name [unit]`` header; floats use repr (locale-free, round-trip exact)."""
    cols = [(name, unit, np.asarray(values)) for name, unit, values in table.columns]
    for name, _, values in cols:
        if np.iscomplexobj(values):
            raise OutputError(f"complex column {name!r} in {path.name}")
    header = [f"{name} [{unit}]" for name, unit, _ in cols]
    n = len(cols[0][2]) if cols else 0
    rows = [
        [_format(values[i], f"{path.name}:{name}") for name, _, values in cols] for i in range(n)
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        w.writerows(rows)


def read_table(path):
    """Inverse of :func:`write_table`: {name: (unit, float array)}."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    out = {}
    for j, head in enumerate(rows[0]):
        name, unit = head.rsplit(" [", 1)
        out[name] = (unit[:-1], np.array([float(r[j]) for r in rows[1:]]))
    return out


def resolve_threads(requested=None):
    if requested is not None:
        threads = requested
    else:
        env = os.environ.get(THREADS_ENV)
        try:
            threads = int(env) if env else 1
        except ValueError:
            raise ConfigError(THREADS_ENV, f"expected an integer, got {env!r}") from None
    if threads < 1:
        raise ConfigError("threads", "must be >= 1")
    return threads


def _manifest_metrics(experiment, scalars):
    if experiment == "spectra_compare":
        return {k: scalars[k] for k in ("relative_l2_cavity", "relative_l2_dot")}
    return {}


def run(config_path, experiment, out_dir, seed=None, threads=None):
    """Run one experiment and write its outputs; returns the RunManifest."""
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}; choose from {sorted(EXPERIMENTS)}")
    threads = resolve_threads(threads)
    config = load_config(config_path)
    if seed is not None:
        if seed < 0:
            raise ConfigError("seed", "must be >= 0")
        config = config.replace(seed=int(seed))

    fn = EXPERIMENTS[experiment]
    kwargs = {"threads": threads} if "threads" in inspect.signature(fn).parameters else {}
    t0 = time.perf_counter()
    result = fn(config, **kwargs)
    duration = time.perf_counter() - t0

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scalars = _jsonable(result.scalars, "scalars")
    outputs = []
    for name, table in result.tables.items():
        path = out / f"{experiment}_{name}.csv"
        write_table(path, table)
        outputs.append(path.name)
    manifest = RunManifest(
        experiment=experiment,
        config_hash=config_hash(config),
        version=__version__,
        duration_s=duration,
        seed=config.seed,
        threads=threads,
        outputs=outputs + [f"{experiment}.json"],
        metrics=_manifest_metrics(experiment, scalars),
    )
    sidecar = {
        "config": _jsonable(config.to_dict(), "config"),
        "source": str(config_path),
        "scalars": scalars,
        "manifest": _jsonable(asdict(manifest), "manifest"),
    }
    with open(out / f"{experiment}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
        fh.write("\n")
    return manifest


def _error_payload(exc):
    code = getattr(exc, "code", "error")
    payload = {"error": code, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        payload["field"] = exc.path
    return payload


def _exit_code(exc):
    if isinstance(exc, (ConfigError, UnitError, UnsupportedFeatureError)):
        return EXIT_CONFIG
    if isinstance(exc, QDCavityError):
        return EXIT_SOLVER
    return EXIT_INTERNAL


def build_parser():
    parser = argparse.ArgumentParser(prog="qdcavity", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a named experiment")
    p_run.add_argument("--config", required=True, help=f"YAML path or preset ({', '.join(PRESETS)})")
    p_run.add_argument("--experiment", required=True, choices=sorted(EXPERIMENTS))
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")

    p_conv = sub.add_parser("convert", help="convert between GHz, ueV, nm, Q and rad/ps")
    p_conv.add_argument("--value", type=float, required=True)
    p_conv.add_argument("--from", dest="from_unit", required=True)
    p_conv.add_argument("--to", dest="to_unit", required=True)
    p_conv.add_argument("--wavelength", type=float, default=DEFAULT_WAVELENGTH_NM, help="reference wavelength in nm")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    out_dir = getattr(args, "out", None)
    try:
        if args.command == "convert":
            value = convert_units(args.value, args.from_unit, args.to_unit, args.wavelength)
            print(repr(value))
            return EXIT_OK
        manifest = run(args.config, args.experiment, args.out, args.seed, args.threads)
        print(canonical_json(_jsonable(asdict(manifest))))
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        payload = _error_payload(exc)
        text = json.dumps(payload, sort_keys=True)
        if out_dir is not None:
            try:
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                (Path(out_dir) / "error.json").write_text(text + "\n", encoding="utf-8")
            except OSError:
                pass
        print(text, file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
