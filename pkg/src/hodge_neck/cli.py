"""hodge-neck <experiment> --config <path> [--out <dir>] [--seed <u64>]

Configuration files are flat ``key = value`` text with ``[section]``
headers.  Every key must be known to the experiment; omitted keys take
their documented defaults.  Reports are written only after the whole
experiment succeeded, each carrying the config hash and mesh checksums.

Exit codes: 0 all assertions pass, 1 an assertion failed, 2 usage or
configuration error, 3 solver error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .experiments import EXPERIMENTS, render

EXIT_OK, EXIT_ASSERT, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3
VERSION = "0.1.0"


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


# ------------------------------------------------------------------ schema

def _int(lo=None, hi=None):
    return ("int", lo, hi)


def _float(lo=None, hi=None):
    return ("float", lo, hi)


def _ints(lo=None, hi=None, length=None):
    return ("ints", lo, hi, length)


def _floats(lo=None, hi=None, length=None):
    return ("floats", lo, hi, length)


TORUS = {
    "n": (_int(4, 9), 5),
    "background_inner": (_int(3, 16), 5),
    "background_amplitude": (_float(0.0, 0.5), 0.2),
}
CALIBRATION = {
    "inner": (_int(3, 16), 3),
    "outer": (_int(3, 16), 4),
    "amplitude": (_float(1e-6, 0.5), 0.3),
    "tol": (_float(1e-15, 1e-3), 1e-12),
    "max_steps": (_int(1, 200), 30),
}

SCHEMA = {
    "spectrum": {
        "spectrum": {
            "level": (_int(0, 4), 3),
            "count": (_int(20, 200), 20),
            "closed_count": (_int(10, 200), 30),
        },
    },
    "neck-decay": {
        "neck": {
            "levels": (_ints(0, 4), [1, 2, 3]),
            "layers": (_int(2, 400), 20),
            "layer_length": (_float(1e-3, 10.0), 0.25),
            "s_values": (_floats(0.0, 100.0), [0.0, 1.0, 2.0, 3.0]),
            "mixed_weight": (_float(1e-6, 1e3), 0.5),
        },
    },
    "glue": {
        "glue": {
            "level": (_int(0, 4), 3),
            "tail_levels": (_ints(0, 4), [1, 2, 3]),
            "T_values": (_floats(0.5, 50.0), [3.0, 4.0, 5.0, 6.0]),
            "layers_per_unit": (_int(2, 64), 8),
            "coefficients": (_floats(-1e6, 1e6, 3), [1.0, 0.5, -0.3]),
            "bulk_gram": (_float(0.0, 1e9), 1250.0),
            "higher": (_float(0.0, 1e3), 1.0),
            "min_steps": (_int(1, 50), 8),
        },
    },
    "blowup-scaling": {
        "blowup": {
            "level": (_int(0, 4), 2),
            "T_values": (_floats(0.5, 50.0), [3.0, 4.0, 5.0, 6.0]),
            "subleading_T": (_floats(0.5, 50.0), [1.5, 2.0, 2.5, 3.0]),
            "a1_values": (_floats(1e-6, 1e6), [0.5, 1.0, 2.0]),
            "a2": (_float(-1e6, 1e6), 0.3),
            "a3": (_float(-1e6, 1e6), -0.2),
            "epsilon": (_float(1e-3, 0.5), 0.3),
            "cap_resolution": (_ints(1, 16, 3), [2, 4, 4]),
            "layers_per_unit": (_int(2, 64), 8),
            "bulk_gram": (_float(0.0, 1e9), 1250.0),
            "higher": (_float(0.0, 1e3), 1.0),
            "min_steps": (_int(1, 50), 4),
            "sample_points": (_int(1, 1000), 20),
        },
    },
    "period-jacobian": {
        "torus": TORUS,
        "calibration": CALIBRATION,
        "jacobian": {
            "near": (_int(3, 16), 3),
            "far": (_int(3, 16), 4),
            "amplitude": (_float(1e-6, 0.5), 0.3),
            "fd_steps": (_floats(1e-6, 0.1), [1e-2, 5e-3, 2.5e-3, 1.25e-3]),
        },
        "structure": {
            "torus_n": (_int(3, 4), 3),
            "sphere_level": (_int(0, 2), 1),
            "seed": (_int(0, 2 ** 32), 11),
        },
    },
    "theorem-demo": {
        "torus": TORUS,
        "calibration": CALIBRATION,
        "demo": {
            "level": (_int(0, 4), 2),
            "T": (_float(0.5, 50.0), 5.0),
            "decay_T": (_floats(0.5, 50.0), [1.0, 2.0, 3.0]),
            "window": (_int(3, 16), 3),
            "amplitude": (_float(1e-6, 0.5), 0.3),
            "epsilon": (_float(1e-3, 0.5), 0.3),
            "cap_resolution": (_ints(1, 16, 3), [2, 4, 4]),
            "layers_per_unit": (_int(2, 64), 8),
            "higher": (_float(0.0, 1e3), 1.0),
            "tol": (_float(1e-16, 1e-2), 1e-14),
            "grid_points": (_int(2, 21), 3),
            "grid_radius": (_float(0.0, 1.0), 0.05),
        },
    },
}
RUN_SECTION = {"seed": (_int(0, 2 ** 64 - 1), 1)}


def _parse_value(path: str, spec, raw: str):
    kind = spec[0]
    try:
        if kind in ("int", "float"):
            val = int(raw) if kind == "int" else float(raw)
            items = [val]
        else:
            conv = int if kind == "ints" else float
            items = [conv(x) for x in raw.replace(",", " ").split()]
            if not items:
                raise ValueError("empty list")
            val = items
    except ValueError as exc:
        raise ConfigError(f"{path}: cannot parse {raw!r} as {kind} ({exc})") from None
    lo, hi = spec[1], spec[2]
    for x in items:
        if not np.isfinite(x) or (lo is not None and x < lo) or (hi is not None and x > hi):
            raise ConfigError(f"{path}: value {x} outside [{lo}, {hi}]")
    if kind in ("ints", "floats") and spec[3] is not None and len(items) != spec[3]:
        raise ConfigError(f"{path}: expected {spec[3]} values, got {len(items)}")
    return val


def parse_config(text: str, experiment: str) -> dict:
    """Parse and validate; returns {section: {key: value}} including defaults and a [run] section."""
    if experiment not in SCHEMA:
        raise ConfigError(f"unknown experiment {experiment!r}")
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__", strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}".splitlines()[0]) from None
    schema = dict(SCHEMA[experiment])
    schema["run"] = RUN_SECTION
    cfg = {}
    for section in parser.sections():
        if section not in schema:
            raise ConfigError(f"{section}: unknown section for experiment {experiment!r}")
        for key in parser[section]:
            if key not in schema[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
    for section, keys in schema.items():
        cfg[section] = {}
        for key, (spec, default) in keys.items():
            if parser.has_option(section, key):
                cfg[section][key] = _parse_value(f"{section}.{key}", spec, parser.get(section, key))
            else:
                cfg[section][key] = default
    if "calibration" in cfg and cfg["calibration"]["inner"] > cfg["calibration"]["outer"]:
        raise ConfigError("calibration.inner: must not exceed calibration.outer")
    if "neck" in cfg:
        n = cfg["neck"]
        if max(n["s_values"]) + 1 > n["layers"] * n["layer_length"] + 1e-12:
            raise ConfigError("neck.s_values: slab [s, s+1] leaves the neck")
    return cfg


def canonical(cfg: dict) -> str:
    lines = []
    for section in sorted(cfg):
        lines.append(f"[{section}]")
        for key in sorted(cfg[section]):
            v = cfg[section][key]
            lines.append(f"{key} = {' '.join(repr(x) for x in v) if isinstance(v, list) else repr(v)}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ running

def run(experiment: str, cfg: dict, out_dir: Path, stream=None) -> int:
    from .blowup import GeometryError, NumericalDifferentiationError
    from .complex import ResourceError, StructuralError
    from .gluing import ConvergenceError
    from .harmonic import ConsistencyError, SolverError
    from .metric import DomainError, SingularMetricError
    from .neck import DecompositionError
    from .period import DegeneracyError

    seed = int(cfg["run"]["seed"])
    try:
        outcome = EXPERIMENTS[experiment](cfg, seed)
    except (SolverError, ConvergenceError, ConsistencyError, NumericalDifferentiationError, DecompositionError,
            DegeneracyError, SingularMetricError, DomainError, GeometryError, StructuralError, ResourceError,
            np.linalg.LinAlgError) as exc:
        print(f"solver error in {experiment}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    provenance = {
        "tool": f"hodge-neck {VERSION}",
        "experiment": experiment,
        "seed": str(seed),
        "config_sha256": hashlib.sha256(canonical(cfg).encode()).hexdigest(),
        "mesh_checksums": ",".join(f"{k}={v}" for k, v in sorted(outcome.meshes.items())),
    }
    blobs = {name: render(kind, payload, provenance) for name, (kind, payload) in outcome.files.items()}
    summary = "\n".join(c.line() for c in outcome.checks) + "\n"
    blobs["summary.txt"] = ("".join(f"# {k}: {provenance[k]}\n" for k in sorted(provenance)) + summary).encode()
    write_atomically(out_dir, blobs)
    (stream or sys.stdout).write(summary)
    return EXIT_OK if outcome.passed else EXIT_ASSERT


def write_atomically(out_dir: Path, blobs: dict) -> None:
    """Write every report to a temporary directory first, then move them in place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out_dir, prefix=".partial-") as tmp:
        for name, data in sorted(blobs.items()):
            (Path(tmp) / name).write_bytes(data)
        for name in sorted(blobs):
            os.replace(Path(tmp) / name, out_dir / name)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hodge-neck", description="Run one numerical experiment and write its reports.")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--config", required=True, type=Path, help="flat key = value file with [section] headers")
    p.add_argument("--out", type=Path, default=None, help="report directory (default ./reports/<experiment>)")
    p.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed, overrides [run] seed")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = parse_config(text, args.experiment)
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out if args.out is not None else Path("reports") / args.experiment
    return run(args.experiment, cfg, out)


if __name__ == "__main__":
    sys.exit(main())
