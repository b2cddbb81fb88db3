"""Command-line driver: ``tedvp run <config>`` and ``tedvp selfcheck``.

Config files are INI style::

    [experiment]
    id = h2-pint

    [params]
    t_values = 8, 16, 32
    blocks = 4

Exit status: 0 when the run finished and every self-check passed, 1 when a
self-check failed, 2 for an invalid config, 3 for a numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clock import DegenerateGroundStateError
from .experiments import EXPERIMENTS, RunOutput
from .linalg import EigensolveError
from .pint import ConvergenceError

log = logging.getLogger("tedvp")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_SPIN = dict(g=float, J_a=float, J_c=float, B0=float, B1_amp=float, m_pulse=float, mu_b_over_kB=float)
_MORSE = dict(mass=float, beta=float, depth=float, n_grid=int, x_min=float, x_max=float)

SCHEMAS = {
    "spin-ci": dict(_SPIN, dt=float, n_times=int, t0=float, seed=int, n_seeds=int, levels=[str], site=int),
    "h2-pint": dict(_MORSE, dt=float, t_values=[int], blocks=int, displacement_angstrom=float, workers=int, cg_cap_factor=int),
    "norm-metrics": dict(_SPIN, levels=[int], n_times=int, dt=float, dt_sweep=[float], dt_large=float, t_hamiltonian=float, site=int),
    "clock-demo": dict(_SPIN, propagator=str, dt=float, n_times=int, t0=float, seed=int, dim=int),
    "floquet-demo": dict(period=float, n_fourier=int, delta=float, drive=float),
}

# keys that must be strictly positive when given
POSITIVE = {
    "g", "B0", "mass", "beta", "depth", "n_grid", "dt", "n_times", "n_seeds", "blocks", "workers",
    "cg_cap_factor", "dt_large", "period", "n_fourier", "dim",
}


class ConfigError(ValueError):
    pass


def _line_of(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), 1):
        if line.split("=", 1)[0].strip() == key:
            return i
    return 0


def _convert(kind, raw: str):
    if isinstance(kind, list):
        return [_convert(kind[0], item.strip()) for item in raw.split(",") if item.strip()]
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw.strip()


def load_config(path: str | Path) -> tuple[str, dict]:
    """Parse a config file into ``(experiment id, typed params)``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not parser.has_option("experiment", "id"):
        raise ConfigError(f"{path}: missing [experiment] id")
    exp = parser.get("experiment", "id").strip()
    if exp not in SCHEMAS:
        raise ConfigError(f"{path}:{_line_of(text, 'id')}: unknown experiment id {exp!r}")
    schema = SCHEMAS[exp]
    params: dict = {}
    if parser.has_section("params"):
        for key, raw in parser.items("params"):
            where = f"{path}:{_line_of(text, key)}"
            if key not in schema:
                raise ConfigError(f"{where}: unknown field {key!r} for {exp}")
            try:
                value = _convert(schema[key], raw)
            except ValueError:
                raise ConfigError(f"{where}: field {key!r} has invalid value {raw!r}") from None
            if key in POSITIVE and not value > 0:
                raise ConfigError(f"{where}: field {key!r} must be positive")
            if isinstance(value, list) and not value:
                raise ConfigError(f"{where}: field {key!r} is empty")
            params[key] = value
    return exp, params


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _versions() -> dict:
    return {"tedvp": __version__, "numpy": np.__version__, "python": platform.python_version()}


def write_outputs(out_dir: Path, exp: str, params: dict, seed: int, workers: int, result: RunOutput) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in result.tables.items():
        write_csv(out_dir / name, header, rows)
    manifest = {
        "experiment": exp,
        "params": params,
        "seed": seed,
        "workers": workers,
        "versions": _versions(),
        "results": result.manifest,
        "selfcheck": {
            "status": "PASS" if result.passed else "FAIL",
            "checks": [{"name": c.name, "status": "PASS" if c.passed else "FAIL", "detail": c.detail} for c in result.checks],
        },
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def execute(exp: str, params: dict, out_dir: Path, seed: int | None, workers: int | None) -> RunOutput:
    params = dict(params)
    if seed is not None and "seed" in SCHEMAS[exp]:
        params["seed"] = seed
    if workers is not None and "workers" in SCHEMAS[exp]:
        params["workers"] = workers
    used_seed = params.get("seed", 0 if seed is None else seed)
    result = EXPERIMENTS[exp](params)
    write_outputs(out_dir, exp, params, used_seed, params.get("workers", workers or 1), result)
    return result


def _report(exp: str, result: RunOutput) -> None:
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {exp}:{c.name}  {c.detail}")


def _numeric_failure(exc: Exception) -> int:
    print(f"numerical failure: {exc}", file=sys.stderr)
    residuals = getattr(exc, "residuals", None)
    if residuals is not None:
        print("residual history: " + " ".join("%.3e" % r for r in residuals), file=sys.stderr)
    residual = getattr(exc, "residual", None)
    if residual is not None:
        print(f"eigen residual: {residual:.3e}", file=sys.stderr)
    return EXIT_NUMERIC


def cmd_run(args) -> int:
    try:
        exp, params = load_config(args.config)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out or f"out-{exp}")
    try:
        result = execute(exp, params, out_dir, args.seed, args.workers)
    except (ConvergenceError, EigensolveError, DegenerateGroundStateError) as exc:
        return _numeric_failure(exc)
    except ValueError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _report(exp, result)
    return EXIT_OK if result.passed else EXIT_CHECK


def cmd_selfcheck(args) -> int:
    out_root = Path(args.out or "selfcheck-out")
    ok = True
    for exp in EXPERIMENTS:
        log.info("running %s", exp)
        try:
            result = execute(exp, {}, out_root / exp, args.seed, args.workers)
        except (ConvergenceError, EigensolveError, DegenerateGroundStateError) as exc:
            _numeric_failure(exc)
            return EXIT_NUMERIC
        _report(exp, result)
        ok = ok and result.passed
    print("selfcheck: " + ("PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tedvp", description=__doc__.splitlines()[0])
    ap.add_argument("--workers", type=int, default=None, help="worker threads for slice sweeps")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("config")
    sub.add_parser("selfcheck", help="run every experiment with default settings and check the results")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.workers is not None and args.workers < 1:
        print("invalid option: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "run":
        return cmd_run(args)
    return cmd_selfcheck(args)


if __name__ == "__main__":
    sys.exit(main())
