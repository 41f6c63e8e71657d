"""Command line entry point: ``slag-glue run <config> [--output-dir] [--seed] [--experiment]``.

The config file is INI-style.  Keys in ``[run]`` apply to every experiment;
a section named after an experiment overrides them for that experiment.

    [run]
    experiment = error_scaling
    delta_list = 0.1, 0.01, 0.001
    resolutions = 128, 16, 8

    [error_scaling]
    seed = 3

Exit codes: 0 success, 1 a named invariant failed, 2 invalid config.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import platform
import re
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import ConfigError
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from .gluing_model import Cutoff

log = logging.getLogger("slag_glue")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2


def _key_line(text: str, section: str, key: str) -> int | None:
    """1-based line of ``key`` inside ``[section]``, for error messages."""
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        head = re.match(r"\s*\[([^\]]+)\]", line)
        if head:
            current = head.group(1).strip()
            continue
        m = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and current == section and m.group(1).strip().lower() == key.lower():
            return i
    return None


def _floats(raw: str) -> list[float]:
    return [float(x) for x in re.split(r"[,\s]+", raw.strip()) if x]


def _parse_value(name: str, raw: str):
    if name == "delta_list":
        return _floats(raw)
    if name == "resolutions":
        vals = [int(x) for x in re.split(r"[,\s]+", raw.strip()) if x]
        if len(vals) != 3:
            raise ValueError("resolutions needs three integers (n_r, n_theta, n_kappa)")
        return tuple(vals)
    if name == "cutoff":
        return Cutoff.parse(raw)
    if name in ("seed", "samples", "trials", "max_iters"):
        return int(raw)
    if name in ("area_factor_A", "blend_width", "lp_exponent", "curve_radius"):
        return float(raw)
    return raw.strip()


def validate(ec: ExperimentConfig) -> None:
    if ec.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {ec.experiment!r}; choose from {list(EXPERIMENTS)}")
    if not ec.delta_list:
        raise ConfigError("delta_list is empty")
    for d in ec.delta_list:
        if not 0.0 < d <= 0.3:
            raise ConfigError(f"delta_list entry {d} outside (0, 0.3]")
    if any(n < 8 for n in ec.resolutions):
        raise ConfigError(f"resolutions must all be >= 8, got {ec.resolutions}")
    if ec.area_factor_A <= 0.0:
        raise ConfigError("area_factor_A must be positive")
    if not 0.0 < ec.blend_width <= 0.5:
        raise ConfigError("blend_width must lie in (0, 0.5]")
    if ec.samples < 1 or ec.trials < 1 or ec.max_iters < 1:
        raise ConfigError("samples, trials and max_iters must be positive")
    if ec.lp_exponent < 1.0:
        raise ConfigError("lp_exponent must be >= 1")


def load_config(path: str | Path, experiment: str | None = None) -> ExperimentConfig:
    """Read and validate an INI config; errors carry the offending line number."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(exc.message.splitlines()[0], getattr(exc, "lineno", None)) from exc
    known = {f.name for f in fields(ExperimentConfig)}
    sections = parser.sections()
    for sec in sections:
        if sec != "run" and sec not in EXPERIMENTS:
            raise ConfigError(f"unknown section [{sec}]", _key_line(text, sec, "") or _section_line(text, sec))
        for key in parser[sec]:
            if key not in known or (key == "experiment" and sec != "run"):
                raise ConfigError(f"unknown key {key!r} in [{sec}]", _key_line(text, sec, key))

    values: dict = {}
    origin: dict = {}

    def absorb(sec: str):
        for key, raw in parser[sec].items():
            try:
                values[key] = _parse_value(key, raw)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", _key_line(text, sec, key)) from exc
            origin[key] = (sec, key)

    if "run" in sections:
        absorb("run")
    name = experiment or values.get("experiment", ExperimentConfig.experiment)
    values["experiment"] = name
    if name in sections:
        absorb(name)
    ec = ExperimentConfig(**values)
    try:
        validate(ec)
    except ConfigError as exc:
        key = _blame(str(exc))
        line = _key_line(text, *origin[key]) if key in origin else None
        raise ConfigError(str(exc), line) from None
    return ec


def _section_line(text: str, section: str) -> int | None:
    for i, line in enumerate(text.splitlines(), start=1):
        if re.match(rf"\s*\[{re.escape(section)}\]", line):
            return i
    return None


def _blame(message: str) -> str | None:
    for key in ("delta_list", "resolutions", "area_factor_A", "blend_width", "experiment", "lp_exponent"):
        if key in message:
            return key
    for key in ("samples", "trials", "max_iters"):
        if key in message:
            return key
    return None


def _versions() -> dict:
    return {
        "slag_glue": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def run(config_path: str, output_dir: str | None = None, seed: int | None = None, experiment: str | None = None) -> int:
    try:
        ec = load_config(config_path, experiment)
        if seed is not None:
            ec.seed = seed
        if output_dir is not None:
            ec.output_dir = output_dir
    except ConfigError as exc:
        print(f"config error: {config_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(ec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    result = run_experiment(ec)
    wall = time.perf_counter() - start
    written = [t.write(out).name for t in result.tables]
    manifest = {
        "config": ec.echo(),
        "versions": _versions(),
        "results_summary": {"experiment": result.name, "files": written, **result.summary},
        "invariant_suite": [{"name": c.name, "pass": bool(c.passed), "detail": c.detail} for c in result.checks],
        "timing": {"wall_seconds": wall},
    }
    (out / f"manifest_{result.name}.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")
    for c in result.checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    failed = [c.name for c in result.checks if not c.passed]
    if failed:
        print(f"invariant failure: {', '.join(failed)}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slag-glue", description="Special-Lagrangian neck gluing experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("config", help="INI config file")
    p_run.add_argument("--output-dir", default=None, help="directory for CSV and manifest output")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--experiment", choices=EXPERIMENTS, default=None, help="override the config experiment")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return run(args.config, args.output_dir, args.seed, args.experiment)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
