"""
Command-line experiment driver.

Usage::

    lipcausal <command> --config exp.json [--output DIR] [--threads K] [--seed S] [--timing]

Commands: integrate, maximize, shoot, regularity, repar, sweep-triangle,
check-bounds, limit-experiment. Every run writes ``report.json`` and
``manifest.json`` (config echo, library version, seed) into the output
directory, plus command-specific CSV files. A manifest can be passed back as
``--config`` to reproduce a run.

Exit codes: 0 success, 1 usage error, 2 validation failure (malformed
config, invalid input data, or a verification check that failed), 3
numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import zlib
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import __version__
from .core import GeometryError, SignatureError
from .curves import NotCausalError
from .filippov import (FilippovState, c11_check, integrate_geodesic, limit_experiment,
                       reparametrize_constant_speed, speed_deviation, velocity_upper_bound_check)
from .connection import christoffel_bound
from .inequalities import triangle_sweep, velocity_lower_bound_check
from .io import dump_json, read_curve_csv, write_curve_csv, write_events_json, write_trajectory_csv
from .maximality import (NotCausallyRelatedError, maximize_causal_curve, shoot_geodesic,
                         smooth_length)
from .regularity import estimate_holder_exponent, regularity_of_maximizer, synthetic_holder_curve
from .zoo import KINDS, make_metric

__all__ = ["main", "run", "COMMANDS", "CONFIG_SCHEMA", "load_config", "ConfigError"]

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3

_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 2}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INIT = {
    "type": "object",
    "properties": {"x0": _VEC, "v0": _VEC, "tau_end": _POS, "step": _POS,
                   "verify_hull": {"type": "boolean"}},
    "required": ["x0", "v0", "tau_end"],
    "additionalProperties": False,
}
_ENDPOINTS = {
    "type": "object",
    "properties": {"x": _VEC, "y": _VEC, "segments": {"type": "integer", "minimum": 2},
                   "max_iter": {"type": "integer", "minimum": 1}, "step": _POS,
                   "v0_guess": _VEC},
    "required": ["x", "y"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "metric": {
            "type": "object",
            "properties": {"kind": {"enum": list(KINDS)},
                           "params": {"type": "object"},
                           "dim": {"type": "integer", "minimum": 2}},
            "required": ["kind"],
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "output_dir": {"type": "string"},
        "integrate": _INIT,
        "check_bounds": _INIT,
        "maximize": _ENDPOINTS,
        "shoot": _ENDPOINTS,
        "repar": {
            "type": "object",
            "properties": {"x0": _VEC, "v0": _VEC, "tau_end": _POS, "step": _POS,
                           "input": {"type": "string"},
                           "ell": {"anyOf": [{"const": "auto"}, _POS]},
                           "samples": {"type": "integer", "minimum": 2}},
            "additionalProperties": False,
        },
        "regularity": {
            "type": "object",
            "properties": {
                "input": {"type": "string"},
                "generator": {
                    "type": "object",
                    "properties": {"beta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                                   "samples": {"type": "integer", "minimum": 17},
                                   "half_range": _POS},
                    "required": ["beta"],
                    "additionalProperties": False,
                },
                "h_grid": {"type": "array", "items": _POS, "minItems": 2},
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {"dimension": {"type": "integer", "minimum": 2},
                           "trials": {"type": "integer", "minimum": 1},
                           "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
                           "sampler": {"enum": ["cone", "parallel"]}},
            "required": ["dimension", "trials"],
            "additionalProperties": False,
        },
        "limit": {
            "type": "object",
            "properties": {"x": _VEC, "y": _VEC, "levels": {"type": "integer", "minimum": 1},
                           "pieces": {"type": "integer", "minimum": 1}, "step": _POS,
                           "checks": {"type": "integer", "minimum": 1}},
            "required": ["x", "y"],
            "additionalProperties": False,
        },
    },
    "required": ["metric", "seed"],
    "additionalProperties": False,
}

# subcommand -> config block it needs
COMMANDS = {
    "integrate": "integrate",
    "maximize": "maximize",
    "shoot": "shoot",
    "regularity": "regularity",
    "repar": "repar",
    "sweep-triangle": "sweep",
    "check-bounds": "check_bounds",
    "limit-experiment": "limit",
}


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config (JSON) or manifest")
    common.add_argument("--output", help="output directory (default: config output_dir or '.')")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--timing", action="store_true",
                        help="record wall-clock runtime (reports are then not byte-identical)")
    parser = _Parser(prog="lipcausal", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _line_of(text: str, path) -> Optional[int]:
    """Best-effort line number of the last key of a JSON path."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    start = 0
    line = None
    for key in keys:
        idx = text.find(f'"{key}"', start)
        if idx < 0:
            break
        start = idx
        line = text.count("\n", 0, idx) + 1
    return line


def load_config(path, command: str, seed_override: Optional[int] = None) -> dict:
    """Parse and validate a config (or manifest) for ``command``.

    Raises :class:`ConfigError` with ``file:line: field: message`` diagnostics.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{path}: no such config file")
    text = p.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if isinstance(data, dict) and "config" in data and "version" in data:
        data = data["config"]                       # a run manifest
    if seed_override is not None:
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        data["seed"] = int(seed_override)
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            field = ".".join(str(x) for x in e.absolute_path) or "<root>"
            line = _line_of(text, list(e.absolute_path))
            loc = f"{path}:{line}" if line else f"{path}"
            msgs.append(f"{loc}: {field}: {e.message}")
        raise ConfigError("\n".join(msgs))
    block = COMMANDS[command]
    if block not in data:
        raise ConfigError(f"{path}: missing '{block}' block required by '{command}'")
    for key in ("input",):
        ref = data.get(block, {}).get(key) if isinstance(data.get(block), dict) else None
        if ref is not None:
            fp = Path(ref)
            if not fp.is_absolute():
                fp = p.parent / fp
            if not fp.is_file():
                raise ConfigError(f"{path}:{_line_of(text, [block, key])}: {block}.{key}: "
                                  f"file {ref!r} does not exist")
            data[block] = dict(data[block], input=str(fp))
    if command == "regularity" and not ({"input", "generator"} & set(data[block])):
        raise ConfigError(f"{path}: regularity needs 'input' or 'generator'")
    if command == "repar" and "input" not in data[block] and not {"x0", "v0", "tau_end"} <= set(data[block]):
        raise ConfigError(f"{path}: repar needs 'input' or 'x0', 'v0', 'tau_end'")
    return data


_VECTOR_KEYS = ("x0", "v0", "x", "y", "v0_guess")


def _check_dimensions(cfg: dict, block: str, dim: int, path) -> None:
    """Points and vectors of the command block must match the metric dimension."""
    text = Path(path).read_text()
    for key in _VECTOR_KEYS:
        vec = cfg[block].get(key)
        if vec is not None and len(vec) != dim:
            raise ConfigError(f"{path}:{_line_of(text, [block, key])}: {block}.{key}: has "
                              f"{len(vec)} components, the metric is {dim}-dimensional")


def substream_seed(seed: int, name: str) -> int:
    """Deterministic sub-seed for a named random stream."""
    ss = np.random.SeedSequence([int(seed) % 2 ** 64, zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0] % 2 ** 63)


def _energy_drift(traj, field) -> float:
    E = traj.energy(field)
    drift = 0.0
    for start, stop, _ in traj.segments_by_branch():
        seg = E[start:stop + 1]
        drift = max(drift, float(np.ptp(seg)) / max(1.0, abs(float(seg[0]))))
    return drift


def _integrate(field, block):
    init = FilippovState(block["x0"], block["v0"], 0.0)
    return integrate_geodesic(field, init, block["tau_end"], block.get("step", 1e-3),
                              verify_hull=block.get("verify_hull", False))


def _traj_outputs(traj, field, out: Path, stem="trajectory"):
    write_trajectory_csv(out / f"{stem}.csv", traj.taus, traj.xs, traj.vs, traj.branch)
    write_events_json(out / f"{stem}_events.json", traj.events, traj.metric_ref, traj.truncated)


def _cmd_integrate(cfg, field, out, args, warnings):
    traj = _integrate(field, cfg["integrate"])
    _traj_outputs(traj, field, out)
    if traj.truncated:
        warnings.append("trajectory left the chart and was truncated")
    res = {"final": {"tau": traj.taus[-1], "x": traj.xs[-1], "v": traj.vs[-1]},
           "nodes": len(traj), "events": [e.to_dict() for e in traj.events],
           "truncated": traj.truncated, "energy_drift": _energy_drift(traj, field)}
    if traj.hull_report is not None:
        res["hull"] = traj.hull_report.to_dict()
        res["ok"] = traj.hull_report.passed
    return res


def _cmd_maximize(cfg, field, out, args, warnings):
    b = cfg["maximize"]
    r = maximize_causal_curve(field, b["x"], b["y"], b.get("segments", 32),
                              max_iter=b.get("max_iter", 10_000))
    write_curve_csv(out / "curve.csv", r.curve, field.branch_at(r.curve.points))
    if not r.converged:
        warnings.append("iteration cap reached before convergence")
    res = r.to_dict()
    res["velocity_lower"] = velocity_lower_bound_check(r, field)
    if r.length > 1e-8:
        rep = regularity_of_maximizer(r, field)
        res["regularity"] = rep.to_dict()
        res["alpha_hat"] = rep.alpha_hat
        cs = reparametrize_constant_speed(r.curve, field)
        res["velocity_upper"] = velocity_upper_bound_check(cs, christoffel_bound(field)).to_dict()
    else:
        warnings.append("lightlike maximizer: regularity fit and upper bound skipped")
    return res


def _cmd_shoot(cfg, field, out, args, warnings):
    b = cfg["shoot"]
    traj, info = shoot_geodesic(field, b["x"], b["y"], b.get("v0_guess"),
                                step=b.get("step", 1e-3), return_info=True)
    _traj_outputs(traj, field, out)
    length, _ = smooth_length(field, traj.position, traj.velocity, traj.taus)
    return {"iterations": info["iterations"], "residual": info["residual"],
            "v0": info["v0"], "length": length, "events": [e.to_dict() for e in traj.events]}


def _cmd_regularity(cfg, field, out, args, warnings):
    b = cfg["regularity"]
    if "input" in b:
        curve = read_curve_csv(b["input"])
    else:
        g = b["generator"]
        curve = synthetic_holder_curve(g["beta"], g.get("samples", 10_001), g.get("half_range", 1.0))
    rep = estimate_holder_exponent(curve, b.get("h_grid"))
    return rep.to_dict()


def _cmd_repar(cfg, field, out, args, warnings):
    b = cfg["repar"]
    src = read_curve_csv(b["input"]) if "input" in b else _integrate(field, b)
    curve, info = reparametrize_constant_speed(src, field, b.get("ell", "auto"),
                                               samples=b.get("samples"), return_info=True)
    write_trajectory_csv(out / "repar.csv", curve.params, curve.points, curve.velocities,
                         field.branch_at(curve.points))
    info.update(speed_deviation(curve, field, info["ell"]))
    return info


def _cmd_sweep(cfg, field, out, args, warnings):
    b = cfg["sweep"]
    seed = b["seed"] if "seed" in b else substream_seed(cfg["seed"], "sweep")
    rep = triangle_sweep(b["dimension"], b["trials"], seed=seed,
                         threads=max(1, args.threads), sampler=b.get("sampler", "cone"))
    res = rep.to_dict()
    res["ok"] = rep.violations == 0
    return res


def _cmd_check_bounds(cfg, field, out, args, warnings):
    traj = _integrate(field, cfg["check_bounds"])
    C2 = christoffel_bound(field)
    upper = velocity_upper_bound_check(traj, C2)
    lower = velocity_lower_bound_check(traj, field, C=C2)
    c11 = c11_check(traj, field, C2)
    return {"velocity_upper": upper.to_dict(), "velocity_lower": lower, "c11": c11,
            "ok": bool(upper.ok and lower["ok"] and c11["ok"])}


def _cmd_limit(cfg, field, out, args, warnings):
    b = cfg["limit"]
    res = limit_experiment(field, b["x"], b["y"], b.get("levels", 5), b.get("pieces", 4),
                           b.get("step", 1e-3), checks=b.get("checks", 100),
                           seed=substream_seed(cfg["seed"], "limit"))
    res["ok"] = bool(res["converging"] and res["margins_ok"])
    return res


_HANDLERS = {
    "integrate": _cmd_integrate,
    "maximize": _cmd_maximize,
    "shoot": _cmd_shoot,
    "regularity": _cmd_regularity,
    "repar": _cmd_repar,
    "sweep-triangle": _cmd_sweep,
    "check-bounds": _cmd_check_bounds,
    "limit-experiment": _cmd_limit,
}

_VALIDATION_ERRORS = (NotCausallyRelatedError, NotCausalError, SignatureError)


def run(argv=None) -> int:
    """Run one experiment; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.threads < 1:
        print("lipcausal: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config, args.command, args.seed)
        field = make_metric(cfg["metric"])
        _check_dimensions(cfg, COMMANDS[args.command], field.dim, args.config)
    except ConfigError as exc:
        print(f"lipcausal: invalid config:\n{exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GeometryError as exc:
        print(f"lipcausal: invalid metric: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(args.output or cfg.get("output_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    warnings: list[str] = []
    t0 = time.perf_counter()
    try:
        results = _HANDLERS[args.command](cfg, field, out, args, warnings)
    except _VALIDATION_ERRORS as exc:
        print(f"lipcausal: validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (GeometryError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"lipcausal: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    runtime = time.perf_counter() - t0 if args.timing else None
    report = {"command": args.command, "config": cfg, "results": results,
              "warnings": warnings, "runtime_seconds": runtime}
    dump_json(report, out / "report.json")
    dump_json({"command": args.command, "config": cfg, "seed": cfg["seed"],
               "version": __version__}, out / "manifest.json")
    if results.get("ok") is False:
        print("lipcausal: verification check failed (see report.json)", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
