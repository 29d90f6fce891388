"""CSV and JSON serialization of trajectories, curves and reports."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import GeometryError
from .curves import SampledCurve

__all__ = [
    "FLOAT_FORMAT",
    "write_trajectory_csv",
    "write_curve_csv",
    "read_curve_csv",
    "write_events_json",
    "dump_json",
    "to_jsonable",
]

FLOAT_FORMAT = "%.17g"


def _fmt(x) -> str:
    return FLOAT_FORMAT % x


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and dataclass-like reports."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def dump_json(obj, path: Union[str, Path, None] = None) -> str:
    """Deterministic JSON (sorted keys, shortest round-trip floats)."""
    text = json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _header(n: int, velocities: bool) -> list[str]:
    cols = ["tau"] + [f"x_{i}" for i in range(n)]
    if velocities:
        cols += [f"v_{i}" for i in range(n)]
    return cols + ["branch_id"]


def write_trajectory_csv(path, taus, xs, vs, branch) -> None:
    """Write ``tau,x_0..x_{n-1},v_0..v_{n-1},branch_id`` rows."""
    xs = np.asarray(xs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_header(xs.shape[1], True))
        for t, x, v, b in zip(taus, xs, np.asarray(vs), branch):
            w.writerow([_fmt(t)] + [_fmt(c) for c in x] + [_fmt(c) for c in v] + [int(b)])


def write_curve_csv(path, curve: SampledCurve, branch=None) -> None:
    """Trajectory format without velocity columns."""
    if branch is None:
        branch = np.zeros(len(curve), dtype=int)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_header(curve.dim, False))
        for t, x, b in zip(curve.params, curve.points, branch):
            w.writerow([_fmt(t)] + [_fmt(c) for c in x] + [int(b)])


def read_curve_csv(path, arclength: bool = False) -> SampledCurve:
    """Read a trajectory or curve CSV (velocity columns optional)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise GeometryError(f"{path}: empty file")
    header = rows[0]
    if not header or header[0] != "tau":
        raise GeometryError(f"{path}: first column must be 'tau'")
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    vcols = [i for i, h in enumerate(header) if h.startswith("v_")]
    if not xcols:
        raise GeometryError(f"{path}: no position columns")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise GeometryError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[0] < 2:
        raise GeometryError(f"{path}: need at least two rows")
    vel = data[:, vcols] if len(vcols) == len(xcols) else None
    return SampledCurve(data[:, 0], data[:, xcols], vel, arclength)


def write_events_json(path, events, metric_ref: str = "", truncated: bool = False,
                      extra: Optional[dict] = None) -> None:
    payload = {"metric_ref": metric_ref, "truncated": bool(truncated),
               "events": [e.to_dict() for e in events]}
    if extra:
        payload.update(extra)
    dump_json(payload, path)
