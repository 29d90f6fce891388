"""Sampled curves: ordered (parameter, point) samples in a chart."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .core import NULL_TOL, GeometryError, lorentz_product

__all__ = ["SampledCurve", "NotCausalError"]


class NotCausalError(GeometryError):
    """A curve segment is spacelike beyond the null tolerance."""

    def __init__(self, message, segment=None, value=None):
        super().__init__(message)
        self.segment = segment
        self.value = value


@dataclass(frozen=True)
class SampledCurve:
    """A curve given by samples ``points[i] = gamma(params[i])``.

    ``velocities`` may carry exact derivatives; otherwise they are derived by
    (second-order, nonuniform) central differences. ``arclength`` marks curves
    parametrized by Euclidean arclength.
    """

    params: np.ndarray
    points: np.ndarray
    velocities: Optional[np.ndarray] = None
    arclength: bool = False

    def __post_init__(self):
        t = np.asarray(self.params, dtype=float).ravel()
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[0] != t.size:
            raise GeometryError(f"points shape {p.shape} does not match {t.size} params")
        if t.size < 2:
            raise GeometryError("a sampled curve needs at least two samples")
        if np.any(np.diff(t) <= 0):
            raise GeometryError("curve parameters must be strictly increasing")
        object.__setattr__(self, "params", t)
        object.__setattr__(self, "points", p)
        if self.velocities is not None:
            v = np.asarray(self.velocities, dtype=float)
            if v.shape != p.shape:
                raise GeometryError("velocities must have the same shape as points")
            object.__setattr__(self, "velocities", v)

    @classmethod
    def from_function(cls, fn, params, derivative=None, arclength=False):
        t = np.asarray(params, dtype=float)
        pts = np.array([fn(s) for s in t], dtype=float)
        vel = None if derivative is None else np.array([derivative(s) for s in t], dtype=float)
        return cls(t, pts, vel, arclength)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.params.size

    @property
    def span(self) -> tuple[float, float]:
        return float(self.params[0]), float(self.params[-1])

    @property
    def derived_velocities(self) -> np.ndarray:
        if self.velocities is not None:
            return self.velocities
        edge = 2 if len(self) > 2 else 1
        return np.gradient(self.points, self.params, axis=0, edge_order=edge)

    def segment_slopes(self) -> np.ndarray:
        return np.diff(self.points, axis=0) / np.diff(self.params)[:, None]

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.points[1:] + self.points[:-1])

    def euclidean_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    def interpolant(self):
        """Cubic Hermite interpolant if velocities are known, else monotone cubic."""
        if self.velocities is not None:
            return CubicHermiteSpline(self.params, self.points, self.velocities, axis=0)
        return PchipInterpolator(self.params, self.points, axis=0)

    def evaluate(self, t) -> np.ndarray:
        return self.interpolant()(t)

    def segment_causality(self, field) -> np.ndarray:
        """``g_mid(s, s)`` for every segment slope ``s`` (midpoint metric)."""
        s = self.segment_slopes()
        return lorentz_product(field.metric(self.midpoints()), s, s)

    def check_causal(self, field, null_tol: float = NULL_TOL) -> None:
        q = self.segment_causality(field)
        scale = np.maximum(1.0, np.sum(self.segment_slopes() ** 2, axis=1))
        bad = np.nonzero(q < -null_tol * scale)[0]
        if bad.size:
            k = int(bad[np.argmin(q[bad])])
            raise NotCausalError(f"segment {k} is spacelike: g(s,s) = {q[k]:.3e}",
                                 segment=k, value=float(q[k]))

    def is_causal(self, field, null_tol: float = NULL_TOL) -> bool:
        try:
            self.check_causal(field, null_tol)
        except NotCausalError:
            return False
        return True

    def arclength_reparametrized(self, samples: Optional[int] = None) -> "SampledCurve":
        """Reparametrize by cumulative chord length.

        Known velocities give a Hermite interpolant with unit tangents,
        otherwise monotone cubic interpolation of the coordinates is used.
        With ``samples`` the result is resampled on a uniform arclength grid.
        """
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        keep = np.concatenate([[True], seg > 0])
        s = np.concatenate([[0.0], np.cumsum(seg)])[keep]
        pts = self.points[keep]
        if s.size < 2:
            raise GeometryError("curve is constant; arclength is undefined")
        if self.velocities is not None:
            v = self.velocities[keep]
            speed = np.linalg.norm(v, axis=1, keepdims=True)
            tangent = np.where(speed > 0, v / np.where(speed > 0, speed, 1.0), 0.0)
            interp = CubicHermiteSpline(s, pts, tangent, axis=0)
        else:
            interp = PchipInterpolator(s, pts, axis=0)
        if samples is None:
            grid = s
        else:
            grid = np.linspace(0.0, s[-1], samples)
        return SampledCurve(grid, interp(grid), interp(grid, 1), arclength=True)

    def bilipschitz_constant(self, pairs: int = 2000, seed: int = 0) -> float:
        """Sampled ``max |t - t'| / |gamma(t) - gamma(t')|``."""
        rng = np.random.default_rng(seed)
        i = rng.integers(0, len(self), pairs)
        j = rng.integers(0, len(self), pairs)
        i, j = i[i != j], j[i != j]
        dt = np.abs(self.params[i] - self.params[j])
        dx = np.linalg.norm(self.points[i] - self.points[j], axis=1)
        return float(np.max(dt / np.maximum(dx, 1e-300)))

    def resampled(self, params) -> "SampledCurve":
        interp = self.interpolant()
        t = np.asarray(params, dtype=float)
        return SampledCurve(t, interp(t), interp(t, 1), self.arclength)
