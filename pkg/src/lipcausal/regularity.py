"""
Chord deviation profiles and Hölder exponents of curve derivatives.

A curve parametrized by Euclidean arclength has ``gamma'`` of Hölder class
``alpha`` essentially when every arc ``gamma([t, t + h])`` stays in a tube of
radius ``C h^(1 + alpha)`` around its chord. The deviation profile
``dev(h) = sup_t max dist(gamma([t, t + h]), chord)`` therefore scales like
``h^(1 + alpha)``, and a log-log fit recovers ``alpha``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence, Union

import numpy as np

from .core import GeometryError, MetricField
from .curves import SampledCurve

__all__ = [
    "InsufficientSamplingError",
    "DeviationProfile",
    "RegularityReport",
    "chord_deviation",
    "deviation_profile",
    "default_h_grid",
    "estimate_holder_exponent",
    "regularity_of_maximizer",
    "tube_contained",
    "synthetic_holder_curve",
    "uniform_arclength",
]

MIN_WINDOW_SAMPLES = 8


class InsufficientSamplingError(GeometryError):
    """Fewer than the required number of samples in a window."""


def _segment_distance(points, a, b):
    """Euclidean distance from each point to the segment ``[a, b]`` (batched)."""
    d = b - a
    dd = np.sum(d * d, axis=-1, keepdims=True)
    rel = points - a
    t = np.where(dd > 0, np.sum(rel * d, axis=-1, keepdims=True) / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(rel - t * d, axis=-1)


def chord_deviation(curve: SampledCurve, t: float, h: float,
                    min_samples: int = MIN_WINDOW_SAMPLES) -> float:
    """Max distance of the samples in ``[t, t + h]`` to the chord ``[gamma(t), gamma(t + h)]``.

    Chord endpoints come from the curve's interpolant, so ``t`` need not be
    a sample parameter.
    """
    t0, t1 = curve.span
    tol = 1e-12 * max(1.0, abs(t0), abs(t1))
    if h <= 0 or t < t0 - tol or t + h > t1 + tol:
        raise GeometryError(f"window [{t}, {t + h}] is outside [{t0}, {t1}]")
    mask = (curve.params >= t - tol) & (curve.params <= t + h + tol)
    if int(mask.sum()) < min_samples:
        raise InsufficientSamplingError(
            f"insufficient sampling: {int(mask.sum())} samples in window of width {h} "
            f"(need {min_samples})")
    ends = curve.evaluate(np.array([max(t, t0), min(t + h, t1)]))
    return float(np.max(_segment_distance(curve.points[mask], ends[0], ends[1])))


@dataclass
class DeviationProfile:
    h_values: np.ndarray
    dev: np.ndarray

    def to_dict(self) -> dict:
        return {"h_grid": self.h_values.tolist(), "dev": self.dev.tolist()}


@dataclass
class RegularityReport:
    alpha_hat: float
    C_hat: float
    fit_r2: float
    h_range: tuple
    profile: DeviationProfile
    line_exact: bool = False
    floors: dict = dc_field(default_factory=dict)

    @property
    def exceeds_floors(self) -> dict:
        return {k: bool(self.alpha_hat >= v) for k, v in self.floors.items()}

    def to_dict(self) -> dict:
        out = {"alpha_hat": self.alpha_hat, "C_hat": self.C_hat, "fit_r2": self.fit_r2,
               "h_range": list(self.h_range), "line_exact": self.line_exact}
        out.update(self.profile.to_dict())
        if self.floors:
            out["floors"] = dict(self.floors)
            out["exceeds_floors"] = self.exceeds_floors
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def uniform_arclength(curve: SampledCurve, samples: Optional[int] = None) -> SampledCurve:
    """Return the curve on a uniform Euclidean-arclength grid.

    Curves already flagged as arclength-parametrized on a uniform grid are
    returned unchanged.
    """
    if curve.arclength and samples is None:
        dt = np.diff(curve.params)
        if np.allclose(dt, dt[0], rtol=1e-9, atol=0):
            return curve
    n = samples if samples is not None else len(curve)
    return curve.arclength_reparametrized(samples=n)


def default_h_grid(curve: SampledCurve) -> np.ndarray:
    """Dyadic widths ``2^-3 ... 2^-9`` of the parameter range, at least 8 spacings."""
    t0, t1 = curve.span
    span = t1 - t0
    spacing = float(np.max(np.diff(curve.params)))
    grid = span * 2.0 ** -np.arange(3, 10)
    return grid[grid >= MIN_WINDOW_SAMPLES * spacing]


def deviation_profile(curve: SampledCurve, h_grid: Sequence[float]) -> DeviationProfile:
    """``dev(h)``: sup over windows started every ``h/4`` (uniform grids only)."""
    t = curve.params
    ds = (t[-1] - t[0]) / (t.size - 1)
    pts = curve.points
    devs = []
    for h in h_grid:
        k = int(round(h / ds))
        if k + 1 < MIN_WINDOW_SAMPLES:
            raise InsufficientSamplingError(
                f"insufficient sampling: window {h} spans only {k + 1} samples")
        stride = max(1, k // 4)
        starts = np.arange(0, t.size - k, stride)
        if starts.size == 0:
            raise GeometryError(f"window {h} exceeds the parameter range")
        offs = np.arange(k + 1)
        worst = 0.0
        for chunk in np.array_split(starts, max(1, starts.size * (k + 1) // 200_000 + 1)):
            win = pts[chunk[:, None] + offs[None, :]]          # (w, k+1, n)
            dist = _segment_distance(win, win[:, :1, :], win[:, -1:, :])
            worst = max(worst, float(dist.max()))
        devs.append(worst)
    return DeviationProfile(np.asarray(h_grid, dtype=float), np.asarray(devs))


def estimate_holder_exponent(curve: SampledCurve, h_grid: Optional[Sequence[float]] = None,
                             exact_tol: float = 1e-12) -> RegularityReport:
    """Fit ``log dev(h) = (1 + alpha) log h + log C`` over ``h_grid``.

    Curves not flagged as arclength-parametrized on a uniform grid are
    reparametrized first (cumulative chord length, same number of samples).
    A profile that vanishes to ``exact_tol`` (relative to the range) is
    reported as ``alpha_hat = 1`` with ``line_exact``.
    """
    c = uniform_arclength(curve)
    grid = default_h_grid(c) if h_grid is None else np.asarray(h_grid, dtype=float)
    if grid.size < 2:
        raise InsufficientSamplingError(
            "insufficient sampling: fewer than two admissible window widths")
    prof = deviation_profile(c, grid)
    span = c.span[1] - c.span[0]
    h_range = (float(grid.min()), float(grid.max()))
    if np.max(prof.dev) <= exact_tol * span:
        return RegularityReport(1.0, 0.0, 1.0, h_range, prof, line_exact=True)
    dev = np.maximum(prof.dev, np.finfo(float).tiny)
    X, Y = np.log(grid), np.log(dev)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RegularityReport(float(slope - 1.0), float(np.exp(intercept)), r2, h_range, prof)


def tube_contained(curve: SampledCurve, alpha: float, h_grid: Optional[Sequence[float]] = None,
                   growth: float = 2.0) -> bool:
    """Empirical tube test with exponent ``1 + alpha``.

    The ratios ``dev(h) / h^(1 + alpha)`` must stay bounded as ``h`` shrinks:
    the largest ratio may exceed the one at the widest window by at most the
    factor ``growth``.
    """
    c = uniform_arclength(curve)
    grid = default_h_grid(c) if h_grid is None else np.asarray(h_grid, dtype=float)
    prof = deviation_profile(c, grid)
    ratio = prof.dev / grid ** (1.0 + alpha)
    ref = ratio[np.argmax(grid)]
    return bool(np.max(ratio) <= growth * ref + 1e-300)


def synthetic_holder_curve(beta: float, samples: int = 10_001,
                           half_range: float = 1.0) -> SampledCurve:
    """Planar unit-speed curve with ``gamma' = (cos th, sin th)``, ``th(s) = |s|^beta``.

    ``gamma'`` is exactly ``beta``-Hölder at ``s = 0`` (a grid node for odd
    ``samples``). Positions are integrated by Simpson's rule per step.
    """
    if not 0 < beta <= 1:
        raise GeometryError("beta must lie in (0, 1]")
    s = np.linspace(-half_range, half_range, samples)

    def tangent(u):
        th = np.abs(u) ** beta
        return np.stack([np.cos(th), np.sin(th)], axis=-1)

    mid = 0.5 * (s[1:] + s[:-1])
    ds = np.diff(s)[:, None]
    inc = ds / 6.0 * (tangent(s[:-1]) + 4.0 * tangent(mid) + tangent(s[1:]))
    pts = np.vstack([np.zeros((1, 2)), np.cumsum(inc, axis=0)])
    return SampledCurve(s, pts, tangent(s), arclength=True)


def regularity_of_maximizer(result, field: Optional[MetricField] = None,
                            samples: int = 8193, h_grid=None) -> RegularityReport:
    """Hölder exponent of ``gamma'`` for a maximizer or geodesic.

    The input (``MaximizationResult``, ``GeodesicTrajectory`` or
    ``SampledCurve``) is resampled on a uniform arclength grid before the
    fit. The report carries the theoretical floors: 1/4 for arclength
    parametrizations of maximal curves in Lipschitz metrics, and
    ``holder_alpha/4`` for Hölder metrics.
    """
    curve = _as_curve(result)
    c = curve.arclength_reparametrized(samples=samples)
    rep = estimate_holder_exponent(c, h_grid)
    rep.floors = {"lipschitz_floor": 0.25}
    if field is not None:
        rep.floors["holder_floor"] = field.holder_alpha / 4.0
    return rep


def _as_curve(obj) -> SampledCurve:
    if isinstance(obj, SampledCurve):
        return obj
    if hasattr(obj, "curve") and isinstance(obj.curve, SampledCurve):
        return obj.curve
    if hasattr(obj, "as_curve"):
        return obj.as_curve()
    raise GeometryError(f"cannot convert {type(obj).__name__} to a sampled curve")
