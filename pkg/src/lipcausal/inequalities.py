"""
Quantitative estimates: reverse triangle inequality with a distance term,
its consequence for the length gap of curves under constant forms, the
length comparison for nearby metrics, and the velocity lower bound for
maximal curves.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .connection import christoffel_bound
from .core import NULL_TOL, BilinearForm, GeometryError, MetricField, lorentz_product
from .curves import SampledCurve

__all__ = [
    "TRIANGLE_CONSTANT",
    "InequalitySweepReport",
    "ChordGap",
    "quantitative_triangle_slack",
    "triangle_terms",
    "sample_future_cone",
    "triangle_sweep",
    "form_constant",
    "form_transform",
    "chord_length_gap",
    "length_comparison_check",
    "velocity_lower_bound_constant",
    "velocity_lower_bound_check",
    "causal_length_bound",
]

TRIANGLE_CONSTANT = 0.1


def _minkowski_norms(w):
    """Lorentzian norms ``sqrt(w_t^2 - |w_s|^2)`` computed as ``sqrt((w_t - r)(w_t + r))``."""
    r = np.linalg.norm(w[..., 1:], axis=-1)
    return np.sqrt(np.maximum((w[..., 0] - r) * (w[..., 0] + r), 0.0))


def triangle_terms(u, v):
    """Batched ``(lhs, D)`` with ``lhs = |u+v|^2 - |u+v|(|u| + |v|)``.

    ``lhs`` is evaluated without cancellation:
    ``|u+v| - |u| - |v| = 2(<u,v> - |u||v|) / (|u+v| + |u| + |v|)`` and
    ``<u,v> - |u||v| = (<u,v>^2 - |u|^2|v|^2)/(<u,v> + |u||v|)``, where the
    numerator is a sum of squared wedge components. ``D`` is the Euclidean
    distance from ``u`` to the line spanned by ``u + v``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    w = u + v
    nu, nv, nw = _minkowski_norms(u), _minkowski_norms(v), _minkowski_norms(w)
    # <u,v>^2 - <u,u><v,v> via wedge components (Cauchy-Binet, signature + - ... -)
    wedge = u[..., :, None] * v[..., None, :] - u[..., None, :] * v[..., :, None]
    n = u.shape[-1]
    iu = np.triu_indices(n, 1)
    comps = wedge[..., iu[0], iu[1]] ** 2
    sign = np.where(iu[0] == 0, 1.0, -1.0)
    gram = np.sum(comps * sign, axis=-1)
    ip = u[..., 0] * v[..., 0] - np.sum(u[..., 1:] * v[..., 1:], axis=-1)
    denom1 = ip + nu * nv
    with np.errstate(invalid="ignore", divide="ignore"):
        diff_ip = np.where(denom1 > 0, gram / np.where(denom1 > 0, denom1, 1.0), 0.0)
        denom2 = nw + nu + nv
        gap = np.where(denom2 > 0, 2.0 * diff_ip / np.where(denom2 > 0, denom2, 1.0), 0.0)
    lhs = nw * gap
    # Euclidean distance from u to span(w)
    ww = np.sum(w * w, axis=-1)
    proj = np.sum(u * w, axis=-1) / np.where(ww > 0, ww, 1.0)
    perp = u - proj[..., None] * w
    D = np.linalg.norm(perp, axis=-1)
    return lhs, D


def _check_future_causal(u, name):
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size < 2:
        raise GeometryError(f"{name} must be a vector with at least two components")
    r = float(np.linalg.norm(u[1:]))
    if not u[0] > 0:
        raise GeometryError(f"{name} = {u} is not future directed")
    if u[0] < r * (1.0 - 1e-12):
        raise GeometryError(f"{name} = {u} is spacelike")
    return u


def quantitative_triangle_slack(u, v, A: float = TRIANGLE_CONSTANT) -> tuple[float, float]:
    """``(slack, D)`` with ``slack = |u+v|^2 - |u+v|(|u|+|v|) - A D^2``.

    ``u`` and ``v`` must be future-directed causal for the standard product.
    """
    u = _check_future_causal(u, "u")
    v = _check_future_causal(v, "v")
    if u.size != v.size:
        raise GeometryError("u and v have different dimensions")
    lhs, D = triangle_terms(u, v)
    return float(lhs - A * D * D), float(D)


def sample_future_cone(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    """Future causal vectors: time component uniform in (0, 1], spatial direction
    uniform on the sphere, spatial radius uniform in [0, time component]."""
    t = 1.0 - rng.random(count)                     # (0, 1]
    if n == 2:
        d = np.where(rng.random(count) < 0.5, -1.0, 1.0)[:, None]
    else:
        d = rng.standard_normal((count, n - 1))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = t * rng.random(count)
    return np.hstack([t[:, None], d * r[:, None]])


@dataclass
class InequalitySweepReport:
    trials: int
    violations: int
    min_slack: float
    argmin_witness: tuple
    empirical_best_constant: Optional[float]
    dimension: int
    seed: int

    def to_dict(self) -> dict:
        return {"trials": self.trials, "violations": self.violations,
                "min_slack": self.min_slack,
                "argmin_witness": [np.asarray(w).tolist() for w in self.argmin_witness],
                "empirical_best_constant": self.empirical_best_constant,
                "dimension": self.dimension, "seed": self.seed}


def _sweep_chunk(n, count, seed_seq, A, sampler):
    rng = np.random.default_rng(seed_seq)
    u = sample_future_cone(rng, count, n)
    if sampler == "parallel":
        v = u * rng.uniform(0.1, 2.0, count)[:, None]
    else:
        v = sample_future_cone(rng, count, n)
    lhs, D = triangle_terms(u, v)
    slack = lhs - A * D * D
    scale = np.maximum(1.0, np.sum(u * u, axis=1) + np.sum(v * v, axis=1))
    viol = int(np.sum(slack < -1e-12 * scale))
    k = int(np.argmin(slack))
    ok = D > 1e-6
    best = float(np.min(lhs[ok] / D[ok] ** 2)) if ok.any() else np.inf
    return viol, float(slack[k]), (u[k].copy(), v[k].copy()), best


def triangle_sweep(n: int, trials: int = 1_000_000, seed: int = 0, threads: int = 1,
                   chunk: int = 100_000, A: float = TRIANGLE_CONSTANT,
                   sampler: str = "cone") -> InequalitySweepReport:
    """Monte Carlo sweep of the quantitative triangle inequality in dimension ``n``.

    Trials are split into fixed chunks with independent seeds spawned from
    ``seed``; the result does not depend on ``threads``. ``sampler="parallel"``
    draws ``v`` as a positive multiple of ``u`` (all ``D = 0``).
    """
    if n < 2:
        raise GeometryError("dimension must be >= 2")
    if sampler not in ("cone", "parallel"):
        raise GeometryError(f"unknown sampler {sampler!r}")
    sizes = [chunk] * (trials // chunk) + ([trials % chunk] if trials % chunk else [])
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(n, c, s, A, sampler) for c, s in zip(sizes, seqs)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda j: _sweep_chunk(*j), jobs))
    else:
        parts = [_sweep_chunk(*j) for j in jobs]
    viol = sum(p[0] for p in parts)
    k = int(np.argmin([p[1] for p in parts]))
    best = min(p[3] for p in parts)
    return InequalitySweepReport(trials, viol, parts[k][1], parts[k][2],
                                 None if not np.isfinite(best) else float(best), n, seed)


# -- constant forms ---------------------------------------------------------------------


def form_transform(form: Union[BilinearForm, np.ndarray]) -> np.ndarray:
    """Matrix ``T`` with ``form(x, y) = eta(T x, T y)`` (eta the standard product)."""
    m = form.matrix if isinstance(form, BilinearForm) else BilinearForm(form).matrix
    ev, Q = np.linalg.eigh(m)
    order = np.argsort(-ev)                       # the positive eigenvalue first
    ev, Q = ev[order], Q[:, order]
    T = np.sqrt(np.abs(ev))[:, None] * Q.T
    if T[0, 0] < 0:                               # keep the chart time direction future
        T[0] = -T[0]
    return T


def form_constant(form: Union[BilinearForm, np.ndarray]) -> tuple[float, float]:
    """Constant ``A`` for the chord-gap inequality of a constant form, and the
    distortion ``sigma_max/sigma_min`` of the normalizing transformation.

    With ``form = eta(T., T.)`` the standard-product inequality transfers via
    ``T``; distances shrink by at most ``sigma_min(T)``, so
    ``A = sigma_min(T)^2 / 10`` (exactly 1/10 for the standard product).
    """
    s = np.linalg.svd(form_transform(form), compute_uv=False)
    return float(TRIANGLE_CONSTANT * s.min() ** 2), float(s.max() / s.min())


@dataclass
class ChordGap:
    gap: float
    bound: float
    D: float
    A: float
    ok: bool

    def __iter__(self):
        yield self.gap
        yield self.bound


def _line_distance(points, a, w):
    rel = points - a
    ww = float(w @ w)
    return np.linalg.norm(rel - np.outer(rel @ w / ww, w), axis=1)


def chord_length_gap(curve: SampledCurve, form: Union[BilinearForm, np.ndarray],
                     A: Optional[float] = None) -> ChordGap:
    """Length gap ``|w| - L(curve)`` against ``A D^2 / |w|`` for a constant form.

    ``w`` is the endpoint difference and ``D`` the largest Euclidean distance
    of a curve sample to the line through the endpoints. Unpacks as
    ``(gap, bound)``.
    """
    form = form if isinstance(form, BilinearForm) else BilinearForm(form)
    d = np.diff(curve.points, axis=0)
    q = lorentz_product(form, d, d)
    scale = np.maximum(1.0, np.sum(d * d, axis=1))
    if np.any(q <= NULL_TOL * scale) or np.any(d @ form_transform(form)[0] <= 0):
        k = int(np.argmin(q))
        raise GeometryError(f"curve is not timelike for the form (segment {k}: {q[k]:.3e})")
    w = curve.points[-1] - curve.points[0]
    nw = float(np.sqrt(lorentz_product(form, w, w)))
    length = float(np.sum(np.sqrt(q)))
    D = float(np.max(_line_distance(curve.points, curve.points[0], w)))
    if A is None:
        A, _ = form_constant(form)
    gap = nw - length
    bound = A * D * D / nw
    ok = gap >= bound - 1e-9 * max(1.0, nw)
    return ChordGap(gap, bound, D, float(A), bool(ok))


# -- metrics close to each other --------------------------------------------------------


def length_comparison_check(curve: SampledCurve, g1: MetricField, g2: MetricField,
                            eps: Optional[float] = None, inflate: float = 1.05,
                            null_tol: float = NULL_TOL) -> dict:
    """Check ``|L1(curve) - L2(curve)| <= delta sqrt(eps) + 1e-9``.

    ``delta`` is the Euclidean length of the curve and ``eps`` bounds
    ``|g1(v,v) - g2(v,v)|`` over unit vectors along the curve; by default it
    is the largest spectral norm of ``g1 - g2`` at the samples and segment
    midpoints (the points where the polygon lengths evaluate the metrics),
    inflated by 5%.
    """
    from .maximality import lorentzian_length

    for name, g in (("first", g1), ("second", g2)):
        if not curve.is_causal(g, null_tol):
            raise GeometryError(f"curve is not causal for the {name} metric")
    if eps is None:
        pts = np.vstack([curve.points, curve.midpoints()])
        diff = g1.metric(pts) - g2.metric(pts)
        eps = inflate * float(np.max(np.abs(np.linalg.eigvalsh(diff))))
    delta = curve.euclidean_length()
    L1 = lorentzian_length(curve, g1, null_tol)
    L2 = lorentzian_length(curve, g2, null_tol)
    bound = delta * np.sqrt(eps)
    diff = abs(L1 - L2)
    return {"L1": L1, "L2": L2, "difference": diff, "delta": delta, "eps": eps,
            "bound": float(bound), "slack": float(bound + 1e-9 - diff),
            "ok": bool(diff <= bound + 1e-9)}


# -- velocity lower bound -----------------------------------------------------------------


def causal_length_bound(field: MetricField) -> float:
    """Euclidean length bound for causal curves in the chart ball.

    Future causal unit vectors have time component at least 1/2 and time
    ranges over ``2R``, so causal curves have Euclidean length at most ``4R``.
    """
    return 4.0 * field.domain_radius


def velocity_lower_bound_constant(C: float, r_max: float) -> float:
    """``K = C r_max / (e^{C r_max} - 1)`` (``K -> 1`` as ``C r_max -> 0``)."""
    x = C * r_max
    if x < 0:
        raise GeometryError("C and r_max must be nonnegative")
    return 1.0 if x == 0 else float(x / np.expm1(x))


def velocity_lower_bound_check(curve, field: MetricField, C: Optional[float] = None,
                               r_max: Optional[float] = None, samples: int = 4097,
                               tol: float = 1e-9, null_speed_tol: float = 1e-8,
                               polygonal: Optional[bool] = None) -> dict:
    """Check ``min_t |gamma'(t)|_g >= K L(gamma)/r`` for an arclength curve.

    The curve (``SampledCurve``, ``GeodesicTrajectory`` or
    ``MaximizationResult``) is parametrized by Euclidean arclength on
    ``[0, r]``. Polygons (the default for ``MaximizationResult``) are treated
    exactly: the arclength speed on a segment is its midpoint Lorentzian norm
    divided by its Euclidean length. Other curves are resampled through their
    interpolant. For curves of zero Lorentzian length the check instead
    requires every speed ``|gamma'|_g`` to be at most ``null_speed_tol``.
    """
    from .maximality import polygon_length
    from .regularity import _as_curve

    if polygonal is None:
        polygonal = hasattr(curve, "first_order_residual")
    c = _as_curve(curve)
    if polygonal:
        d = np.diff(c.points, axis=0)
        seg = np.linalg.norm(d, axis=1)
        keep = seg > 0
        d, seg = d[keep], seg[keep]
        mids = 0.5 * (c.points[1:] + c.points[:-1])[keep]
        gm = field.metric(mids)
        q = lorentz_product(gm, d, d) / seg ** 2
        # rounding of g(d, d) plus the first-order effect of rounding in the
        # node differences d = x_{i+1} - x_i
        ad = np.abs(d)
        node_err = np.finfo(float).eps * (np.abs(c.points[1:]) + np.abs(c.points[:-1]))[keep]
        scale = (lorentz_product(np.abs(gm), ad, ad)
                 + 0.5 * lorentz_product(np.abs(gm), ad, node_err) / np.finfo(float).eps) / seg ** 2
        r = float(np.sum(seg))
    else:
        if not (c.arclength and c.velocities is not None):
            c = c.arclength_reparametrized(samples=samples)
        r = c.span[1] - c.span[0]
        vel = c.derived_velocities
        gm = field.metric(c.points)
        q = lorentz_product(gm, vel, vel)
        scale = lorentz_product(np.abs(gm), np.abs(vel), np.abs(vel))
    # products within the rounding error of their evaluation are zero to
    # working precision; their square roots (~1e-8) are noise, not speed
    q = np.where(np.abs(q) <= 8.0 * np.finfo(float).eps * scale, 0.0, q)
    speeds = np.sqrt(np.maximum(q, 0.0))
    # the midpoint polygon length, with the same rounding floor for polygons
    length = float(np.sum(seg * speeds)) if polygonal else polygon_length(field, c.points)
    if C is None:
        C = christoffel_bound(field)
    if r_max is None:
        r_max = causal_length_bound(field)
    K = velocity_lower_bound_constant(C, r_max)
    if length <= null_speed_tol * max(1.0, r):
        ok = bool(np.max(speeds) <= null_speed_tol)
        return {"lightlike": True, "length": length, "max_speed": float(np.max(speeds)),
                "K": K, "ok": ok, "margin": float(null_speed_tol - np.max(speeds))}
    lower = K * length / r
    margin = float(np.min(speeds) - lower)
    return {"lightlike": False, "length": length, "r": r, "K": K, "C": float(C),
            "r_max": r_max, "min_speed": float(np.min(speeds)), "lower_bound": lower,
            "margin": margin, "ok": bool(margin >= -tol)}
