"""
Test metric fields.

Every constructor returns a :class:`~lipcausal.core.MetricField` on a chart
ball around the origin, with analytic derivatives on each smooth branch and
the metric equal to Minkowski at the origin. Chart radii are chosen so that
the signature is preserved and every Euclidean-unit future causal vector has
time component at least 1/2.

Coordinate index 1 is the first spatial coordinate (``x1`` below).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Any

import numpy as np

from .core import (Branch, GeometryError, Interface, MetricField, SignatureError,
                   _check_signature, minkowski_matrix, min_time_growth, uniform_ball)

__all__ = [
    "MetricSpec",
    "FieldValidation",
    "make_metric",
    "validate_field",
    "minkowski_field",
    "conformal_field",
    "rosen_wave_field",
    "holder_kink_field",
    "thin_shell_field",
    "rosen_chart_to_null",
    "rosen_null_christoffel",
    "rosen_wave_geodesic",
    "KINDS",
]

KINDS = ("minkowski", "conformal", "rosen_wave", "holder_kink", "thin_shell")
_SQRT2 = np.sqrt(2.0)


def _eta_batch(x, n):
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(minkowski_matrix(n), x.shape[:-1] + (n, n)).copy()


def minkowski_field(n: int = 4, radius: float = 1.0) -> MetricField:
    def metric(x):
        return _eta_batch(x, n)

    def derivative(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (n, n, n))

    return MetricField(n, [Branch(metric, derivative)], lipschitz_L=0.0,
                       domain_radius=radius, name="minkowski")


def conformal_field(eps: float = 0.1, n: int = 3, radius: float | None = None) -> MetricField:
    """``g = (1 + eps x1) eta``; the chart keeps the factor above 1/2."""
    if radius is None:
        radius = 1.0 if eps == 0 else min(1.0, 0.4 / abs(eps))
    if eps != 0 and radius >= 0.5 / abs(eps):
        raise SignatureError(f"conformal factor drops to 1/2 inside radius {radius}")
    eta = minkowski_matrix(n)

    def metric(x):
        x = np.asarray(x, dtype=float)
        return (1.0 + eps * x[..., 1])[..., None, None] * eta

    def derivative(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (n, n, n))
        out[..., 1, :, :] = eps * eta
        return out

    return MetricField(n, [Branch(metric, derivative)], lipschitz_L=abs(eps),
                       domain_radius=radius, name=f"conformal(eps={eps})")


def rosen_chart_to_null(X):
    """Chart coordinates ``(t, z, x, y)`` to Rosen coordinates ``(u, v, x, y)``.

    The map is a linear involution, so it also converts back.
    """
    X = np.asarray(X, dtype=float)
    out = X.copy()
    out[..., 0] = (X[..., 0] + X[..., 1]) / _SQRT2
    out[..., 1] = (X[..., 0] - X[..., 1]) / _SQRT2
    return out


def rosen_wave_field(radius: float = 0.4) -> MetricField:
    """Impulsive plane wave ``2 du dv - (1 + u+)^2 dx^2 - (1 - u+)^2 dy^2``.

    Expressed in chart coordinates ``t = (u + v)/sqrt2``, ``z = (u - v)/sqrt2``,
    so that the ``u < 0`` branch is exactly Minkowski. Smooth off ``{u = 0}``.
    The y-coefficient widens the light cone as ``u`` grows; the time-growth
    normalization needs ``1 - u >= 1/sqrt(3)``, hence the default radius 0.4.
    """
    if not 0 < radius < 1:
        raise SignatureError("the Rosen chart needs radius < 1 (the y-coefficient vanishes at u = 1)")
    n = 4

    def u_of(x):
        return (x[..., 0] + x[..., 1]) / _SQRT2

    def minus_metric(x):
        return _eta_batch(x, n)

    def minus_derivative(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (n, n, n))

    def plus_metric(x):
        x = np.asarray(x, dtype=float)
        u = u_of(x)
        g = _eta_batch(x, n)
        g[..., 2, 2] = -(1.0 + u) ** 2
        g[..., 3, 3] = -(1.0 - u) ** 2
        return g

    def plus_derivative(x):
        x = np.asarray(x, dtype=float)
        u = u_of(x)
        out = np.zeros(x.shape[:-1] + (n, n, n))
        dxx = -2.0 * (1.0 + u) / _SQRT2
        dyy = 2.0 * (1.0 - u) / _SQRT2
        for l in (0, 1):
            out[..., l, 2, 2] = dxx
            out[..., l, 3, 3] = dyy
        return out

    wave = Interface.hyperplane(np.array([1.0, 1.0, 0.0, 0.0]) / _SQRT2, minus=0, plus=1)
    return MetricField(n, [Branch(minus_metric, minus_derivative),
                           Branch(plus_metric, plus_derivative)], [wave],
                       lipschitz_L=2.0 * (1.0 + radius), domain_radius=radius,
                       name="rosen_wave")


def holder_kink_field(alpha: float = 1.0, a: float = 0.3, n: int = 3,
                      radius: float = 1.0) -> MetricField:
    """``g = dt^2 - (1 + a |x1|^alpha) dx1^2 - sum dx_i^2``.

    Lipschitz for ``alpha = 1`` (constant ``a``), only ``alpha``-Hölder below;
    ``alpha`` slightly below 1 stands in for a C^1-type metric with
    non-unique geodesics. The interface ``{x1 = 0}`` separates two smooth
    branches.
    """
    if not 0 < alpha <= 1:
        raise GeometryError(f"alpha must lie in (0, 1], got {alpha}")
    if a < 0:
        raise GeometryError("a must be nonnegative")

    def make(sign):
        def coeff(x1):
            y = sign * x1
            return y if alpha == 1.0 else np.abs(y) ** alpha

        def dcoeff(x1):
            y = sign * x1
            if alpha == 1.0:
                return np.full_like(y, sign)
            with np.errstate(divide="ignore"):
                return sign * alpha * np.sign(y) * np.abs(y) ** (alpha - 1.0)

        def metric(x):
            x = np.asarray(x, dtype=float)
            g = _eta_batch(x, n)
            g[..., 1, 1] = -(1.0 + a * coeff(x[..., 1]))
            return g

        def derivative(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape[:-1] + (n, n, n))
            out[..., 1, 1, 1] = -a * dcoeff(x[..., 1])
            return out

        return Branch(metric, derivative)

    e1 = np.zeros(n)
    e1[1] = 1.0
    L = a if alpha == 1.0 else np.inf
    return MetricField(n, [make(-1.0), make(1.0)], [Interface.hyperplane(e1)],
                       lipschitz_L=L, domain_radius=radius, holder_alpha=alpha,
                       holder_constant=a, name=f"holder_kink(alpha={alpha}, a={a})")


def thin_shell_field(k_minus=None, k_plus=None, n: int = 2, radius: float = 0.5,
                     kink: float = 0.5) -> MetricField:
    """Two branches ``eta + x1 K_minus`` (x1 < 0) and ``eta + x1 K_plus`` (x1 > 0).

    The metric is continuous across the shell ``{x1 = 0}`` while its normal
    derivative jumps. By default ``K_-/+ = -/+ kink dt^2``, which gives the
    symmetric profile ``g_tt = 1 + kink |x1|``; a particle at rest on the
    shell sees equal and opposite one-sided accelerations toward it.
    """
    E = np.zeros((n, n))
    E[0, 0] = 1.0
    km = -kink * E if k_minus is None else np.asarray(k_minus, dtype=float)
    kp = kink * E if k_plus is None else np.asarray(k_plus, dtype=float)
    for k in (km, kp):
        if k.shape != (n, n) or np.max(np.abs(k - k.T)) > 0:
            raise GeometryError("shell jump matrices must be symmetric n x n")
    eta = minkowski_matrix(n)

    def make(K):
        def metric(x):
            x = np.asarray(x, dtype=float)
            return eta + x[..., 1][..., None, None] * K

        def derivative(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape[:-1] + (n, n, n))
            out[..., 1, :, :] = K
            return out

        return Branch(metric, derivative)

    e1 = np.zeros(n)
    e1[1] = 1.0
    L = float(max(np.max(np.abs(np.linalg.eigvalsh(km))), np.max(np.abs(np.linalg.eigvalsh(kp)))))
    return MetricField(n, [make(km), make(kp)], [Interface.hyperplane(e1)],
                       lipschitz_L=L, domain_radius=radius, name="thin_shell")


# -- closed forms for the Rosen wave ------------------------------------------


def rosen_null_christoffel(u: float) -> np.ndarray:
    """Christoffel symbols of the Rosen metric in ``(u, v, x, y)`` coordinates.

    With ``A = 1 + u+`` and ``B = 1 - u+``: ``Gamma^x_ux = A'/A``,
    ``Gamma^y_uy = B'/B``, ``Gamma^v_xx = A A'``, ``Gamma^v_yy = B B'``.
    """
    gam = np.zeros((4, 4, 4))
    if u <= 0:
        return gam
    A, dA = 1.0 + u, 1.0
    B, dB = 1.0 - u, -1.0
    gam[2, 0, 2] = gam[2, 2, 0] = dA / A
    gam[3, 0, 3] = gam[3, 3, 0] = dB / B
    gam[1, 2, 2] = A * dA
    gam[1, 3, 3] = B * dB
    return gam


def _prim_A(u):
    u = np.asarray(u, dtype=float)
    return np.where(u > 0, u / (1.0 + np.maximum(u, 0)), u)


def _prim_B(u):
    u = np.asarray(u, dtype=float)
    return np.where(u > 0, u / (1.0 - np.clip(u, 0, 0.999999)), u)


def rosen_wave_geodesic(x0, v0, tau):
    """Closed-form Rosen geodesic in chart coordinates.

    ``u`` is affine in the parameter, the momenta ``A^2 x'`` and ``B^2 y'`` and
    the energy ``2 u'v' - A^2 x'^2 - B^2 y'^2`` are conserved; integrating each
    branch and matching position and velocity on ``{u = 0}`` gives
    ``x = x0 + (p_x/p_u) (F_A(u) - F_A(u0))`` with ``F_A(u) = u/(1 + u)`` for
    ``u > 0`` and ``u`` otherwise (similarly for ``y`` and ``v``).

    Returns ``(X, V)`` of shapes ``(len(tau), 4)``.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    U0 = rosen_chart_to_null(x0)
    W0 = rosen_chart_to_null(v0)
    u0, vv0, xx0, yy0 = U0
    pu, wv, wx, wy = W0
    A0 = 1.0 + max(u0, 0.0)
    B0 = 1.0 - max(u0, 0.0)
    px, py = A0 ** 2 * wx, B0 ** 2 * wy
    E = 2 * pu * wv - A0 ** 2 * wx ** 2 - B0 ** 2 * wy ** 2
    u = u0 + pu * tau
    A = 1.0 + np.maximum(u, 0.0)
    B = 1.0 - np.maximum(u, 0.0)
    if pu != 0:
        fa = _prim_A(u) - _prim_A(u0)
        fb = _prim_B(u) - _prim_B(u0)
        x = xx0 + px / pu * fa
        y = yy0 + py / pu * fb
        v = vv0 + E * tau / (2 * pu) + px ** 2 / (2 * pu ** 2) * fa + py ** 2 / (2 * pu ** 2) * fb
        dv = (E + px ** 2 / A ** 2 + py ** 2 / B ** 2) / (2 * pu)
    else:
        dA = 1.0 if u0 > 0 else 0.0
        x = xx0 + wx * tau
        y = yy0 + wy * tau
        acc = -(A0 * dA * wx ** 2 - B0 * dA * wy ** 2)
        v = vv0 + wv * tau + 0.5 * acc * tau ** 2
        dv = wv + acc * tau
    U = np.stack([u, v, x, y], axis=-1)
    W = np.stack([np.full_like(tau, pu), dv, px / A ** 2, py / B ** 2], axis=-1)
    return rosen_chart_to_null(U), rosen_chart_to_null(W)


# -- specs and validation -----------------------------------------------------


@dataclass
class MetricSpec:
    """Declarative description of a zoo field (parsed from experiment configs)."""

    kind: str
    params: dict[str, Any] = dc_field(default_factory=dict)
    dim: int | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "MetricSpec":
        return cls(data["kind"], dict(data.get("params", {})), data.get("dim"))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "dim": self.dim}


@dataclass
class FieldValidation:
    signature_ok: bool
    continuity_residual: float
    lipschitz_violations: int
    time_growth: float
    worst_point: Any = None

    @property
    def ok(self) -> bool:
        return (self.signature_ok and self.continuity_residual <= 1e-12
                and self.lipschitz_violations == 0 and self.time_growth >= 0.5)


def _project_to_interface(itf: Interface, x, iters: int = 5):
    for _ in range(iters):
        s = np.asarray(itf.level(x))
        gr = itf.gradient(x)
        x = x - (s / np.sum(gr * gr, axis=-1))[..., None] * gr
    return x


def validate_field(field: MetricField, samples: int = 1000, seed: int = 0) -> FieldValidation:
    """Sample the core invariants: signature, interface continuity, Lipschitz bound
    and the time-growth normalization."""
    rng = np.random.default_rng(seed)
    n, R = field.dim, field.domain_radius
    pts = uniform_ball(rng, samples, n, R)
    g = field.metric(pts)
    ev = np.linalg.eigvalsh(g)
    good = (np.sum(ev > 1e-10, axis=1) == 1) & (np.sum(ev < -1e-10, axis=1) == n - 1)
    worst = None if good.all() else pts[np.argmin(good)]
    residual = 0.0
    for itf in field.interfaces:
        on = _project_to_interface(itf, uniform_ball(rng, samples, n, R))
        on = on[np.linalg.norm(on, axis=1) < R]
        if len(on):
            gm = field.metric(on, itf.minus)
            gp = field.metric(on, itf.plus)
            residual = max(residual, float(np.max(np.abs(gm - gp))))
    lip_viol = 0
    if np.isfinite(field.lipschitz_L):
        x = uniform_ball(rng, samples, n, R)
        y = uniform_ball(rng, samples, n, R)
        op = np.max(np.abs(np.linalg.eigvalsh(field.metric(x) - field.metric(y))), axis=1)
        lip_viol = int(np.sum(op > field.lipschitz_L * np.linalg.norm(x - y, axis=1) + 1e-9))
    growth = min_time_growth(field, points=min(samples, 500), seed=seed)
    return FieldValidation(bool(good.all()), residual, lip_viol, growth, worst)


def make_metric(spec: MetricSpec | dict, validate: bool = True) -> MetricField:
    """Build a zoo field from its spec; raises on signature loss."""
    if isinstance(spec, dict):
        spec = MetricSpec.from_dict(spec)
    p = dict(spec.params)
    kind = spec.kind
    if kind == "minkowski":
        fld = minkowski_field(spec.dim or 4, p.get("radius", 1.0))
    elif kind == "conformal":
        fld = conformal_field(p.get("eps", 0.1), spec.dim or 3, p.get("radius"))
    elif kind == "rosen_wave":
        if spec.dim not in (None, 4):
            raise GeometryError("rosen_wave is four-dimensional")
        fld = rosen_wave_field(p.get("radius", 0.4))
    elif kind == "holder_kink":
        fld = holder_kink_field(p.get("alpha", 1.0), p.get("a", 0.3), spec.dim or 3,
                                p.get("radius", 1.0))
    elif kind == "thin_shell":
        fld = thin_shell_field(p.get("k_minus"), p.get("k_plus"), spec.dim or 2,
                               p.get("radius", 0.5), p.get("kink", 0.5))
    else:
        raise GeometryError(f"unknown metric kind {kind!r}; expected one of {KINDS}")
    if validate:
        rep = validate_field(fld)
        if not rep.signature_ok:
            raise SignatureError(f"{fld.name}: signature lost on the chart", rep.worst_point)
        if rep.continuity_residual > 1e-12:
            raise GeometryError(f"{fld.name}: metric discontinuous across an interface "
                                f"(residual {rep.continuity_residual:.2e})")
        if rep.time_growth < 0.5:
            raise GeometryError(f"{fld.name}: chart violates the time-growth normalization "
                                f"({rep.time_growth:.3f} < 1/2)")
    return fld
