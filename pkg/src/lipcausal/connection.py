"""
Christoffel symbols and the essential convex hull.

Christoffel symbols come from the Koszul formula on each smooth branch.
At points of the singular set (interfaces) a single value does not exist;
the Filippov right-hand side is instead the essential convex hull of nearby
values, approximated here by finite sampling in a phase-space ball.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import GeometryError, MetricField, uniform_ball

__all__ = [
    "SingularSetError",
    "DegenerateNeighborhoodError",
    "ChristoffelValue",
    "HullSample",
    "christoffel_tensor",
    "christoffel_at",
    "christoffel_contract",
    "christoffel_bound",
    "sample_essential_hull",
    "hull_membership_margin",
    "min_norm_point",
    "hull_margins",
    "DEFAULT_HULL_DELTAS",
]

DEFAULT_HULL_DELTAS = (1e-2, 1e-3, 1e-4)


class SingularSetError(GeometryError):
    """Point lies on (or within the margin of) an interface."""


class DegenerateNeighborhoodError(GeometryError):
    """Hull sampling rejected almost every candidate point."""


@dataclass(frozen=True)
class ChristoffelValue:
    """``gamma[k, i, j] = Gamma^k_{ij}`` at ``at_point`` on branch ``branch_id``."""

    gamma: np.ndarray
    at_point: np.ndarray
    branch_id: int

    def __call__(self, v, w=None) -> np.ndarray:
        w = v if w is None else w
        return np.einsum("kij,i,j->k", self.gamma, v, w)

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.gamma - self.gamma.swapaxes(1, 2))))


def christoffel_tensor(field: MetricField, x, branch=None) -> np.ndarray:
    """Koszul Christoffel symbols, batched over leading axes of ``x``.

    ``Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)``.
    """
    g = field.metric(x, branch)
    dg = field.dmetric(x, branch)                 # [..., l, i, j] = d_l g_ij
    t = np.moveaxis(dg, -1, -3)                   # [..., l, i, j] = d_i g_jl
    lower = 0.5 * (t + t.swapaxes(-1, -2) - dg)
    ginv = np.linalg.inv(g)
    return np.einsum("...kl,...lij->...kij", ginv, lower)


def christoffel_contract(field: MetricField, x, v, branch=None) -> np.ndarray:
    """``Gamma_x(v, v)`` without forming the full tensor (batched)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    g = field.metric(x, branch)
    dg = field.dmetric(x, branch)
    dv = np.einsum("...i,...ijl->...jl", v, dg)       # directional derivative D_v g
    b = 2.0 * np.einsum("...jl,...j->...l", dv, v) - np.einsum("...lij,...i,...j->...l", dg, v, v)
    return 0.5 * np.linalg.solve(g, b[..., None])[..., 0]


def christoffel_at(field: MetricField, x) -> ChristoffelValue:
    """Christoffel symbols at a point strictly inside one smooth branch."""
    x = np.asarray(x, dtype=float)
    if field.interfaces and field.interface_distance(x) <= field.interface_margin:
        raise SingularSetError(
            f"{x} is on the singular set of {field.name}; use the hull machinery")
    g = field.metric(x)
    if abs(np.linalg.det(g)) < 1e-300:
        raise GeometryError(f"singular metric matrix at {x}")
    return ChristoffelValue(christoffel_tensor(field, x), x.copy(), field.branch_at(x))


def christoffel_bound(field: MetricField, samples: int = 10_000, seed: int = 0) -> float:
    """Constant ``C2`` with ``|Gamma_x(v, v)| <= C2 |v|^2`` almost everywhere.

    Each partial derivative of ``g`` is bounded by ``L`` as a bilinear form on
    unit vectors, so the Koszul combination is bounded by ``3 L |v|^2`` and
    ``C2 = 3/2 L sup |g^{-1}|``. The inverse norm is sampled over the chart.
    """
    if field.lipschitz_L == 0.0:
        return 0.0
    return 1.5 * field.lipschitz_L * field.inverse_norm_bound(samples, seed)


def _phase(state):
    if hasattr(state, "x") and hasattr(state, "v"):
        return np.asarray(state.x, dtype=float), np.asarray(state.v, dtype=float)
    x, v = state
    return np.asarray(x, dtype=float), np.asarray(v, dtype=float)


@dataclass(frozen=True)
class HullSample:
    """Finite sample of Christoffel values ``Gamma_x(w, w)`` near a phase point."""

    center_x: np.ndarray
    center_v: np.ndarray
    delta: float
    values: np.ndarray          # (count, n)
    points: np.ndarray          # (count, 2n) sampled (x, w)

    @property
    def count(self) -> int:
        return self.values.shape[0]

    def diameter(self) -> float:
        diff = self.values[:, None, :] - self.values[None, :, :]
        return float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))


def sample_essential_hull(field: MetricField, state, delta: float, count: int = 64,
                          rng_seed: int = 0) -> HullSample:
    """Sample ``count`` phase points uniformly in the ``delta``-ball around ``state``.

    Points within ``field.interface_margin`` of an interface are rejected, as
    the essential hull ignores null sets.
    """
    x0, v0 = _phase(state)
    n = field.dim
    if not delta > 0:
        raise GeometryError("delta must be positive")
    if count < n + 2:
        raise GeometryError(f"count must be at least n + 2 = {n + 2}")
    rng = np.random.default_rng(rng_seed)
    center = np.concatenate([x0, v0])
    accepted = []
    drawn = 0
    have = 0
    while have < count:
        batch = max(2 * (count - have), 16)
        pts = uniform_ball(rng, batch, 2 * n, delta, center)
        drawn += batch
        if field.interfaces:
            pts = pts[field.interface_distance(pts[:, :n]) > field.interface_margin]
        accepted.append(pts)
        have += len(pts)
        if drawn >= 100 * count and have < 0.01 * drawn:
            raise DegenerateNeighborhoodError(
                f"rejected {drawn - have} of {drawn} samples near {x0}")
    pts = np.vstack(accepted)[:count]
    values = christoffel_contract(field, pts[:, :n], pts[:, n:])
    return HullSample(x0.copy(), v0.copy(), float(delta), values, pts)


def min_norm_point(points, tol: float = 1e-9, max_iter: int = 500):
    """Minimum-norm point of ``conv(points)`` (Wolfe's algorithm).

    Frank-Wolfe vertex selection combined with exact affine minimization over
    the active set. Returns ``(distance, weights)`` where ``weights`` are the
    convex weights of the minimizing point.
    """
    q = np.asarray(points, dtype=float)
    m = q.shape[0]
    norms2 = np.einsum("ij,ij->i", q, q)
    scale = max(1.0, float(np.sqrt(norms2.max())))
    abs_tol = tol * scale
    active = [int(np.argmin(norms2))]
    lam = np.array([1.0])
    x = q[active[0]].copy()
    for _ in range(max_iter):
        xn = float(np.sqrt(x @ x))
        if xn <= abs_tol:
            break
        dots = q @ x
        j = int(np.argmin(dots))
        if x @ x - dots[j] <= abs_tol * xn or j in active:
            break
        active.append(j)
        lam = np.append(lam, 0.0)
        while True:
            p = q[active]
            k = len(active)
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = p @ p.T
            kkt[:k, k] = kkt[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            mu = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
            if np.all(mu > 1e-14):
                lam = mu / mu.sum()
                break
            move = lam - mu
            mask = (mu <= 1e-14) & (move > 0)
            theta = float(np.min(lam[mask] / move[mask])) if mask.any() else 1.0
            lam = lam + theta * (mu - lam)
            keep = lam > 1e-14
            if not keep.any():
                keep[np.argmax(lam)] = True
            active = [a for a, kp in zip(active, keep) if kp]
            lam = lam[keep] / lam[keep].sum()
        x = lam @ q[active]
    weights = np.zeros(m)
    weights[active] = lam
    return float(np.sqrt(x @ x)), weights


def hull_membership_margin(sample, a, tol: float = 1e-9, max_iter: int = 500) -> float:
    """Euclidean distance from ``a`` to the convex hull of the sample values (0 inside).

    ``sample`` may be a :class:`HullSample` or an array of values.
    """
    values = sample.values if isinstance(sample, HullSample) else np.atleast_2d(sample)
    if values.shape[0] < 1:
        raise GeometryError("empty hull sample")
    a = np.asarray(a, dtype=float)
    dist, _ = min_norm_point(values - a, tol, max_iter)
    return 0.0 if dist <= tol * max(1.0, float(np.max(np.abs(values))), float(np.max(np.abs(a)))) else dist


def hull_margins(field: MetricField, state, target, deltas: Sequence[float] = DEFAULT_HULL_DELTAS,
                 count: int = 64, seed: int = 0) -> list[tuple[float, float]]:
    """Membership margins of ``target`` against sampled hulls at decreasing ``delta``.

    ``target`` is compared with values ``Gamma_x(w, w)``, i.e. pass ``-gamma''``.
    """
    out = []
    for i, d in enumerate(deltas):
        hs = sample_essential_hull(field, state, d, count, seed + i)
        out.append((float(d), hull_membership_margin(hs, target)))
    return out
