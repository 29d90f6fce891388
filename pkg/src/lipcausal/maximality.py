"""
Lorentzian length and direct search for maximal causal curves.

Curves between fixed endpoints are discretized as polygons over a fixed
parameter grid; the length of a polygon evaluates the metric at segment
midpoints. :func:`maximize_causal_curve` performs projected gradient ascent
over the interior nodes, with a causality retraction that shrinks the
spatial displacement of spacelike segments. :func:`shoot_geodesic` solves
the two-point problem for the geodesic inclusion, giving an independent
route to the same curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .core import NULL_TOL, GeometryError, MetricField, lorentz_product
from .curves import NotCausalError, SampledCurve
from .filippov import GeodesicTrajectory, integrate_geodesic

__all__ = [
    "NotCausallyRelatedError",
    "ShootingError",
    "MaximizationResult",
    "lorentzian_length",
    "polygon_length",
    "maximize_causal_curve",
    "causality_projection",
    "shoot_geodesic",
    "local_maximality_probe",
    "smooth_length",
]


class NotCausallyRelatedError(GeometryError):
    """No causal polygonal connector between the endpoints was found."""


class ShootingError(GeometryError):
    """Newton iteration on the endpoint map did not converge."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


def _segment_q(field: MetricField, nodes: np.ndarray) -> np.ndarray:
    d = np.diff(nodes, axis=0)
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    return lorentz_product(field.metric(mid), d, d)


def polygon_length(field: MetricField, nodes: np.ndarray) -> float:
    """Sum of ``sqrt(g_mid(d, d))`` over segments ``d`` (spacelike parts clipped)."""
    return float(np.sum(np.sqrt(np.maximum(_segment_q(field, nodes), 0.0))))


def lorentzian_length(curve: SampledCurve, field: MetricField, null_tol: float = NULL_TOL) -> float:
    """Lorentzian length of a sampled curve with midpoint metric per segment.

    Raises :class:`~lipcausal.curves.NotCausalError` if a segment is
    spacelike beyond ``null_tol``.
    """
    curve.check_causal(field, null_tol)
    return polygon_length(field, curve.points)


@dataclass
class MaximizationResult:
    curve: SampledCurve
    length: float
    iterations: int
    converged: bool
    first_order_residual: float
    regime: str = "length"                  # "length" or "surrogate" (near-null)
    history: list = dc_field(default_factory=list, repr=False)
    stop_reason: str = ""                   # "gradient", "stall", "no_ascent" or "max_iter"

    def to_dict(self) -> dict:
        return {"length": self.length, "iterations": self.iterations,
                "converged": self.converged, "first_order_residual": self.first_order_residual,
                "regime": self.regime, "segments": len(self.curve) - 1,
                "stop_reason": self.stop_reason}


# -- causality retraction -------------------------------------------------------------


def _shrink_factor(g, d, margin):
    """Largest ``lam`` in [0, 1] with ``g((dt, lam dx), (dt, lam dx)) >= margin``."""
    dt, dx = d[0], d[1:]
    A = g[0, 0] * dt * dt
    B = dt * (g[0, 1:] @ dx)
    C = dx @ g[1:, 1:] @ dx
    if A < margin:
        return None
    if C == 0:
        return 1.0 if A + 2 * B >= margin else max(0.0, (margin - A) / (2 * B))
    # roots of C lam^2 + 2 B lam + (A - margin) = 0; C < 0 in a Lorentzian chart
    disc = B * B - C * (A - margin)
    if disc < 0:
        return 1.0
    r = (-B - np.sqrt(disc)) / C if C < 0 else (-B + np.sqrt(disc)) / C
    return float(np.clip(r, 0.0, 1.0))


def causality_projection(field: MetricField, nodes: np.ndarray, null_tol: float = NULL_TOL,
                         sweeps: int = 50) -> tuple[np.ndarray, bool]:
    """Make every segment causal by shrinking spatial displacements.

    A segment offends when ``g_mid(d, d) < -null_tol max(1, |d|^2)``; its
    spatial displacement is scaled by the largest factor restoring
    ``g_mid(d, d) >= 0`` (a positive margin would make lightlike endpoint
    pairs infeasible). The correction is split equally
    between the two nodes (or given entirely to the free node next to a fixed
    endpoint). Repeats up to ``sweeps`` times, since neighbours are affected.

    Returns ``(nodes, ok)``.
    """
    z = np.array(nodes, dtype=float)
    m = z.shape[0] - 1
    for _ in range(sweeps):
        d = np.diff(z, axis=0)
        scale = np.maximum(1.0, np.sum(d * d, axis=1))
        margin = np.zeros_like(scale)
        q = _segment_q(field, z)
        bad = np.nonzero(q < -null_tol * scale)[0]
        if bad.size == 0:
            return z, True
        g = field.metric(0.5 * (z[1:] + z[:-1]))
        for k in bad:
            dk = z[k + 1] - z[k]
            lam = _shrink_factor(g[k], dk, margin[k])
            if lam is None:
                return z, False
            corr = np.zeros_like(dk)
            corr[1:] = (lam - 1.0) * dk[1:]
            if k == 0 and k + 1 == m:
                return z, False
            if k == 0:
                z[k + 1] += corr
            elif k + 1 == m:
                z[k] -= corr
            else:
                z[k] -= 0.5 * corr
                z[k + 1] += 0.5 * corr
    d = np.diff(z, axis=0)
    ok = bool(np.all(_segment_q(field, z) >= -null_tol * np.maximum(1.0, np.sum(d * d, axis=1))))
    return z, ok


# -- optimizer ---------------------------------------------------------------------------


def _segment_values(field, nodes, surrogate, h):
    q = _segment_q(field, nodes)
    if surrogate:
        return q / h
    return np.sqrt(np.maximum(q, 0.0))


def _fd_gradient(field, nodes, surrogate, h, eps):
    """Finite-difference gradient w.r.t. interior nodes using a 2-colouring.

    Segment ``k`` joins nodes ``k`` and ``k + 1``, so perturbing all nodes of
    one parity at once leaves every segment with at most one moved end.
    """
    m = nodes.shape[0] - 1
    n = nodes.shape[1]
    grad = np.zeros((m - 1, n))
    idx_all = np.arange(1, m)
    for colour in (0, 1):
        idx = idx_all[idx_all % 2 == colour]
        if idx.size == 0:
            continue
        for c in range(n):
            zp = nodes.copy()
            zm = nodes.copy()
            zp[idx, c] += eps
            zm[idx, c] -= eps
            sp = _segment_values(field, zp, surrogate, h)
            sm = _segment_values(field, zm, surrogate, h)
            diff = sp - sm
            grad[idx - 1, c] = (diff[idx - 1] + diff[idx]) / (2 * eps)
    return grad


def _laplacian_solve(rhs):
    """Solve ``tridiag(-1, 2, -1) X = rhs`` column-wise (Thomas algorithm via scipy)."""
    from scipy.linalg import solve_banded

    k = rhs.shape[0]
    ab = np.zeros((3, k))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0
    ab[2, :-1] = -1.0
    return solve_banded((1, 1), ab, rhs)


def _initial_connector(field, x, y, m, null_tol):
    t = np.linspace(0.0, 1.0, m + 1)
    nodes = x + t[:, None] * (y - x)
    nodes, ok = causality_projection(field, nodes, null_tol)
    if not ok:
        raise NotCausallyRelatedError(
            f"no causal polygonal connector found from {x} to {y}")
    return nodes


def maximize_causal_curve(field: MetricField, x, y, segments: int = 32, *,
                          max_iter: int = 10_000, gtol: float = 1e-8, ftol: float = 1e-13,
                          fd_step: float = 1e-6, null_tol: float = NULL_TOL,
                          window: int = 200, window_ftol: float = 1e-8,
                          init_nodes: Optional[np.ndarray] = None,
                          surrogate_threshold: float = 1e-6) -> MaximizationResult:
    """Maximize the polygon length between ``x`` and ``y`` over interior nodes.

    Projected gradient ascent with a finite-difference gradient, a
    second-difference (discrete Laplacian) preconditioner, Armijo backtracking
    (constant 1e-4, factor 1/2, first trial displacement at most 1e-2 of the
    chart radius) and the causality retraction of
    :func:`causality_projection`. Near-null curves (length below
    ``surrogate_threshold``) switch to the energy surrogate ``sum g(d, d)/h``.

    Stops when the projected gradient residual is at most ``gtol``
    (``stop_reason="gradient"``); when five consecutive steps gain at most
    ``ftol |F|`` or the last ``window`` steps together gain at most
    ``window_ftol |F|`` (``"stall"``; typical where the metric has a kink and
    the gradient does not vanish at the maximum); when no ascent step is
    accepted (``"no_ascent"``); or at ``max_iter`` (``"max_iter"``, not
    converged).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (field.dim,) or y.shape != (field.dim,):
        raise GeometryError("endpoints must be points of the chart")
    m = int(segments)
    if m < 2:
        raise GeometryError("need at least two segments")
    h = 1.0 / m
    if init_nodes is None:
        nodes = _initial_connector(field, x, y, m, null_tol)
    else:
        nodes = np.array(init_nodes, dtype=float)
        nodes[0], nodes[-1] = x, y
        nodes, ok = causality_projection(field, nodes, null_tol)
        if not ok:
            raise NotCausallyRelatedError("initial polygon cannot be made causal")
    R = field.domain_radius
    length = polygon_length(field, nodes)
    surrogate = length < surrogate_threshold
    F = float(np.sum(_segment_values(field, nodes, surrogate, h)))
    history = [length]
    objective = [F]
    converged = False
    reason = "max_iter"
    residual = np.inf
    it = 0
    stall = 0
    for it in range(1, max_iter + 1):
        grad = _fd_gradient(field, nodes, surrogate, h, fd_step)
        residual = _projected_residual(field, nodes, grad, null_tol)
        if residual <= gtol:
            converged, reason = True, "gradient"
            break
        ell = max(length / m, 1e-12)
        d = ell * _laplacian_solve(grad)
        if surrogate:
            d = d * h / max(ell, h)
        alpha = min(1.0, 0.01 * R / max(float(np.max(np.abs(d))), 1e-300))
        accepted = False
        while alpha > 1e-14:
            trial = nodes.copy()
            trial[1:-1] += alpha * d
            trial, ok = causality_projection(field, trial, null_tol)
            if ok:
                Ft = float(np.sum(_segment_values(field, trial, surrogate, h)))
                if Ft >= F + 1e-4 * float(np.sum(grad * (trial[1:-1] - nodes[1:-1]))) and Ft >= F:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            converged, reason = True, "no_ascent"   # no ascent possible at working precision
            break
        gain = Ft - F
        nodes, F = trial, Ft
        length = polygon_length(field, nodes)
        history.append(length)
        if not surrogate and length < surrogate_threshold:
            surrogate = True
            F = float(np.sum(_segment_values(field, nodes, surrogate, h)))
            objective = []
        objective.append(F)
        stall = stall + 1 if gain <= ftol * max(1.0, abs(F)) else 0
        slow = (len(objective) > window
                and objective[-1] - objective[-1 - window] <= window_ftol * max(1.0, abs(F)))
        if stall >= 5 or slow:
            converged, reason = True, "stall"
            break
    curve = SampledCurve(np.linspace(0.0, 1.0, m + 1), nodes)
    return MaximizationResult(curve, polygon_length(field, nodes), it, converged,
                              float(residual), "surrogate" if surrogate else "length", history,
                              reason)


def _projected_residual(field, nodes, grad, null_tol, t=1e-6):
    """``|P(z + t grad) - z| / t`` with ``P`` the causality retraction."""
    gmax = max(float(np.max(np.abs(grad))), 1e-300)
    tt = t / max(1.0, gmax)
    trial = nodes.copy()
    trial[1:-1] += tt * grad
    trial, ok = causality_projection(field, trial, null_tol)
    if not ok:
        return float(np.linalg.norm(grad))
    return float(np.linalg.norm(trial[1:-1] - nodes[1:-1]) / tt)


# -- shooting ------------------------------------------------------------------------------


def shoot_geodesic(field: MetricField, x, y, v0_guess=None, *, step: float = 1e-3,
                   tol: float = 1e-8, max_iter: int = 100, fd: float = 1e-6,
                   return_info: bool = False):
    """Solve ``gamma(0) = x``, ``gamma(1) = y`` for the geodesic inclusion.

    Newton iteration on ``v0 -> gamma_{v0}(1) - y`` with a forward-difference
    Jacobian (each column one integration) and step halving when the
    residual grows. Raises :class:`ShootingError` with the residual history
    when ``max_iter`` is exhausted.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = (y - x).copy() if v0_guess is None else np.array(v0_guess, dtype=float)
    g0 = field.metric(x)
    if lorentz_product(g0, v, v) < -NULL_TOL * max(1.0, float(v @ v)):
        raise GeometryError("initial velocity guess must be timelike or null at x")
    n = x.size

    def endpoint(vv):
        tr = integrate_geodesic(field, (x, vv), 1.0, step)
        if tr.truncated:
            return tr, np.full(n, np.inf)
        return tr, tr.xs[-1] - y

    history = []
    traj, r = endpoint(v)
    for it in range(1, max_iter + 1):
        res = float(np.linalg.norm(r))
        history.append(res)
        if res <= tol:
            info = {"iterations": it, "residual": res, "history": history, "v0": v}
            return (traj, info) if return_info else traj
        J = np.empty((n, n))
        hstep = fd * max(1.0, float(np.linalg.norm(v)))
        for c in range(n):
            vp = v.copy()
            vp[c] += hstep
            _, rp = endpoint(vp)
            J[:, c] = (rp - r) / hstep
        if not np.all(np.isfinite(J)):
            raise ShootingError("endpoint map left the chart while differentiating", history)
        dv = np.linalg.solve(J, -r)
        lam = 1.0
        while True:
            trn, rn = endpoint(v + lam * dv)
            if np.linalg.norm(rn) < res or lam < 1e-6:
                break
            lam *= 0.5
        v = v + lam * dv
        traj, r = trn, rn
    raise ShootingError(f"shooting did not converge in {max_iter} iterations "
                        f"(residual {np.linalg.norm(r):.3e})", history)


# -- local maximality probe ---------------------------------------------------------------


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)


def _quad_points(params):
    a, b = params[:-1], params[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel(), half


def smooth_length(field: MetricField, pos, vel, params, time_min: bool = False):
    """Gauss-Legendre length of a smooth curve given by ``pos``/``vel`` callables.

    Returns ``(length, min_q)`` where ``min_q`` is the smallest value of
    ``g(gamma', gamma')`` at the quadrature points (negative means spacelike);
    with ``time_min`` also the smallest time component of ``gamma'`` (the
    curve is future directed only if it is positive).
    """
    s, half = _quad_points(params)
    v = vel(s)
    q = lorentz_product(field.metric(pos(s)), v, v).reshape(half.size, -1)
    length = float(np.sum(half * (np.sqrt(np.maximum(q, 0.0)) @ _GL_WEIGHTS)))
    if time_min:
        return length, float(np.min(q)), float(np.min(v[:, 0]))
    return length, float(np.min(q))


def _bump(t, c, w):
    r = (t - c) / w
    out = np.zeros_like(t)
    dout = np.zeros_like(t)
    inside = np.abs(r) < 1
    ri = r[inside]
    e = np.exp(1.0 - 1.0 / (1.0 - ri * ri))        # peak value 1 at r = 0
    out[inside] = e
    dout[inside] = e * (-2.0 * ri / (1.0 - ri * ri) ** 2) / w
    return out, dout


def local_maximality_probe(curve: SampledCurve, field: MetricField, trials: int = 1000,
                           amplitude: float = 1e-3, seed: int = 0,
                           null_tol: float = NULL_TOL) -> dict:
    """Random bump perturbations of a curve with fixed endpoints.

    Each trial adds ``a * bump(t) * w`` (``w`` a random unit vector, the bump
    supported inside the parameter range with width between 5% and 25% of
    it, ``a <= amplitude``); ``a`` is halved up to ten times until the
    perturbed curve is future-directed causal. Lengths are computed
    by Gauss-Legendre quadrature on the curve's interpolant so that
    discretization error does not masquerade as improvement.
    """
    rng = np.random.default_rng(seed)
    interp = curve.interpolant()
    deriv = interp.derivative()
    t0, t1 = curve.span
    params = curve.params
    base, _ = smooth_length(field, interp, deriv, params)
    scale = max(1.0, base)
    improving = 0
    skipped = 0
    max_gain = -np.inf
    n = curve.dim
    for _ in range(trials):
        width = (t1 - t0) * rng.uniform(0.05, 0.25)
        c = rng.uniform(t0 + width, t1 - width)
        w = rng.standard_normal(n)
        w /= np.linalg.norm(w)
        a = amplitude
        done = False
        for _ in range(11):
            def pos(s, a=a):
                b, _ = _bump(s, c, width)
                return interp(s) + a * b[:, None] * w

            def vel(s, a=a):
                _, db = _bump(s, c, width)
                return deriv(s) + a * db[:, None] * w

            length, qmin, tmin = smooth_length(field, pos, vel, params, time_min=True)
            if qmin >= -null_tol and tmin > 0:
                done = True
                break
            a *= 0.5
        if not done:
            skipped += 1
            continue
        gain = length - base
        max_gain = max(max_gain, gain)
        if gain > 1e-12 * scale:
            improving += 1
    return {"trials": trials, "improving": improving, "skipped": skipped,
            "max_increase": float(max_gain), "base_length": base, "amplitude": amplitude}


def trajectory_curve(traj: GeodesicTrajectory) -> SampledCurve:
    """Sampled curve with exact velocities from a trajectory."""
    return SampledCurve(traj.taus, traj.xs, traj.vs)
