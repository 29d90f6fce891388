"""
Geodesics as solutions of the Filippov differential inclusion.

Inside a smooth branch the geodesic equation ``x'' = -Gamma_x(v, v)`` is
integrated with classical RK4 at a fixed step. When the position crosses an
interface ``{s_j = 0}`` the crossing time is located by bisection on the step
fraction, and the continuation is chosen by :func:`filippov_select`:

* transversal motion (``d/dtau s_j != 0``) continues into the downstream
  branch with the velocity carried over unchanged;
* tangential motion with both one-sided accelerations pushing toward the
  interface slides along it, using the convex combination
  ``theta a+ + (1 - theta) a-`` that keeps ``s_j'' = 0``;
* tangential motion with both sides pushing away is genuinely ambiguous and
  raises :class:`SlidingAmbiguityError`.

Solutions of the inclusion need not be unique; the integrator returns one
of them and makes no attempt to enumerate the others.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence, Union

import numpy as np

from .connection import (DegenerateNeighborhoodError, christoffel_bound, christoffel_contract,
                         hull_membership_margin, sample_essential_hull)
from .core import NULL_TOL, GeometryError, MetricField, lorentz_product
from .curves import SampledCurve

__all__ = [
    "FilippovState",
    "TrajectoryEvent",
    "Selection",
    "GeodesicTrajectory",
    "HullCheckReport",
    "VelocityBoundReport",
    "SlidingAmbiguityError",
    "InconsistentSlidingError",
    "InterfaceIntersectionError",
    "NotUniformlyTimelikeError",
    "integrate_geodesic",
    "filippov_select",
    "sliding_theta",
    "hull_check",
    "hull_margin_ladder",
    "reparametrize_constant_speed",
    "speed_deviation",
    "lorentzian_speeds",
    "velocity_upper_bound",
    "velocity_upper_bound_check",
    "c11_check",
    "concatenate_geodesics",
    "pointwise_limit_is_geodesic",
    "limit_experiment",
    "REPARAM_TOL",
    "HULL_LADDER",
]

REPARAM_TOL = 1e-8
EVENT_TOL = 1e-12
BISECTION_ITERS = 40
HULL_LADDER = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7)


class SlidingAmbiguityError(GeometryError):
    """Tangential motion at a repulsive interface: several Filippov continuations."""


class InconsistentSlidingError(GeometryError):
    """No ``theta`` in [0, 1] makes the combined acceleration tangent."""


class InterfaceIntersectionError(GeometryError):
    """The trajectory reached an intersection of two interfaces."""


class NotUniformlyTimelikeError(GeometryError):
    """A curve to be reparametrized has (almost) vanishing Lorentzian speed."""


@dataclass(frozen=True)
class FilippovState:
    x: np.ndarray
    v: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        x = np.array(self.x, dtype=float).ravel()
        v = np.array(self.v, dtype=float).ravel()
        if x.shape != v.shape:
            raise GeometryError(f"position and velocity sizes differ: {x.size} vs {v.size}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v)) and np.isfinite(self.tau)):
            raise GeometryError("state has non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "tau", float(self.tau))


@dataclass(frozen=True)
class TrajectoryEvent:
    tau: float
    interface_id: int
    mode: str                       # "crossing" or "sliding"
    branch_before: int
    branch_after: int               # -1 while sliding
    theta: Optional[float] = None

    def to_dict(self) -> dict:
        return {"tau": self.tau, "interface_id": self.interface_id, "mode": self.mode,
                "branch_before": self.branch_before, "branch_after": self.branch_after,
                "theta": self.theta}


@dataclass(frozen=True)
class Selection:
    """Outcome of :func:`filippov_select`."""

    mode: str                       # "crossing" or "sliding"
    interface_id: int
    branch: int                     # downstream branch (-1 when sliding)
    acceleration: np.ndarray
    theta: Optional[float]
    phi_dot: float
    phi_ddot_minus: float
    phi_ddot_plus: float
    hull_margin: Optional[float] = None


def _accel(field: MetricField, x, v, branch) -> np.ndarray:
    return -christoffel_contract(field, x, v, branch)


def _interface_terms(field, j, x, v):
    itf = field.interfaces[j]
    grad = np.asarray(itf.gradient(x), dtype=float)
    curv = float(v @ itf.hess(x) @ v)
    return itf, grad, curv


def sliding_theta(phi_minus: float, phi_plus: float) -> float:
    """Weight on the plus side giving a tangent combined acceleration.

    Solves ``theta phi_plus + (1 - theta) phi_minus = 0``.
    """
    denom = phi_minus - phi_plus
    if denom == 0 or phi_minus * phi_plus > 0:
        raise InconsistentSlidingError(
            f"inconsistent sliding data: s'' = {phi_minus:.3e} (minus), {phi_plus:.3e} (plus)")
    theta = phi_minus / denom
    if not 0.0 <= theta <= 1.0:
        raise InconsistentSlidingError(f"inconsistent sliding data: theta = {theta}")
    return float(theta)


def hull_margin_ladder(field: MetricField, x, v, target, tol: float,
                       deltas: Sequence[float] = HULL_LADDER, count: int = 64,
                       seed: int = 0) -> tuple[float, float]:
    """Margin of ``target`` against sampled hulls at shrinking radii.

    Refinement stops at the first radius with margin ``<= tol``; the margin
    at the last radius tried is returned with that radius. Sampled hulls are
    inner approximations whose error is ``O(delta)`` next to an interface, so
    only the finest attempted level is meaningful.
    """
    margin = np.inf
    used = deltas[0]
    for i, d in enumerate(deltas):
        try:
            hs = sample_essential_hull(field, (x, v), d, count, seed + i)
        except DegenerateNeighborhoodError:
            break
        margin = hull_membership_margin(hs, target)
        used = d
        if margin <= tol:
            break
    return float(margin), float(used)


def filippov_select(field: MetricField, state, interface_id: int = 0,
                    from_branch: Optional[int] = None, check_hull: bool = False,
                    level_tol: float = EVENT_TOL, tangent_tol: float = 1e-9,
                    seed: int = 0) -> Selection:
    """Choose the Filippov continuation at a point on interface ``interface_id``.

    Parameters
    ----------
    state : FilippovState or (x, v)
        Phase point with ``|s_j(x)| <= level_tol``.
    from_branch : int, optional
        Branch the trajectory arrives from; used only to break the tie when
        the two branches agree and the motion is exactly tangential.
    check_hull : bool
        Also measure the hull membership margin of the selected acceleration.
    """
    if hasattr(state, "x"):
        x, v = state.x, state.v
    else:
        x, v = (np.asarray(a, dtype=float) for a in state)
    if not 0 <= interface_id < len(field.interfaces):
        raise GeometryError(f"field has no interface {interface_id}")
    itf, grad, curv = _interface_terms(field, interface_id, x, v)
    s = float(itf.level(x))
    if abs(s) > level_tol * max(1.0, float(np.linalg.norm(grad))):
        raise GeometryError(f"state is not on interface {interface_id}: s = {s:.3e}")
    a_minus = _accel(field, x, v, itf.minus)
    a_plus = _accel(field, x, v, itf.plus)
    phi_dot = float(grad @ v)
    pm = float(grad @ a_minus) + curv
    pp = float(grad @ a_plus) + curv
    scale = float(np.linalg.norm(grad)) * (1.0 + float(np.linalg.norm(v)))
    tol2 = tangent_tol * scale * (1.0 + float(np.linalg.norm(v)))
    theta = None
    if np.max(np.abs(a_plus - a_minus)) <= 1e-14 * (1.0 + np.max(np.abs(a_plus))):
        if abs(phi_dot) > tangent_tol * scale:
            branch = itf.plus if phi_dot > 0 else itf.minus
        elif from_branch is not None:
            branch = from_branch
        else:
            branch = itf.plus if pp >= 0 else itf.minus
        mode, acc = "crossing", a_plus if branch == itf.plus else a_minus
    elif abs(phi_dot) > tangent_tol * scale:
        branch = itf.plus if phi_dot > 0 else itf.minus
        mode, acc = "crossing", a_plus if branch == itf.plus else a_minus
    elif pm > tol2 and pp < -tol2:
        theta = sliding_theta(pm, pp)
        mode, branch = "sliding", -1
        acc = theta * a_plus + (1.0 - theta) * a_minus
    elif pm >= -tol2 and pp >= -tol2 and max(pm, pp) > tol2:
        mode, branch, acc = "crossing", itf.plus, a_plus
    elif pm <= tol2 and pp <= tol2 and min(pm, pp) < -tol2:
        mode, branch, acc = "crossing", itf.minus, a_minus
    else:
        raise SlidingAmbiguityError(
            f"ambiguous Filippov continuation at x={x}, v={v} on interface {interface_id}: "
            f"one-sided s'' = {pm:.3e} (minus), {pp:.3e} (plus) both point away "
            f"(or vanish); the inclusion has several solutions here")
    margin = None
    if check_hull:
        tol = 1e-6 * (1.0 + float(v @ v))
        margin, _ = hull_margin_ladder(field, x, v, -acc, tol, seed=seed)
    return Selection(mode, interface_id, int(branch), np.asarray(acc, dtype=float), theta,
                     phi_dot, pm, pp, margin)


# -- trajectories ---------------------------------------------------------------------------


def _hermite(t0, t1, y0, y1, d0, d1, t, derivative=False):
    h = t1 - t0
    s = ((t - t0) / h)[:, None]
    if derivative:
        h00 = 6 * s * s - 6 * s
        h10 = 3 * s * s - 4 * s + 1
        h01 = -h00
        h11 = 3 * s * s - 2 * s
        return (h00 * y0 + h01 * y1) / h[:, None] + h10 * d0 + h11 * d1
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    hh = h[:, None]
    return h00 * y0 + h10 * hh * d0 + h01 * y1 + h11 * hh * d1


@dataclass
class GeodesicTrajectory:
    """Output of :func:`integrate_geodesic`.

    Arrays are indexed by node. ``accel_left``/``accel_right`` are the
    one-sided accelerations (they differ only at events); ``branch`` is the
    active branch on the segment starting at the node (``-1`` while sliding).
    """

    taus: np.ndarray
    xs: np.ndarray
    vs: np.ndarray
    accel_left: np.ndarray
    accel_right: np.ndarray
    branch: np.ndarray
    events: list = dc_field(default_factory=list)
    metric_ref: str = ""
    truncated: bool = False
    step: float = 0.0
    hull_report: Optional["HullCheckReport"] = None

    def __len__(self):
        return self.taus.size

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    @property
    def span(self) -> tuple[float, float]:
        return float(self.taus[0]), float(self.taus[-1])

    @property
    def states(self) -> list[FilippovState]:
        return [FilippovState(x, v, t) for t, x, v in zip(self.taus, self.xs, self.vs)]

    @property
    def final(self) -> FilippovState:
        return FilippovState(self.xs[-1], self.vs[-1], self.taus[-1])

    def _locate(self, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        k = np.clip(np.searchsorted(self.taus, tau, side="right") - 1, 0, len(self) - 2)
        return tau, k

    def position(self, tau) -> np.ndarray:
        """Cubic Hermite dense output of the position."""
        tau, k = self._locate(tau)
        return _hermite(self.taus[k], self.taus[k + 1], self.xs[k], self.xs[k + 1],
                        self.vs[k], self.vs[k + 1], tau)

    def velocity(self, tau) -> np.ndarray:
        """Cubic Hermite dense output of the velocity (one-sided accelerations)."""
        tau, k = self._locate(tau)
        return _hermite(self.taus[k], self.taus[k + 1], self.vs[k], self.vs[k + 1],
                        self.accel_right[k], self.accel_left[k + 1], tau)

    def acceleration(self, tau) -> np.ndarray:
        """Derivative of the velocity interpolant (numerically differentiated ``v``)."""
        tau, k = self._locate(tau)
        return _hermite(self.taus[k], self.taus[k + 1], self.vs[k], self.vs[k + 1],
                        self.accel_right[k], self.accel_left[k + 1], tau, derivative=True)

    def as_curve(self) -> SampledCurve:
        return SampledCurve(self.taus, self.xs, self.vs)

    def energy(self, field: MetricField) -> np.ndarray:
        """``g(v, v)`` at every node (branch-aware)."""
        g = field.metric(self.xs)
        return lorentz_product(g, self.vs, self.vs)

    def euclidean_length(self) -> float:
        speed = np.linalg.norm(self.vs, axis=1)
        return float(np.trapezoid(speed, self.taus))

    def segments_by_branch(self):
        """Index ranges ``(start, stop, branch)`` of maximal runs on one branch."""
        out = []
        start = 0
        for k in range(1, len(self)):
            if k == len(self) - 1 or self.branch[k] != self.branch[start]:
                out.append((start, k, int(self.branch[start])))
                start = k
        return out


def _rk4(rhs, x, v, h):
    a1 = rhs(x, v)
    x2, v2 = x + 0.5 * h * v, v + 0.5 * h * a1
    a2 = rhs(x2, v2)
    x3, v3 = x + 0.5 * h * v2, v + 0.5 * h * a2
    a3 = rhs(x3, v3)
    x4, v4 = x + h * v3, v + h * a3
    a4 = rhs(x4, v4)
    xn = x + h / 6.0 * (v + 2 * v2 + 2 * v3 + v4)
    vn = v + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
    return xn, vn


def _adjacent(field: MetricField, branch: int):
    return [j for j, itf in enumerate(field.interfaces) if branch in (itf.minus, itf.plus)]


def _side(itf, branch) -> float:
    return 1.0 if branch == itf.plus else -1.0


def _project(itf, x, v):
    grad = np.asarray(itf.gradient(x), dtype=float)
    gg = grad @ grad
    x = x - float(itf.level(x)) / gg * grad
    grad = np.asarray(itf.gradient(x), dtype=float)
    v = v - (grad @ v) / (grad @ grad) * grad
    return x, v


def integrate_geodesic(field: MetricField, init, tau_end: float, step: float = 1e-3,
                       verify_hull: bool = False, hull_seed: int = 0,
                       max_steps: int = 10_000_000) -> GeodesicTrajectory:
    """Integrate the geodesic inclusion from ``init`` up to ``tau_end``.

    Parameters
    ----------
    init : FilippovState or (x, v) or (x, v, tau)
    tau_end : float
        Final parameter value (must exceed ``init.tau``).
    step : float
        RK4 step; the last step is shortened to land on ``tau_end``.
    verify_hull : bool
        Run :func:`hull_check` at 100 random times and attach the report.

    Returns
    -------
    GeodesicTrajectory
        ``truncated`` is set when the trajectory leaves the chart ball.
    """
    if not isinstance(init, FilippovState):
        init = FilippovState(*init)
    if init.x.size != field.dim:
        raise GeometryError(f"state dimension {init.x.size} != field dimension {field.dim}")
    if not step > 0:
        raise GeometryError("step must be positive")
    if not tau_end > init.tau:
        raise GeometryError("tau_end must exceed the initial parameter")
    if not field.in_domain(init.x):
        raise GeometryError(f"initial point {init.x} is outside the chart")

    x, v, tau = init.x.copy(), init.v.copy(), init.tau
    events: list[TrajectoryEvent] = []
    sliding_on: Optional[int] = None
    branch = int(field.branch_at(x))

    # start on an interface: select the continuation right away
    for j, itf in enumerate(field.interfaces):
        if abs(float(itf.level(x))) <= EVENT_TOL:
            _check_single_interface(field, x, j)
            sel = filippov_select(field, (x, v), j, from_branch=branch)
            events.append(TrajectoryEvent(tau, j, sel.mode, branch, sel.branch, sel.theta))
            if sel.mode == "sliding":
                sliding_on = j
                x, v = _project(itf, x, v)
            else:
                branch = sel.branch
            break

    def rhs_branch(b):
        return lambda xx, vv: _accel(field, xx, vv, b)

    def rhs_slide(j):
        itf = field.interfaces[j]

        def rhs(xx, vv):
            grad = np.asarray(itf.gradient(xx), dtype=float)
            curv = float(vv @ itf.hess(xx) @ vv)
            am = _accel(field, xx, vv, itf.minus)
            ap = _accel(field, xx, vv, itf.plus)
            pm = grad @ am + curv
            pp = grad @ ap + curv
            denom = pm - pp
            th = 0.5 if denom == 0 else pm / denom
            return th * ap + (1.0 - th) * am
        return rhs

    def current_accel(xx, vv):
        if sliding_on is not None:
            return rhs_slide(sliding_on)(xx, vv)
        return _accel(field, xx, vv, branch)

    a0 = current_accel(x, v)
    taus, xs, vs, al, ar, br = [tau], [x.copy()], [v.copy()], [a0], [a0], [
        -1 if sliding_on is not None else branch]
    truncated = False
    scale = max(1.0, abs(tau_end))
    n_steps = 0

    while tau < tau_end - 1e-14 * scale and n_steps < max_steps:
        n_steps += 1
        h = min(step, tau_end - tau)
        if sliding_on is not None:
            j = sliding_on
            itf = field.interfaces[j]
            sel = _sliding_status(field, j, x, v)
            if sel is not None:
                # leave the interface into one side
                events.append(TrajectoryEvent(tau, j, "crossing", -1, sel, None))
                sliding_on = None
                branch = sel
                a_new = _accel(field, x, v, branch)
                ar[-1] = a_new
                br[-1] = branch
                continue
            xn, vn = _rk4(rhs_slide(j), x, v, h)
            xn, vn = _project(itf, xn, vn)
            _check_single_interface(field, xn, j)
            taun = tau + h
        else:
            rhs = rhs_branch(branch)
            xn, vn = _rk4(rhs, x, v, h)
            taun = tau + h
            hit = None
            for j in _adjacent(field, branch):
                itf = field.interfaces[j]
                if _side(itf, branch) * float(itf.level(xn)) < 0:
                    frac, xe, ve = _locate_event(rhs, itf, branch, x, v, h)
                    if hit is None or frac < hit[0]:
                        hit = (frac, xe, ve, j)
            if hit is not None:
                frac, xe, ve, j = hit
                taue = tau + frac * h
                _check_single_interface(field, xe, j)
                a_left = _accel(field, xe, ve, branch)
                sel = filippov_select(field, (xe, ve), j, from_branch=branch,
                                      level_tol=1e-10)
                events.append(TrajectoryEvent(taue, j, sel.mode, branch, sel.branch, sel.theta))
                if sel.mode == "sliding":
                    sliding_on = j
                    xe, ve = _project(field.interfaces[j], xe, ve)
                    new_b = -1
                else:
                    branch = sel.branch
                    new_b = branch
                if taue - taus[-1] <= 1e-15 * scale:
                    xs[-1], vs[-1], ar[-1], br[-1] = xe, ve, sel.acceleration, new_b
                else:
                    taus.append(taue)
                    xs.append(xe)
                    vs.append(ve)
                    al.append(a_left)
                    ar.append(sel.acceleration)
                    br.append(new_b)
                x, v, tau = xe, ve, taue
                if not field.in_domain(x):
                    truncated = True
                    break
                continue
        if not field.in_domain(xn):
            truncated = True
            break
        x, v, tau = xn, vn, taun
        a = current_accel(x, v)
        taus.append(tau)
        xs.append(x.copy())
        vs.append(v.copy())
        al.append(a)
        ar.append(a)
        br.append(-1 if sliding_on is not None else branch)

    if len(taus) < 2:
        raise GeometryError("trajectory left the chart before completing one step")
    traj = GeodesicTrajectory(np.array(taus), np.array(xs), np.array(vs), np.array(al),
                              np.array(ar), np.array(br, dtype=int), events, field.name,
                              truncated, float(step))
    if verify_hull:
        traj.hull_report = hull_check(traj, field, seed=hull_seed)
    return traj


def _check_single_interface(field: MetricField, x, j: int, tol: float = 1e-9):
    for k, itf in enumerate(field.interfaces):
        if k != j and abs(float(itf.level(x))) <= tol:
            raise InterfaceIntersectionError(
                f"trajectory reached the intersection of interfaces {j} and {k} at {x}; "
                "Filippov selection is only implemented on codimension-one interfaces")


def _sliding_status(field, j, x, v):
    """``None`` while sliding persists, else the branch the motion leaves into."""
    itf, grad, curv = _interface_terms(field, j, x, v)
    pm = float(grad @ _accel(field, x, v, itf.minus)) + curv
    pp = float(grad @ _accel(field, x, v, itf.plus)) + curv
    if pm > 0 and pp < 0:
        return None
    if pp >= 0 and pm >= 0:
        return itf.plus
    if pp <= 0 and pm <= 0:
        return itf.minus
    raise SlidingAmbiguityError(
        f"sliding motion reached a repulsive configuration at x={x}: "
        f"s'' = {pm:.3e} (minus), {pp:.3e} (plus)")


def _locate_event(rhs, itf, branch, x, v, h):
    """Bisection on the step fraction for ``s(x(frac h)) = 0``."""
    side = _side(itf, branch)
    lo, hi = 0.0, 1.0
    x_hi, v_hi = _rk4(rhs, x, v, h)
    s_hi = float(itf.level(x_hi))
    x_lo, v_lo, s_lo = x, v, float(itf.level(x))
    for _ in range(BISECTION_ITERS):
        if min(abs(s_lo), abs(s_hi)) <= EVENT_TOL:
            break
        mid = 0.5 * (lo + hi)
        xm, vm = _rk4(rhs, x, v, mid * h)
        sm = float(itf.level(xm))
        if side * sm < 0:
            hi, x_hi, v_hi, s_hi = mid, xm, vm, sm
        else:
            lo, x_lo, v_lo, s_lo = mid, xm, vm, sm
    if abs(s_lo) <= abs(s_hi):
        return lo, x_lo, v_lo
    return hi, x_hi, v_hi


# -- hull membership along a trajectory -------------------------------------------------


@dataclass
class HullCheckReport:
    times: np.ndarray
    margins: np.ndarray
    tolerances: np.ndarray
    deltas: np.ndarray

    @property
    def max_margin(self) -> float:
        return float(np.max(self.margins)) if self.margins.size else 0.0

    @property
    def failures(self) -> int:
        return int(np.sum(self.margins > self.tolerances))

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_dict(self) -> dict:
        return {"checks": int(self.times.size), "max_margin": self.max_margin,
                "failures": self.failures, "passed": self.passed,
                "finest_delta": float(np.min(self.deltas)) if self.deltas.size else None}


def hull_check(traj: GeodesicTrajectory, field: MetricField, checks: int = 100,
               seed: int = 0, hull_tol: Optional[float] = None) -> HullCheckReport:
    """Check ``-gamma''(tau)`` against sampled essential hulls at random interior times.

    ``gamma''`` is the derivative of the velocity interpolant. The tolerance
    defaults to ``1e-6 (1 + |v|^2)``.
    """
    rng = np.random.default_rng(seed)
    t0, t1 = traj.span
    times = np.sort(rng.uniform(t0, t1, checks))
    xs = traj.position(times)
    vs = traj.velocity(times)
    acc = traj.acceleration(times)
    margins = np.empty(checks)
    tols = np.empty(checks)
    deltas = np.empty(checks)
    for i in range(checks):
        tol = hull_tol if hull_tol is not None else 1e-6 * (1.0 + float(vs[i] @ vs[i]))
        margins[i], deltas[i] = hull_margin_ladder(field, xs[i], vs[i], -acc[i], tol,
                                                   seed=seed + 7919 * (i + 1))
        tols[i] = tol
    return HullCheckReport(times, margins, tols, deltas)


# -- constant-speed reparametrization ---------------------------------------------------


def _curve_functions(curve):
    if isinstance(curve, GeodesicTrajectory):
        return curve.position, curve.velocity, curve.taus
    interp = curve.interpolant()
    deriv = interp.derivative()
    return interp, deriv, curve.params


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def _gl_points(grid):
    a, b = grid[:-1], grid[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return pts, half


def lorentzian_speeds(field: MetricField, points, velocities) -> np.ndarray:
    """``g(v, v)`` (not square-rooted) at the given phase points."""
    return lorentz_product(field.metric(np.asarray(points)), velocities, velocities)


def _speed_fn(field, pos, vel, null_tol):
    def speed(s):
        s = np.atleast_1d(s)
        q = lorentzian_speeds(field, pos(s), vel(s))
        if np.any(q <= null_tol):
            k = int(np.argmin(q))
            raise NotUniformlyTimelikeError(
                f"curve is not uniformly timelike: g(v, v) = {q[k]:.3e} at parameter {s[k]:.6g}")
        return np.sqrt(q)
    return speed


def reparametrize_constant_speed(curve: Union[GeodesicTrajectory, SampledCurve],
                                 field: MetricField, ell: Union[float, str] = "auto",
                                 interval: Optional[tuple[float, float]] = None,
                                 samples: Optional[int] = None,
                                 null_tol: float = NULL_TOL,
                                 return_info: bool = False):
    """Reparametrize a timelike curve to constant Lorentzian speed.

    Solves ``f'(t) = ell / |gamma'(f(t))|_g`` with ``f(a) = a0`` by RK4 on a
    uniform grid over ``interval = [a, b]`` (default: the input parameter
    range). With ``ell="auto"``, ``ell = L(gamma)/(b - a)`` so that
    ``f(b) = b0``; the Lorentzian length is computed by Gauss-Legendre
    quadrature. Output velocities follow from the chain rule.

    Returns
    -------
    SampledCurve or (SampledCurve, dict)
        The dict (with ``return_info``) carries ``ell``, ``length`` and
        ``endpoint_error = f(b) - b0``.
    """
    pos, vel, nodes = _curve_functions(curve)
    a0, b0 = float(nodes[0]), float(nodes[-1])
    a, b = (a0, b0) if interval is None else (float(interval[0]), float(interval[1]))
    if not b > a:
        raise GeometryError("target interval must have positive length")
    speed = _speed_fn(field, pos, vel, null_tol)
    # quadrature grid: input nodes, refined to at least 512 segments
    refine = max(1, int(np.ceil(512 / max(1, nodes.size - 1))))
    fine = np.concatenate([np.linspace(nodes[k], nodes[k + 1], refine + 1)[:-1]
                           for k in range(nodes.size - 1)] + [nodes[-1:]])
    qp, half = _gl_points(fine)
    length = float(np.sum(half * (speed(qp.ravel()).reshape(qp.shape) @ _GL_WEIGHTS)))
    if ell == "auto":
        ell_val = length / (b - a)
    else:
        ell_val = float(ell)
        if not ell_val > 0:
            raise GeometryError("ell must be positive")
    n = samples if samples is not None else max(2000, nodes.size - 1)
    t = np.linspace(a, b, n + 1)
    dt = (b - a) / n

    def fprime(f):
        return ell_val / speed(np.clip(f, a0, b0))[0]

    f = np.empty(n + 1)
    f[0] = a0
    for i in range(n):
        k1 = fprime(f[i])
        k2 = fprime(f[i] + 0.5 * dt * k1)
        k3 = fprime(f[i] + 0.5 * dt * k2)
        k4 = fprime(f[i] + dt * k3)
        f[i + 1] = f[i] + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    endpoint_error = float(f[-1] - b0)
    if ell == "auto":
        f[-1] = b0 if abs(endpoint_error) < 1e-6 * max(1.0, b0 - a0) else f[-1]
    fc = np.clip(f, a0, b0)
    pts = pos(fc)
    df = ell_val / speed(fc)
    out = SampledCurve(t, pts, vel(fc) * df[:, None])
    if return_info:
        # average speed of the new parametrization on every output segment,
        # measured on the input curve: L(gamma|[f_i, f_i+1]) / dt
        qp, half = _gl_points(fc)
        seg = half * (speed(qp.ravel()).reshape(qp.shape) @ _GL_WEIGHTS)
        info = {"ell": ell_val, "length": length, "endpoint_error": endpoint_error,
                "segment_speed_deviation": float(np.max(np.abs(seg / dt - ell_val)))}
        return out, info
    return out


def speed_deviation(curve: SampledCurve, field: MetricField, ell: Optional[float] = None) -> dict:
    """Deviation of a curve from constant Lorentzian speed ``ell``.

    ``node`` uses the stored velocities; ``segment`` compares the quadrature
    length of each segment of the interpolant with ``ell`` times its duration.
    """
    q = lorentzian_speeds(field, curve.points, curve.derived_velocities)
    sp = np.sqrt(np.maximum(q, 0.0))
    if ell is None:
        ell = float(np.mean(sp))
    interp = curve.interpolant()
    deriv = interp.derivative()
    qp, half = _gl_points(curve.params)
    flat = qp.ravel()
    qq = lorentzian_speeds(field, interp(flat), deriv(flat)).reshape(qp.shape)
    seg_len = half * (np.sqrt(np.maximum(qq, 0.0)) @ _GL_WEIGHTS)
    seg_speed = seg_len / np.diff(curve.params)
    return {"ell": float(ell), "node": float(np.max(np.abs(sp - ell))),
            "segment": float(np.max(np.abs(seg_speed - ell)))}


# -- velocity bounds ----------------------------------------------------------------------


def velocity_upper_bound(C: float, r: float, duration: float) -> float:
    """``(e^{C r} - 1)/C / duration``, with the limit ``r / duration`` at ``C = 0``."""
    if C < 0 or r < 0 or not duration > 0:
        raise GeometryError("need C >= 0, r >= 0 and a positive duration")
    factor = r if C * r == 0 else np.expm1(C * r) / C
    return float(factor / duration)


@dataclass
class VelocityBoundReport:
    bound: float
    max_speed: float
    min_slack: float
    euclidean_length: float
    duration: float
    C: float

    @property
    def ok(self) -> bool:
        return self.min_slack >= -1e-12 * max(1.0, self.bound)

    def to_dict(self) -> dict:
        return {"bound": self.bound, "max_speed": self.max_speed, "min_slack": self.min_slack,
                "euclidean_length": self.euclidean_length, "duration": self.duration,
                "C": self.C, "ok": self.ok}


def velocity_upper_bound_check(traj: Union[GeodesicTrajectory, SampledCurve],
                               C: float) -> VelocityBoundReport:
    """Check ``|gamma'(t)| <= (e^{C r} - 1)/C / (b - a)`` at every sample.

    ``r`` is the Euclidean length (trapezoidal rule on ``|gamma'|``).
    """
    if isinstance(traj, GeodesicTrajectory):
        t, vel = traj.taus, traj.vs
    else:
        t, vel = traj.params, traj.derived_velocities
    speed = np.linalg.norm(vel, axis=1)
    r = float(np.trapezoid(speed, t))
    duration = float(t[-1] - t[0])
    bound = velocity_upper_bound(C, r, duration)
    return VelocityBoundReport(bound, float(speed.max()), float(bound - speed.max()), r,
                               duration, float(C))


def c11_check(traj: GeodesicTrajectory, field: MetricField, C2: Optional[float] = None,
              slack: float = 0.10) -> dict:
    """Compare the measured Lipschitz constant of ``tau -> gamma'`` with ``C2 C1^2``.

    ``C1 = max |gamma'|`` and ``C2`` is the Christoffel bound of the field.
    The measured constant is the largest difference quotient of consecutive
    velocity samples.
    """
    if C2 is None:
        C2 = christoffel_bound(field)
    dv = np.linalg.norm(np.diff(traj.vs, axis=0), axis=1)
    dt = np.diff(traj.taus)
    measured = float(np.max(dv / dt)) if dt.size else 0.0
    C1 = float(np.max(np.linalg.norm(traj.vs, axis=1)))
    bound = float(C2 * C1 ** 2)
    return {"measured": measured, "C1": C1, "C2": float(C2), "bound": bound,
            "ok": measured <= (1.0 + slack) * bound + 1e-12}


# -- limits of geodesics --------------------------------------------------------------------


def concatenate_geodesics(pieces: Sequence[GeodesicTrajectory],
                          interval: tuple[float, float] = (0.0, 1.0)) -> SampledCurve:
    """Concatenate geodesic pieces, matching Euclidean speeds at the junctions.

    Piece ``i`` is affinely reparametrized so that its initial speed equals the
    final speed of piece ``i - 1``; the whole curve is then mapped affinely onto
    ``interval``. Junction nodes keep the outgoing velocity.
    """
    if not pieces:
        raise GeometryError("nothing to concatenate")
    ts, xs, vs = [], [], []
    offset = 0.0
    prev_speed = None
    for p in pieces:
        t = p.taus - p.taus[0]
        v = p.vs
        if prev_speed is not None:
            s0 = float(np.linalg.norm(v[0]))
            if s0 == 0 or prev_speed == 0:
                raise GeometryError("cannot match speeds of a constant piece")
            c = prev_speed / s0            # new parameter = t / c
            t = t / c
            v = v * c
        ts.append(t + offset)
        xs.append(p.xs)
        vs.append(v)
        offset = float(ts[-1][-1])
        prev_speed = float(np.linalg.norm(v[-1]))
    t = np.concatenate([ts[0]] + [tt[1:] for tt in ts[1:]])
    x = np.concatenate([xs[0]] + [xx[1:] for xx in xs[1:]])
    v = np.concatenate([vs[0]] + [vv[1:] for vv in vs[1:]])
    a, b = interval
    scale = (b - a) / (t[-1] - t[0])
    return SampledCurve(a + (t - t[0]) * scale, x, v / scale)


def _second_derivative(params, points):
    t = params
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    d = (2.0 / (h0 + h1))[:, None] * ((points[2:] - points[1:-1]) / h1[:, None]
                                      - (points[1:-1] - points[:-2]) / h0[:, None])
    return d


def pointwise_limit_is_geodesic(trajs: Sequence[Union[GeodesicTrajectory, SampledCurve]],
                                limit: SampledCurve, field: MetricField,
                                checks: int = 100, seed: int = 0,
                                hull_tol: Optional[float] = None) -> dict:
    """Check uniform convergence of ``trajs`` to ``limit`` and the inclusion along it.

    Reports the sup-distance of each member to the limit on the limit's
    parameter grid, a ``converging`` flag, and the hull membership margin of
    the limit's second-difference acceleration at ``checks`` interior samples.
    """
    dists = []
    for tr in trajs:
        pos = tr.position if isinstance(tr, GeodesicTrajectory) else tr.interpolant()
        dists.append(float(np.max(np.linalg.norm(pos(limit.params) - limit.points, axis=1))))
    dists = np.array(dists)
    converging = bool(dists.size == 0 or dists[-1] <= 1e-8
                      or (dists.size > 1 and dists[-1] < 0.5 * dists[0]))
    acc = _second_derivative(limit.params, limit.points)
    vel = limit.derived_velocities[1:-1]
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(acc.shape[0], size=min(checks, acc.shape[0]), replace=False))
    margins = np.empty(idx.size)
    for i, k in enumerate(idx):
        x = limit.points[k + 1]
        v = vel[k]
        tol = hull_tol if hull_tol is not None else 1e-6 * (1.0 + float(v @ v))
        margins[i], _ = hull_margin_ladder(field, x, v, -acc[k], tol, seed=seed + 31 * (i + 1))
    tol = hull_tol if hull_tol is not None else 1e-6
    return {"sup_distances": dists.tolist(), "converging": converging,
            "max_margin": float(margins.max()) if margins.size else 0.0,
            "checks": int(idx.size), "margins_ok": bool(np.all(margins <= tol * (1 + np.max(np.sum(vel ** 2, axis=1)))))}


def limit_experiment(field: MetricField, x, y, levels: int = 5, pieces: int = 4,
                     step: float = 1e-3, samples: int = 1001, checks: int = 100,
                     seed: int = 0) -> dict:
    """Concatenated timelike geodesics approaching a lightlike segment ``x -> y``.

    At level ``k`` the chord is subdivided into ``pieces`` parts and the
    junction points are pushed into the timelike future by a zig-zag of size
    ``2^{-k}`` so that every piece is timelike; each piece is a geodesic
    obtained by integrating from the straight-line velocity. The limit is the
    lightlike segment itself, parametrized affinely on [0, 1].
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = y - x
    g0 = field.metric(x)
    if abs(lorentz_product(g0, w, w)) > 1e-9 * max(1.0, float(w @ w)):
        raise GeometryError("limit experiment expects a lightlike chord")
    et = np.zeros_like(x)
    et[0] = 1.0
    curves = []
    for k in range(1, levels + 1):
        eps = 2.0 ** (-k)
        nodes = [x + (i / pieces) * w + eps * (i / pieces + (0.5 / pieces) * (i % 2)) * et
                 for i in range(pieces + 1)]
        parts = []
        for i in range(pieces):
            d = nodes[i + 1] - nodes[i]
            parts.append(integrate_geodesic(field, (nodes[i], d), 1.0, step))
        curves.append(concatenate_geodesics(parts))
    t = np.linspace(0.0, 1.0, samples)
    limit = SampledCurve(t, x + t[:, None] * w, np.broadcast_to(w, (samples, w.size)).copy())
    rep = pointwise_limit_is_geodesic(curves, limit, field, checks=checks, seed=seed)
    rep["levels"] = levels
    rep["pieces"] = pieces
    return rep
