"""
Lorentzian linear algebra on a single chart.

Vectors are plain ``numpy`` arrays whose first coordinate is the time
component; the remaining ``n - 1`` coordinates are spatial. The sign
convention is ``+ - - ... -``.

A :class:`MetricField` is a Lorentzian metric on a ball around the chart
origin, given as finitely many smooth branches glued along interface
hypersurfaces. Branch evaluators are vectorized: they take points of shape
``(..., n)`` and return matrices of shape ``(..., n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

NULL_TOL = 1e-10
SIGNATURE_TOL = 1e-10

__all__ = [
    "GeometryError",
    "SignatureError",
    "BilinearForm",
    "Branch",
    "Interface",
    "MetricField",
    "ConeInclusionReport",
    "minkowski",
    "minkowski_matrix",
    "lorentz_product",
    "lorentz_norm",
    "classify",
    "widened_metric",
    "cone_inclusion_check",
    "estimate_lipschitz",
    "min_time_growth",
    "uniform_ball",
    "NULL_TOL",
]


class GeometryError(ValueError):
    """Invalid geometric input (dimension mismatch, non-causal data, ...)."""


class SignatureError(GeometryError):
    """A bilinear form failed the Lorentzian signature check."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


def minkowski_matrix(n: int) -> np.ndarray:
    if n < 2:
        raise GeometryError(f"dimension must be >= 2, got {n}")
    eta = -np.eye(n)
    eta[0, 0] = 1.0
    return eta


def _check_signature(matrix: np.ndarray, tol: float = SIGNATURE_TOL) -> bool:
    ev = np.linalg.eigvalsh(matrix)
    return bool(np.sum(ev > tol) == 1 and np.sum(ev < -tol) == matrix.shape[-1] - 1)


@dataclass(frozen=True)
class BilinearForm:
    """A constant symmetric Lorentzian bilinear form on R^n."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise GeometryError(f"expected a square matrix, got shape {m.shape}")
        if m.shape[0] < 2:
            raise GeometryError("dimension must be >= 2")
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.T)) > 1e-12 * scale:
            raise GeometryError("bilinear form is not symmetric")
        m = 0.5 * (m + m.T)
        if not _check_signature(m):
            raise SignatureError(
                f"not Lorentzian: eigenvalues {np.linalg.eigvalsh(m)}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, u, v):
        return lorentz_product(self, u, v)


def minkowski(n: int) -> BilinearForm:
    return BilinearForm(minkowski_matrix(n))


def _as_matrix(g) -> np.ndarray:
    return g.matrix if isinstance(g, BilinearForm) else np.asarray(g, dtype=float)


def lorentz_product(g, u, v) -> float | np.ndarray:
    """Return ``u^T M v`` for the form ``g`` (batched over leading axes)."""
    m = _as_matrix(g)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = m.shape[-1]
    if u.shape[-1] != n or v.shape[-1] != n:
        raise GeometryError(
            f"dimension mismatch: form is {n}-dimensional, vectors have "
            f"{u.shape[-1]} and {v.shape[-1]} components")
    out = np.einsum("...i,...ij,...j->...", u, m, v)
    return float(out) if np.ndim(out) == 0 else out


def lorentz_norm(g, v) -> float | np.ndarray:
    """``sqrt(|g(v, v)|)``."""
    return np.sqrt(np.abs(lorentz_product(g, v, v)))


def classify(g, v, tol: Optional[float] = None) -> str:
    """Causal character of ``v``: 'timelike', 'null', 'spacelike' or 'zero'.

    The default tolerance is ``1e-10 * (1 + |v|^2)`` (Euclidean norm).
    """
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if tol is None:
        tol = NULL_TOL * (1.0 + norm ** 2)
    if norm <= tol:
        return "zero"
    q = lorentz_product(g, v, v)
    if q > tol:
        return "timelike"
    if q < -tol:
        return "spacelike"
    return "null"


def widened_metric(L: float, h: float, n: int = 2, alpha: float = 1.0) -> BilinearForm:
    """Constant comparison form ``<v,w> + 4 L h^alpha v_t w_t``.

    Its light cone contains the cones of every metric within Lipschitz
    distance ``L`` of Minkowski on the ball of radius ``h``. ``alpha < 1``
    gives the variant used for Hölder metrics.
    """
    if L < 0:
        raise GeometryError(f"L must be nonnegative, got {L}")
    if not h > 0:
        raise GeometryError(f"h must be positive, got {h}")
    m = minkowski_matrix(n)
    m[0, 0] += 4.0 * L * h ** alpha
    return BilinearForm(m)


def uniform_ball(rng: np.random.Generator, count: int, dim: int,
                 radius: float = 1.0, center=None) -> np.ndarray:
    """``count`` points uniformly distributed in a Euclidean ball."""
    d = rng.standard_normal((count, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / dim)
    pts = d * r[:, None]
    if center is not None:
        pts = pts + np.asarray(center, dtype=float)
    return pts


@dataclass(frozen=True)
class Branch:
    """A smooth metric branch.

    ``metric`` maps points ``(..., n)`` to matrices ``(..., n, n)``;
    ``derivative`` (optional) returns ``(..., n, n, n)`` with index order
    ``[l, i, j] = d_l g_ij``.
    """

    metric: Callable[[np.ndarray], np.ndarray]
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class Interface:
    """Level set ``{s(x) = 0}`` separating branch ``minus`` (s < 0) from ``plus``."""

    level: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    minus: int
    plus: int
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def hyperplane(cls, normal, offset: float = 0.0, minus: int = 0, plus: int = 1):
        """Interface ``{normal . x = offset}``."""
        normal = np.asarray(normal, dtype=float)

        def level(x):
            return np.asarray(x, dtype=float) @ normal - offset

        def gradient(x):
            x = np.asarray(x, dtype=float)
            return np.broadcast_to(normal, x.shape).copy()

        def hessian(x):
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape + (x.shape[-1],))

        return cls(level, gradient, minus, plus, hessian)

    def hess(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.hessian is None:
            return np.zeros(x.shape + (x.shape[-1],))
        return self.hessian(x)

    def distance(self, x) -> np.ndarray:
        """First-order Euclidean distance ``|s(x)| / |grad s(x)|``."""
        s = np.asarray(self.level(x))
        gn = np.linalg.norm(self.gradient(x), axis=-1)
        return np.abs(s) / np.maximum(gn, 1e-300)


class MetricField:
    """Lorentzian metric on the chart ball ``{|x| < domain_radius}``.

    Parameters
    ----------
    dim : int
        Chart dimension ``n >= 2``.
    branches : sequence of Branch
        Smooth metric pieces. With no interfaces only ``branches[0]`` is used.
    interfaces : sequence of Interface
        Hypersurfaces across which the active branch changes.
    lipschitz_L : float, optional
        Lipschitz constant of ``x -> g_x`` (operator norm on unit vectors).
        Estimated by sampling when omitted; ``lipschitz_estimated`` records
        which case applies.
    locator : callable, optional
        ``x -> branch index``; required when there is more than one interface.
    """

    def __init__(self, dim: int, branches: Sequence[Branch],
                 interfaces: Sequence[Interface] = (), *,
                 lipschitz_L: Optional[float] = None,
                 domain_radius: float = 1.0,
                 name: str = "field",
                 locator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 fd_step: float = 1e-5,
                 interface_margin: Optional[float] = None,
                 holder_alpha: float = 1.0,
                 holder_constant: Optional[float] = None,
                 lipschitz_seed: int = 0):
        if dim < 2:
            raise GeometryError(f"dimension must be >= 2, got {dim}")
        if not branches:
            raise GeometryError("a metric field needs at least one branch")
        if len(interfaces) > 1 and locator is None:
            raise GeometryError("several interfaces require an explicit locator")
        self.dim = int(dim)
        self.branches = tuple(branches)
        self.interfaces = tuple(interfaces)
        self.domain_radius = float(domain_radius)
        self.name = name
        self.fd_step = float(fd_step)
        self.interface_margin = (1e-8 * self.domain_radius
                                 if interface_margin is None else float(interface_margin))
        self.holder_alpha = float(holder_alpha)
        self._locator = locator
        if lipschitz_L is None:
            self.lipschitz_L = estimate_lipschitz(self, seed=lipschitz_seed)
            self.lipschitz_estimated = True
        else:
            if lipschitz_L < 0:
                raise GeometryError("lipschitz_L must be nonnegative")
            self.lipschitz_L = float(lipschitz_L)
            self.lipschitz_estimated = False
        self.holder_constant = (self.lipschitz_L if holder_constant is None
                                else float(holder_constant))

    def __repr__(self):
        return (f"MetricField(name={self.name!r}, dim={self.dim}, "
                f"branches={len(self.branches)}, interfaces={len(self.interfaces)}, "
                f"L={self.lipschitz_L:.4g})")

    @classmethod
    def from_callable(cls, fn, dim: int, **kwargs) -> "MetricField":
        """Single-branch field from a generic (Lipschitz) metric callable.

        Christoffel symbols are then computed by central finite differences.
        """
        return cls(dim, [Branch(fn)], **kwargs)

    @classmethod
    def constant(cls, matrix, domain_radius: float = 1.0, name: str = "constant") -> "MetricField":
        form = BilinearForm(matrix)
        m = form.matrix.copy()
        n = m.shape[0]

        def metric(x):
            x = np.asarray(x, dtype=float)
            return np.broadcast_to(m, x.shape[:-1] + (n, n)).copy()

        def derivative(x):
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape[:-1] + (n, n, n))

        return cls(n, [Branch(metric, derivative)], lipschitz_L=0.0,
                   domain_radius=domain_radius, name=name)

    # -- branch bookkeeping -------------------------------------------------

    def branch_at(self, x) -> np.ndarray | int:
        x = np.asarray(x, dtype=float)
        if self._locator is not None:
            b = np.asarray(self._locator(x), dtype=int)
        elif not self.interfaces:
            b = np.zeros(x.shape[:-1], dtype=int)
        else:
            itf = self.interfaces[0]
            s = np.asarray(itf.level(x))
            b = np.where(s > 0, itf.plus, itf.minus)
        return int(b) if b.ndim == 0 else b

    def interface_levels(self, x) -> np.ndarray:
        """Level values ``s_j(x)``, shape ``(..., n_interfaces)``."""
        x = np.asarray(x, dtype=float)
        if not self.interfaces:
            return np.zeros(x.shape[:-1] + (0,))
        return np.stack([np.asarray(itf.level(x), dtype=float) for itf in self.interfaces],
                        axis=-1)

    def interface_distance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.interfaces:
            return np.full(x.shape[:-1], np.inf)
        return np.min(np.stack([itf.distance(x) for itf in self.interfaces], axis=-1),
                      axis=-1)

    # -- evaluation -----------------------------------------------------------

    def _dispatch(self, x, branch, attr):
        x = np.asarray(x, dtype=float)
        if branch is None:
            branch = self.branch_at(x)
        if np.ndim(branch) == 0:
            return attr(self.branches[int(branch)], x)
        branch = np.asarray(branch)
        out = None
        for b in np.unique(branch):
            mask = branch == b
            val = attr(self.branches[int(b)], x[mask])
            if out is None:
                out = np.empty(x.shape[:-1] + val.shape[1:])
            out[mask] = val
        return out

    def metric(self, x, branch=None) -> np.ndarray:
        """Metric matrix at ``x`` using the active (or the given) branch."""
        return self._dispatch(x, branch, lambda br, p: np.asarray(br.metric(p), dtype=float))

    def dmetric(self, x, branch=None) -> np.ndarray:
        """Partial derivatives ``d_l g_ij`` at ``x`` (index order ``[l, i, j]``)."""
        return self._dispatch(x, branch, self._branch_derivative)

    def _branch_derivative(self, br: Branch, x):
        if br.derivative is not None:
            return np.asarray(br.derivative(x), dtype=float)
        n = self.dim
        h = self.fd_step
        out = np.empty(x.shape[:-1] + (n, n, n))
        for l in range(n):
            e = np.zeros(n)
            e[l] = h
            out[..., l, :, :] = (np.asarray(br.metric(x + e)) - np.asarray(br.metric(x - e))) / (2 * h)
        return out

    def form_at(self, x) -> BilinearForm:
        return BilinearForm(self.metric(x))

    def product(self, x, u, v):
        return lorentz_product(self.metric(x), u, v)

    def in_domain(self, x) -> np.ndarray | bool:
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        out = r < self.domain_radius
        return bool(out) if np.ndim(out) == 0 else out

    def is_origin_normalized(self, tol: float = 1e-9) -> bool:
        g0 = self.metric(np.zeros(self.dim))
        return bool(np.max(np.abs(g0 - minkowski_matrix(self.dim))) <= tol)

    def inverse_norm_bound(self, samples: int = 10_000, seed: int = 0) -> float:
        """Sampled ``sup_x |g_x^{-1}|`` (spectral norm) over the chart ball."""
        rng = np.random.default_rng(seed)
        pts = uniform_ball(rng, samples, self.dim, self.domain_radius)
        pts = np.vstack([pts, np.zeros((1, self.dim))])
        ev = np.linalg.eigvalsh(self.metric(pts))
        return float(1.0 / np.min(np.abs(ev)))


def estimate_lipschitz(field: MetricField, pairs: int = 10_000, seed: int = 0) -> float:
    """Sampled Lipschitz constant ``max |g_x - g_y|_op / |x - y|``.

    Half of the pairs are global, half are short-range (displacements between
    1e-3 and 1e-1 of the chart radius), so that local slopes are resolved.
    The result is a lower estimate of the true constant.
    """
    rng = np.random.default_rng(seed)
    n, R = field.dim, field.domain_radius
    half = pairs // 2
    x1 = uniform_ball(rng, half, n, R)
    y1 = uniform_ball(rng, half, n, R)
    x2 = uniform_ball(rng, pairs - half, n, 0.9 * R)
    d = rng.standard_normal((pairs - half, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    step = R * 10.0 ** rng.uniform(-3, -1, pairs - half)
    y2 = x2 + d * step[:, None]
    x = np.vstack([x1, x2])
    y = np.vstack([y1, y2])
    diff = field.metric(x) - field.metric(y)
    op = np.max(np.abs(np.linalg.eigvalsh(diff)), axis=-1)
    dist = np.linalg.norm(x - y, axis=-1)
    ok = dist > 0
    return float(np.max(op[ok] / dist[ok]))


def min_time_growth(field: MetricField, points: int = 1000, directions: int = 64,
                    seed: int = 0) -> float:
    """Smallest time component of a future causal Euclidean-unit vector.

    Sampled over chart points and spatial directions; the chart normalization
    asks for a value of at least 1/2.
    """
    rng = np.random.default_rng(seed)
    n = field.dim
    xs = uniform_ball(rng, points, n, field.domain_radius)
    g = field.metric(xs)                                   # (P, n, n)
    if n == 2:
        e = np.array([[1.0], [-1.0]])
    else:
        e = rng.standard_normal((directions, n - 1))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
    c = g[:, 0, 0][:, None]                                # (P, 1)
    b = 2.0 * np.einsum("pj,dj->pd", g[:, 0, 1:], e)
    a = np.einsum("di,pij,dj->pd", e, g[:, 1:, 1:], e)
    disc = np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))
    roots = np.stack([(-b + disc) / (2 * a), (-b - disc) / (2 * a)])
    s = np.max(roots, axis=0)                              # null slope along +e
    return float(np.min(1.0 / np.sqrt(1.0 + s * s)))


@dataclass
class ConeInclusionReport:
    samples: int
    deviation_violations: int
    causal_violations: int
    deviation_bound: float
    max_deviation: float
    min_widened_value: float
    worst_point: np.ndarray = dc_field(repr=False, default=None)

    @property
    def violations(self) -> int:
        return self.deviation_violations + self.causal_violations

    @property
    def deviation_slack(self) -> float:
        return self.deviation_bound - self.max_deviation


def cone_inclusion_check(field: MetricField, L: float, h: float, samples: int = 100_000,
                         seed: int = 0, alpha: float = 1.0,
                         batch: int = 20_000) -> ConeInclusionReport:
    """Monte Carlo check that ``g``-causal vectors near the origin are widened-causal.

    For points ``|x| <= h`` and Euclidean-unit ``v`` with ``g_x(v, v) >= 0``
    checks ``|g_x(v,v) - g^h(v,v)| <= 5 L h^alpha`` and that ``g_x(v,v) > 0``
    implies ``g^h(v,v) > 0``.
    """
    if not field.is_origin_normalized():
        raise GeometryError("field is not normalized to Minkowski at the chart origin")
    n = field.dim
    wide = widened_metric(L, h, n, alpha).matrix
    bound = 5.0 * L * h ** alpha
    rng = np.random.default_rng(seed)
    got = 0
    dev_viol = causal_viol = 0
    max_dev = 0.0
    min_wide = np.inf
    worst = None
    while got < samples:
        x = uniform_ball(rng, batch, n, h)
        v = rng.standard_normal((batch, n))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        v[v[:, 0] < 0] *= -1.0
        q = lorentz_product(field.metric(x), v, v)
        keep = q >= 0
        x, v, q = x[keep][: samples - got], v[keep][: samples - got], q[keep][: samples - got]
        qh = lorentz_product(wide, v, v)
        dev = np.abs(q - qh)
        dev_viol += int(np.sum(dev > bound))
        causal_viol += int(np.sum((q > 0) & (qh <= 0)))
        i = int(np.argmax(dev))
        if dev[i] > max_dev:
            max_dev = float(dev[i])
            worst = np.concatenate([x[i], v[i]])
        pos = qh[q > 0]
        if pos.size:
            min_wide = min(min_wide, float(np.min(pos)))
        got += len(q)
    return ConeInclusionReport(samples, dev_viol, causal_viol, bound, max_dev,
                               min_wide, worst)
