import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from lipcausal import zoo
from lipcausal.connection import christoffel_bound
from lipcausal.curves import SampledCurve
from lipcausal.filippov import (FilippovState, InconsistentSlidingError, SlidingAmbiguityError,
                                c11_check, concatenate_geodesics, filippov_select, hull_check,
                                integrate_geodesic, reparametrize_constant_speed, sliding_theta,
                                speed_deviation, velocity_upper_bound, velocity_upper_bound_check)

from conftest import ROSEN_V0, ROSEN_X0


def st_(x, v):
    return FilippovState(np.asarray(x, float), np.asarray(v, float))


@pytest.mark.parametrize("pm, pp, theta", [(1.0, -1.0, 0.5), (3.0, -1.0, 0.75), (0.0, -2.0, 0.0)])
def test_sliding_theta_solves_tangency(pm, pp, theta):
    th = sliding_theta(pm, pp)
    assert th == pytest.approx(theta)
    assert (1 - th) * pm + th * pp == pytest.approx(0.0, abs=1e-15)


def test_sliding_theta_without_solution():
    with pytest.raises(InconsistentSlidingError):
        sliding_theta(1.0, 2.0)


def test_attractive_shell_slides_with_half_weights():
    sel = filippov_select(zoo.thin_shell_field(), st_([0, 0], [1, 0]), check_hull=True)
    assert sel.mode == "sliding" and sel.theta == pytest.approx(0.5)
    assert sel.hull_margin <= 1e-9


def test_repulsive_shell_is_ambiguous():
    with pytest.raises(SlidingAmbiguityError):
        filippov_select(zoo.thin_shell_field(kink=-0.5), st_([0, 0], [1, 0]))


def test_transverse_crossing():
    sel = filippov_select(zoo.thin_shell_field(), st_([0, 0], [1, 0.4]))
    assert sel.mode == "crossing" and sel.branch == 1


def test_minkowski_geodesic_is_straight(minkowski3):
    x0, v0 = np.array([0.0, 0.1, 0.0]), np.array([1.0, -0.3, 0.4])
    tr = integrate_geodesic(minkowski3, st_(x0, v0), 0.5, 0.01)
    np.testing.assert_allclose(tr.xs, x0 + tr.taus[:, None] * v0, atol=1e-13)
    assert not tr.events and not tr.truncated


def test_rosen_crossing_event_and_energy(rosen):
    tr = integrate_geodesic(rosen, st_(ROSEN_X0, ROSEN_V0), 0.3, 1e-3)
    assert len(tr.events) == 1
    ev = tr.events[0]
    assert (ev.mode, ev.branch_before, ev.branch_after) == ("crossing", 0, 1)
    u0, du = (ROSEN_X0[0] + ROSEN_X0[1]) / np.sqrt(2), (ROSEN_V0[0] + ROSEN_V0[1]) / np.sqrt(2)
    assert ev.tau == pytest.approx(-u0 / du, abs=1e-10)
    E = tr.energy(rosen)
    assert np.ptp(E) <= 1e-10


def test_hull_check_passes_on_rosen_geodesic(rosen):
    tr = integrate_geodesic(rosen, st_(ROSEN_X0, ROSEN_V0), 0.3, 1e-3)
    rep = hull_check(tr, rosen, checks=40, seed=0)
    assert rep.passed and rep.failures == 0


def test_thin_shell_sliding_trajectory_stays_on_shell():
    f = zoo.thin_shell_field()
    tr = integrate_geodesic(f, st_([0.0, 0.0], [1.0, 0.0]), 0.3, 1e-3)
    assert np.max(np.abs(tr.xs[:, 1])) <= 1e-12
    assert np.all(tr.branch[1:] == -1)
    assert hull_check(tr, f, checks=20, seed=1).passed


def test_chart_exit_truncates(minkowski3):
    tr = integrate_geodesic(minkowski3, st_([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]), 5.0, 0.01)
    assert tr.truncated
    assert np.linalg.norm(tr.xs[-1]) <= minkowski3.domain_radius * (1 + 1e-9)


def _self_convergence_order(field, x0, v0, T, steps):
    ends = [integrate_geodesic(field, st_(x0, v0), T, h).final for h in steps]
    ends = [np.concatenate([s.x, s.v]) for s in ends]
    return np.log2(np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2]))


def test_convergence_order_through_impulse(rosen):
    assert _self_convergence_order(rosen, ROSEN_X0, ROSEN_V0, 0.3, (0.05, 0.025, 0.0125)) >= 2


def test_convergence_order_smooth(conformal3):
    order = _self_convergence_order(conformal3, [-0.3, 0, 0], [1, 0.3, 0.1], 0.6,
                                    (0.05, 0.025, 0.0125))
    assert order >= 3.8


def test_reparametrization_constant_matches_quadrature(minkowski3):
    # gamma(s) = (s, s^2/4, 0) on [0, 1]: speed sqrt(1 - s^2/4)
    s = np.linspace(0, 1, 201)
    curve = SampledCurve(s, np.stack([s, s ** 2 / 4, 0 * s], axis=1),
                         np.stack([np.ones_like(s), s / 2, 0 * s], axis=1))
    out, info = reparametrize_constant_speed(curve, minkowski3, return_info=True)
    exact, _ = quad(lambda u: np.sqrt(1 - u * u / 4), 0, 1, epsabs=1e-14)
    assert info["ell"] == pytest.approx(exact, abs=1e-10)
    assert speed_deviation(out, minkowski3, info["ell"])["node"] <= 1e-8


def test_reparametrization_is_idempotent(conformal3):
    tr = integrate_geodesic(conformal3, st_([-0.3, 0, 0], [1, 0.3, 0.1]), 0.6, 1e-3)
    once = reparametrize_constant_speed(tr, conformal3)
    twice = reparametrize_constant_speed(once, conformal3)
    assert np.max(np.abs(twice.points - once.points)) <= 1e-9


def test_velocity_upper_bound_formula():
    assert velocity_upper_bound(0.0, 2.0, 4.0) == pytest.approx(0.5)
    assert velocity_upper_bound(1.0, 1.0, 1.0) == pytest.approx(np.e - 1)


_CONF = zoo.conformal_field(0.2, 3)
_C2 = christoffel_bound(_CONF, samples=4000, seed=0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.4, 0.4), st.floats(0.0, 0.8))
def test_geodesics_satisfy_velocity_bounds(sz, sx):
    f = _CONF
    v0 = np.array([1.0, sz, sx * np.sqrt(max(0.0, 0.9 - sz * sz))])
    tr = integrate_geodesic(f, st_([-0.2, 0, 0], v0), 0.4, 2e-3)
    assert velocity_upper_bound_check(tr, _C2).ok
    assert c11_check(tr, f)["ok"]


def test_concatenation_is_continuous(minkowski3):
    a = integrate_geodesic(minkowski3, st_([0, 0, 0], [1, 0.2, 0]), 0.2, 0.01)
    b = integrate_geodesic(minkowski3, st_(a.xs[-1], [1, -0.2, 0]), 0.2, 0.01)
    c = concatenate_geodesics([a, b])
    assert c.span == (0.0, 1.0)
    np.testing.assert_allclose(c.points[[0, -1]], [a.xs[0], b.xs[-1]], atol=1e-14)
    assert np.max(np.linalg.norm(np.diff(c.points, axis=0), axis=1)) <= 0.05
