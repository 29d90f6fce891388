import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lipcausal import zoo
from lipcausal.core import GeometryError, MetricField, minkowski, minkowski_matrix
from lipcausal.curves import SampledCurve
from lipcausal.inequalities import (TRIANGLE_CONSTANT, chord_length_gap, form_constant,
                                    form_transform, length_comparison_check,
                                    quantitative_triangle_slack, triangle_sweep,
                                    velocity_lower_bound_constant)


def naive_slack(u, v, A=TRIANGLE_CONSTANT):
    """Direct evaluation of |w|^2 - |w|(|u|+|v|) - A D^2 (fine when well conditioned)."""
    norm = lambda a: np.sqrt(a[0] ** 2 - np.sum(a[1:] ** 2))
    w = u + v
    D = np.linalg.norm(u - (u @ w) / (w @ w) * w)
    return norm(w) ** 2 - norm(w) * (norm(u) + norm(v)) - A * D ** 2, D


def timelike(args):
    t, s, frac = args
    s = np.asarray(s, float)
    ns = np.linalg.norm(s)
    return np.concatenate([[t], s / ns * frac * t if ns > 0 else s])


vec3 = st.tuples(st.floats(0.1, 3), st.lists(st.floats(-1, 1), min_size=2, max_size=2),
                 st.floats(0, 0.9)).map(timelike)


@given(vec3, vec3)
def test_slack_matches_naive_formula(u, v):
    slack, D = quantitative_triangle_slack(u, v)
    ref, Dref = naive_slack(u, v)
    assert slack == pytest.approx(ref, abs=1e-9)
    assert D == pytest.approx(Dref, abs=1e-12)
    assert slack >= -1e-12


@given(vec3, vec3, st.floats(0.1, 10))
def test_slack_is_quadratically_homogeneous(u, v, lam):
    s1, _ = quantitative_triangle_slack(u, v)
    s2, _ = quantitative_triangle_slack(lam * u, lam * v)
    assert s2 == pytest.approx(lam ** 2 * s1, rel=1e-7, abs=1e-12)


@given(vec3, vec3, st.floats(0, 2 * np.pi))
def test_slack_is_invariant_under_spatial_rotations(u, v, a):
    R = np.eye(3)
    R[1:, 1:] = [[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]]
    s1, _ = quantitative_triangle_slack(u, v)
    s2, _ = quantitative_triangle_slack(R @ u, R @ v)
    assert s2 == pytest.approx(s1, rel=1e-7, abs=1e-12)


def test_parallel_vectors_have_zero_slack():
    slack, D = quantitative_triangle_slack([1.0, 0.2], [2.0, 0.4])
    assert D == pytest.approx(0.0, abs=1e-15)
    assert slack == pytest.approx(0.0, abs=1e-14)


def test_worked_example():
    # u = (1, 0), v = (1, 0.5): |w|^2 = 3.75, |u| = 1, |v| = sqrt(0.75), w = (2, 0.5)
    u, v = np.array([1.0, 0.0]), np.array([1.0, 0.5])
    w = u + v
    D = np.linalg.norm(u - (u @ w) / (w @ w) * w)
    expected = 3.75 - np.sqrt(3.75) * (1 + np.sqrt(0.75)) - 0.1 * D * D
    assert quantitative_triangle_slack(u, v)[0] == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("u", [[-1.0, 0.0], [0.5, 1.0]])
def test_non_future_causal_input_raises(u):
    with pytest.raises(GeometryError):
        quantitative_triangle_slack(u, [1.0, 0.0])


def test_sweep_is_reproducible_and_thread_independent():
    a = triangle_sweep(3, 20_000, seed=5, chunk=5000, threads=1)
    b = triangle_sweep(3, 20_000, seed=5, chunk=5000, threads=3)
    assert a.to_dict() == b.to_dict()
    assert a.violations == 0 and a.empirical_best_constant >= 0.1


def test_parallel_sampler_has_no_distance_term():
    rep = triangle_sweep(2, 10_000, seed=1, sampler="parallel")
    assert rep.violations == 0 and rep.empirical_best_constant is None


def test_form_constant_standard_product():
    A, distortion = form_constant(minkowski(3))
    assert A == pytest.approx(0.1) and distortion == pytest.approx(1.0)


def test_form_transform_pulls_back_the_standard_product(rng):
    m = np.diag([2.0, -0.5, -3.0])
    m[0, 1] = m[1, 0] = 0.3
    T = form_transform(m)
    np.testing.assert_allclose(T.T @ minkowski_matrix(3) @ T, m, atol=1e-12)


def test_chord_gap_of_bent_polygon():
    pts = np.array([[0.0, 0.0], [1.0, 0.5], [2.0, 0.0]])
    gap = chord_length_gap(SampledCurve(np.arange(3.0), pts), minkowski(2))
    assert gap.gap == pytest.approx(2.0 - 2 * np.sqrt(0.75))
    assert gap.D == pytest.approx(0.5)
    assert gap.bound == pytest.approx(0.1 * 0.25 / 2.0)
    assert gap.ok


def test_chord_gap_rejects_spacelike_polygon():
    pts = np.array([[0.0, 0.0], [0.1, 0.5]])
    with pytest.raises(GeometryError):
        chord_length_gap(SampledCurve(np.arange(2.0), pts), minkowski(2))


def test_length_comparison_on_conformal_vs_flat():
    conf = zoo.conformal_field(0.2, 3)
    flat = MetricField.constant(minkowski_matrix(3))
    t = np.linspace(0, 1, 9)
    curve = SampledCurve(t, np.outer(1 - t, [-0.3, 0, 0]) + np.outer(t, [0.3, 0.2, 0.1]))
    res = length_comparison_check(curve, conf, flat)
    assert res["ok"] and res["difference"] > 0


def test_velocity_lower_bound_constant_limits():
    assert velocity_lower_bound_constant(0.0, 4.0) == 1.0
    assert velocity_lower_bound_constant(1.0, 1.0) == pytest.approx(1 / (np.e - 1))
