import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lipcausal import zoo
from lipcausal.core import (BilinearForm, GeometryError, MetricField, SignatureError, classify,
                            cone_inclusion_check, estimate_lipschitz, lorentz_norm, lorentz_product,
                            min_time_growth, minkowski, minkowski_matrix, uniform_ball,
                            widened_metric)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def future_timelike(n):
    """Hypothesis strategy for future timelike vectors of the standard product."""
    return st.tuples(st.floats(0.05, 5.0), st.lists(st.floats(-1, 1), min_size=n - 1, max_size=n - 1),
                     st.floats(0.0, 0.95)).map(_build_timelike)


def _build_timelike(args):
    t, s, frac = args
    s = np.asarray(s, float)
    ns = np.linalg.norm(s)
    s = s / ns * frac * t if ns > 0 else s
    return np.concatenate([[t], s])


def test_bilinear_form_rejects_non_lorentzian():
    with pytest.raises(SignatureError):
        BilinearForm(np.eye(3))
    with pytest.raises(SignatureError):
        BilinearForm(-np.eye(3))


def test_minkowski_matrix_signature():
    m = minkowski_matrix(4)
    assert np.array_equal(np.diag(m), [1, -1, -1, -1])
    assert minkowski(4).dim == 4


@pytest.mark.parametrize("v, kind", [([1, 0], "timelike"), ([1, 1], "null"), ([0, 1], "spacelike"),
                                     ([1, -0.5], "timelike")])
def test_classify(v, kind):
    assert classify(minkowski(2), v) == kind


@given(st.lists(finite, min_size=3, max_size=3), st.lists(finite, min_size=3, max_size=3))
def test_lorentz_product_matches_direct_arithmetic(u, v):
    u, v = np.array(u), np.array(v)
    direct = u[0] * v[0] - u[1] * v[1] - u[2] * v[2]
    assert lorentz_product(minkowski(3), u, v) == pytest.approx(direct, abs=1e-9)


def test_lorentz_product_batched(rng):
    u, v = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    batched = lorentz_product(minkowski(3), u, v)
    single = [lorentz_product(minkowski(3), a, b) for a, b in zip(u, v)]
    np.testing.assert_allclose(batched, single)


def test_dimension_mismatch_raises():
    with pytest.raises(GeometryError):
        lorentz_product(minkowski(3), [1, 0], [1, 0])


@given(future_timelike(3), future_timelike(3))
def test_reverse_triangle_inequality(u, v):
    g = minkowski(3)
    assert lorentz_norm(g, u + v) >= lorentz_norm(g, u) + lorentz_norm(g, v) - 1e-9


@given(future_timelike(3), st.floats(0.1, 10))
def test_norm_homogeneity(u, lam):
    g = minkowski(3)
    assert lorentz_norm(g, lam * u) == pytest.approx(lam * lorentz_norm(g, u), rel=1e-9, abs=1e-12)


def test_widened_metric_contains_nearby_cones(rng):
    L, h = 0.3, 0.1
    gh = widened_metric(L, h, 3)
    kink = zoo.holder_kink_field(1.0, L, 3)
    x = uniform_ball(rng, 2000, 3, h)
    v = rng.normal(size=(2000, 3))
    q = lorentz_product(kink.metric(x), v, v)
    causal = q > 0
    assert np.all(lorentz_product(gh, v[causal], v[causal]) > 0)


def test_cone_inclusion_check_passes_for_lipschitz_kink():
    kink = zoo.holder_kink_field(1.0, 0.3, 3)
    rep = cone_inclusion_check(kink, 0.3, 0.1, samples=20_000, seed=1)
    assert rep.violations == 0
    assert rep.max_deviation <= rep.deviation_bound


def test_estimate_lipschitz_matches_analytic_constant():
    kink = zoo.holder_kink_field(1.0, 0.3, 3)
    est = estimate_lipschitz(kink, pairs=20_000, seed=0)
    assert 0.9 * 0.3 <= est <= 0.3 * (1 + 1e-6)


def test_constant_field_is_normalized_and_flat():
    f = MetricField.constant(minkowski_matrix(3))
    assert f.is_origin_normalized()
    np.testing.assert_allclose(f.dmetric(np.array([0.1, 0.2, 0.3])), 0.0)
    assert min_time_growth(f, points=100, seed=0) >= 0.5


def test_uniform_ball_radius(rng):
    pts = uniform_ball(rng, 1000, 4, 0.7)
    assert np.all(np.linalg.norm(pts, axis=1) <= 0.7)
