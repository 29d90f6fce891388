import numpy as np
import pytest

from lipcausal.curves import NotCausalError, SampledCurve


def test_line_length_and_bilipschitz():
    t = np.linspace(0, 1, 11)
    c = SampledCurve(t, np.outer(t, [3.0, 4.0]))
    assert c.euclidean_length() == pytest.approx(5.0)
    assert c.bilipschitz_constant() == pytest.approx(0.2, rel=1e-9)   # |gamma(t) - gamma(s)| = 5|t - s|


def test_from_function_and_evaluate():
    c = SampledCurve.from_function(lambda s: [s, s ** 2], np.linspace(0, 1, 101),
                                   derivative=lambda s: [1.0, 2 * s])
    np.testing.assert_allclose(c.evaluate(c.params[[0, 50, 100]]), c.points[[0, 50, 100]])
    assert c.evaluate(np.array([0.505]))[0, 1] == pytest.approx(0.505 ** 2, abs=1e-12)   # Hermite data reproduce a quadratic


def test_arclength_reparametrization_has_unit_speed():
    s = np.linspace(0, 2, 401)
    c = SampledCurve(s, np.stack([s, 0.25 * s ** 2], axis=1))
    a = c.arclength_reparametrized(samples=801)
    steps = np.linalg.norm(np.diff(a.points, axis=0), axis=1)
    ds = np.diff(a.params)
    np.testing.assert_allclose(steps / ds, 1.0, atol=1e-5)
    assert a.arclength


def test_spacelike_curve_is_rejected(minkowski3):
    t = np.linspace(0, 1, 5)
    c = SampledCurve(t, np.outer(t, [0.1, 1.0, 0.0]))
    assert not c.is_causal(minkowski3)
    with pytest.raises(NotCausalError):
        c.check_causal(minkowski3)


def test_timelike_curve_is_causal(minkowski3):
    t = np.linspace(0, 1, 5)
    assert SampledCurve(t, np.outer(t, [1.0, 0.5, 0.1])).is_causal(minkowski3)


def test_resampled_keeps_endpoints():
    t = np.linspace(0, 1, 21)
    c = SampledCurve(t, np.stack([t, np.sin(t)], axis=1))
    r = c.resampled(np.linspace(0, 1, 7))
    np.testing.assert_allclose(r.points[[0, -1]], c.points[[0, -1]])
