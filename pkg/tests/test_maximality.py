import numpy as np
import pytest

from lipcausal import zoo
from lipcausal.curves import SampledCurve
from lipcausal.maximality import (NotCausallyRelatedError, causality_projection,
                                  local_maximality_probe, lorentzian_length, maximize_causal_curve,
                                  polygon_length, shoot_geodesic, smooth_length)

X, Y = [-0.4, 0.0, 0.0], [0.4, 0.3, 0.1]


def test_polygon_length_of_straight_line(minkowski3):
    nodes = np.linspace(X, Y, 9)
    w = np.subtract(Y, X)
    assert polygon_length(minkowski3, nodes) == pytest.approx(np.sqrt(w[0] ** 2 - w[1] ** 2 - w[2] ** 2))


def test_minkowski_maximizer_is_the_chord(minkowski3):
    rng = np.random.default_rng(0)
    init = np.linspace(X, Y, 17)
    init[1:-1, 1:] += 0.02 * rng.standard_normal((15, 2))
    res = maximize_causal_curve(minkowski3, X, Y, 16, init_nodes=init)
    assert res.converged
    assert res.length == pytest.approx(np.sqrt(0.54), abs=1e-12)   # |(0.8, 0.3, 0.1)|
    # nodes may slide along the chord (parametrization freedom); check the trace
    w = np.subtract(Y, X) / np.linalg.norm(np.subtract(Y, X))
    rel = res.curve.points - np.asarray(X)
    assert np.max(np.linalg.norm(rel - np.outer(rel @ w, w), axis=1)) <= 1e-6


def test_unrelated_endpoints_raise(minkowski3):
    with pytest.raises(NotCausallyRelatedError):
        maximize_causal_curve(minkowski3, [0, 0, 0], [0.1, 0.5, 0])


def test_lightlike_endpoints_have_zero_length(minkowski3):
    res = maximize_causal_curve(minkowski3, [-0.4, 0, 0], [0.4, 0.8, 0], 16)
    assert res.length <= 1e-7


def test_shooting_hits_target(conformal3):
    traj, info = shoot_geodesic(conformal3, X, Y, return_info=True)
    assert np.linalg.norm(traj.xs[-1] - np.asarray(Y)) <= 1e-8
    assert info["residual"] <= 1e-8


def test_maximizer_converges_to_geodesic_at_second_order(conformal3):
    traj = shoot_geodesic(conformal3, X, Y)
    ref, _ = smooth_length(conformal3, traj.position, traj.velocity, traj.taus)
    errs = [abs(maximize_causal_curve(conformal3, X, Y, m).length - ref) for m in (8, 16, 32)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.7)
    assert errs[-1] <= 2e-4


def test_causality_projection_restores_causality(minkowski3):
    nodes = np.linspace(X, Y, 9)
    nodes[4, 1] += 0.3                       # makes two segments spacelike
    fixed, ok = causality_projection(minkowski3, nodes)
    assert ok
    assert SampledCurve(np.arange(9.0), fixed).is_causal(minkowski3)
    np.testing.assert_allclose(fixed[[0, -1]], nodes[[0, -1]])


def test_probe_finds_improvements_on_a_bent_path(minkowski3):
    t = np.linspace(0, 1, 201)
    pts = np.outer(1 - t, X) + np.outer(t, Y)
    pts[:, 2] += 0.05 * np.sin(np.pi * t)
    res = local_maximality_probe(SampledCurve(t, pts), minkowski3, trials=200, seed=3)
    assert res["improving"] > 0


def test_probe_finds_no_improvement_on_the_chord(minkowski3):
    t = np.linspace(0, 1, 201)
    pts = np.outer(1 - t, X) + np.outer(t, Y)
    res = local_maximality_probe(SampledCurve(t, pts), minkowski3, trials=300, seed=4)
    assert res["improving"] == 0


def test_lorentzian_length_of_sampled_line(minkowski3):
    t = np.linspace(0, 1, 33)
    pts = np.outer(1 - t, X) + np.outer(t, Y)
    assert lorentzian_length(SampledCurve(t, pts), minkowski3) == pytest.approx(np.sqrt(0.54))


def test_maximizer_across_rosen_impulse_matches_shooting(rosen):
    # the metric has a kink on the wave front, so the gradient residual does
    # not vanish at the maximum and the iteration ends by stalling
    x, y = [-0.2, -0.1, 0.0, 0.0], [0.2, 0.05, 0.05, 0.02]
    res = maximize_causal_curve(rosen, x, y, 32)
    traj = shoot_geodesic(rosen, x, y)
    ref, _ = smooth_length(rosen, traj.position, traj.velocity, traj.taus)
    assert res.converged and res.stop_reason == "stall"
    assert abs(res.length - ref) <= 2e-4
