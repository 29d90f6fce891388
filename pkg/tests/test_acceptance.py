"""
Acceptance suite: the ten end-to-end criteria at their stated tolerances.

Each test records a one-line PASS/FAIL verdict (printed in the pytest
terminal summary and to stdout) before asserting. Runtime limits are
asserted where the criterion states one.
"""

import time

import numpy as np
import pytest

from lipcausal import zoo
from lipcausal.connection import christoffel_bound
from lipcausal.core import MetricField, cone_inclusion_check, minkowski, uniform_ball
from lipcausal.curves import SampledCurve
from lipcausal.filippov import (FilippovState, c11_check, integrate_geodesic, limit_experiment,
                                reparametrize_constant_speed, speed_deviation,
                                velocity_upper_bound_check)
from lipcausal.inequalities import (chord_length_gap, length_comparison_check, triangle_sweep,
                                    velocity_lower_bound_check)
from lipcausal.maximality import (local_maximality_probe, maximize_causal_curve, shoot_geodesic,
                                  smooth_length)
from lipcausal.regularity import estimate_holder_exponent, regularity_of_maximizer, synthetic_holder_curve

from conftest import ACCEPTANCE_LINES, ROSEN_V0, ROSEN_X0


def verdict(number: int, ok: bool, detail: str) -> None:
    line = f"[{number}] {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def _state(x, v):
    return FilippovState(np.asarray(x, float), np.asarray(v, float))


# zoo geodesics used by several criteria: (field, x0, v0, tau_end)
def zoo_geodesics():
    return {
        "minkowski": (zoo.minkowski_field(3), [-0.3, 0.0, 0.0], [1.0, 0.3, 0.1], 0.6),
        "conformal": (zoo.conformal_field(0.2, 3), [-0.3, 0.0, 0.0], [1.0, 0.3, 0.1], 0.6),
        "rosen_wave": (zoo.rosen_wave_field(), ROSEN_X0, ROSEN_V0, 0.3),
        "holder_kink": (zoo.holder_kink_field(1.0, 0.3, 3), [-0.3, -0.2, 0.0], [1.0, 0.5, 0.1], 0.6),
        "thin_shell": (zoo.thin_shell_field(), [-0.2, -0.1], [1.0, 0.4], 0.4),
    }


@pytest.fixture(scope="module")
def geodesics():
    out = {}
    for name, (field, x0, v0, T) in zoo_geodesics().items():
        out[name] = (field, integrate_geodesic(field, _state(x0, v0), T, 1e-3))
    return out


def test_criterion_01_quantitative_triangle_inequality():
    t0 = time.perf_counter()
    reports = [triangle_sweep(n, 10 ** 6, seed=100 + n) for n in (2, 3, 4, 5)]
    elapsed = time.perf_counter() - t0
    viol = sum(r.violations for r in reports)
    best = [r.empirical_best_constant for r in reports]
    ok = viol == 0 and all(b is not None and b >= 0.1 for b in best) and elapsed <= 60
    verdict(1, ok, f"violations={viol} best_constants={[round(b, 4) for b in best]} "
                   f"time={elapsed:.1f}s")
    assert ok


def test_criterion_02_chord_gap_on_polygons():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    bad, worst = 0, np.inf
    for _ in range(10_000):
        n = int(rng.integers(2, 5))
        k = int(rng.integers(2, 11))
        spatial = uniform_ball(rng, k, n - 1, 0.95)
        inc = np.hstack([np.ones((k, 1)), spatial]) * rng.uniform(0.01, 0.2, (k, 1))
        pts = np.vstack([np.zeros(n), np.cumsum(inc, axis=0)])
        gap = chord_length_gap(SampledCurve(np.arange(k + 1.0), pts), minkowski(n))
        bad += not gap.ok
        worst = min(worst, gap.gap - gap.bound)
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed <= 30
    verdict(2, ok, f"violations={bad} min(gap-bound)={worst:.3e} time={elapsed:.1f}s")
    assert ok


def _self_convergence_order(field, x0, v0, T, steps=(0.05, 0.025, 0.0125)):
    ends = []
    for h in steps:
        tr = integrate_geodesic(field, _state(x0, v0), T, h)
        ends.append(np.concatenate([tr.xs[-1], tr.vs[-1]]))
    return float(np.log2(np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2])))


def test_criterion_03_integrator_correctness():
    t0 = time.perf_counter()
    mk = zoo.minkowski_field(4)
    x0, v0 = np.array([0.0, 0.1, -0.1, 0.0]), np.array([1.0, 0.2, 0.3, -0.1])
    tr = integrate_geodesic(mk, _state(x0, v0), 0.7, 1e-2)
    line_err = float(np.max(np.abs(tr.xs - (x0 + tr.taus[:, None] * v0))))

    rw = zoo.rosen_wave_field()
    tr = integrate_geodesic(rw, _state(ROSEN_X0, ROSEN_V0), 0.3, 1e-3)
    X, V = zoo.rosen_wave_geodesic(ROSEN_X0, ROSEN_V0, tr.taus[-1:])
    pos_err = float(np.max(np.abs(tr.xs[-1] - X[0])))
    vel_err = float(np.max(np.abs(tr.vs[-1] - V[0])))
    crossed = len(tr.events) == 1 and tr.events[0].mode == "crossing"

    order_impulse = _self_convergence_order(rw, ROSEN_X0, ROSEN_V0, 0.3)
    order_smooth = _self_convergence_order(zoo.conformal_field(0.2, 3), [-0.3, 0.0, 0.0],
                                           [1.0, 0.3, 0.1], 0.6)
    elapsed = time.perf_counter() - t0
    ok = (line_err <= 1e-10 and pos_err <= 1e-6 and vel_err <= 1e-6 and crossed
          and order_impulse >= 2 and order_smooth >= 4 and elapsed <= 10)
    verdict(3, ok, f"line_err={line_err:.1e} rosen_pos={pos_err:.1e} rosen_vel={vel_err:.1e} "
                   f"order_impulse={order_impulse:.2f} order_smooth={order_smooth:.2f} "
                   f"time={elapsed:.1f}s")
    assert ok


def test_criterion_04_c11_regularity(geodesics):
    details, ok = [], True
    for name, (field, tr) in geodesics.items():
        res = c11_check(tr, field, slack=0.1)
        ok &= res["ok"]
        details.append(f"{name}:{res['measured']:.3g}<={res['bound']:.3g}")
    field, tr = geodesics["rosen_wave"]
    alpha = regularity_of_maximizer(tr, field).alpha_hat
    ok &= alpha >= 0.9
    verdict(4, ok, f"{' '.join(details)} rosen_alpha_hat={alpha:.3f}")
    assert ok


def test_criterion_05_holder_calibration():
    t0 = time.perf_counter()
    got = {}
    for beta in (0.25, 0.5, 0.75, 1.0):
        got[beta] = estimate_holder_exponent(synthetic_holder_curve(beta, 10_001)).alpha_hat
    elapsed = time.perf_counter() - t0
    ok = all(abs(a - b) <= 0.05 for b, a in got.items()) and elapsed <= 20
    verdict(5, ok, " ".join(f"beta={b}:{a:.3f}" for b, a in got.items()) + f" time={elapsed:.1f}s")
    assert ok


def test_criterion_06_maximality_geodesic_consistency():
    t0 = time.perf_counter()
    x, y = [-0.4, 0.0, 0.0], [0.4, 0.3, 0.1]
    details, ok = [], True
    for name, field in (("minkowski", zoo.minkowski_field(3)), ("conformal", zoo.conformal_field(0.2, 3))):
        res = maximize_causal_curve(field, x, y, 64)
        traj = shoot_geodesic(field, x, y)
        length, _ = smooth_length(field, traj.position, traj.velocity, traj.taus)
        probe = local_maximality_probe(traj.as_curve(), field, 1000, 1e-3, seed=1)
        diff = abs(res.length - length)
        ok &= diff <= 2e-4 and probe["improving"] == 0
        details.append(f"{name}: |L_max-L_shot|={diff:.1e} improving={probe['improving']}/1000")
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 120
    verdict(6, ok, "; ".join(details) + f" time={elapsed:.1f}s")
    assert ok


def test_criterion_07_velocity_bounds(geodesics):
    ok, worst_up, worst_lo = True, np.inf, np.inf
    for name, (field, tr) in geodesics.items():
        C = christoffel_bound(field)
        up = velocity_upper_bound_check(tr, C)
        lo = velocity_lower_bound_check(tr, field, C=C)
        ok &= up.ok and lo["ok"]
        worst_up, worst_lo = min(worst_up, up.min_slack), min(worst_lo, lo["margin"])
    maximized = [
        (zoo.minkowski_field(3), [-0.4, 0.0, 0.0], [0.4, 0.3, 0.1]),
        (zoo.conformal_field(0.2, 3), [-0.4, 0.0, 0.0], [0.4, 0.3, 0.1]),
        (zoo.rosen_wave_field(), [-0.2, -0.1, 0.0, 0.0], [0.2, 0.05, 0.05, 0.02]),
        (zoo.holder_kink_field(1.0, 0.3, 3), [-0.4, -0.2, 0.0], [0.4, 0.2, 0.1]),
        (zoo.thin_shell_field(), [-0.2, -0.1], [0.2, 0.1]),
    ]
    for field, x, y in maximized:
        res = maximize_causal_curve(field, x, y, 32)
        C = christoffel_bound(field)
        lo = velocity_lower_bound_check(res, field, C=C)
        up = velocity_upper_bound_check(reparametrize_constant_speed(res.curve, field), C)
        ok &= up.ok and lo["ok"]
        worst_up, worst_lo = min(worst_up, up.min_slack), min(worst_lo, lo["margin"])
    mk = zoo.minkowski_field(3)
    max_null_speed = 0.0
    for y in ([0.4, 0.8, 0.0], [0.4, 0.48, 0.64]):
        res = maximize_causal_curve(mk, [-0.4, 0.0, 0.0], y, 64)
        lo = velocity_lower_bound_check(res, mk)
        ok &= lo["lightlike"] and lo["ok"]
        max_null_speed = max(max_null_speed, lo["max_speed"])
    verdict(7, ok, f"min_upper_slack={worst_up:.3e} min_lower_margin={worst_lo:.3e} "
                   f"lightlike_max_speed={max_null_speed:.1e}")
    assert ok


def test_criterion_08_constant_speed_reparametrization(geodesics):
    ok, details = True, []
    for name in ("conformal", "rosen_wave", "holder_kink"):
        field, tr = geodesics[name]
        curve, info = reparametrize_constant_speed(tr, field, return_info=True)
        dev = speed_deviation(curve, field, info["ell"])["node"]
        again = reparametrize_constant_speed(curve, field)
        idem = float(np.max(np.abs(again.points - curve.points)))
        ok &= dev <= 1e-8 and idem <= 1e-9
        details.append(f"{name}: speed_dev={dev:.1e} idempotence={idem:.1e}")
    verdict(8, ok, "; ".join(details))
    assert ok


def test_criterion_09_limit_of_geodesics():
    res = limit_experiment(zoo.minkowski_field(2), [0.0, 0.0], [0.5, 0.5], checks=100, seed=9)
    ok = res["max_margin"] <= 1e-6 and res["checks"] == 100 and res["converging"]
    verdict(9, ok, f"max_margin={res['max_margin']:.1e} sup_distances="
                   f"{[round(d, 4) for d in res['sup_distances']]}")
    assert ok


def test_criterion_10_cone_widening_and_length_comparison():
    kink = zoo.holder_kink_field(1.0, 0.3, 3)
    rep = cone_inclusion_check(kink, kink.lipschitz_L, 0.1, 100_000, seed=3)
    flat = MetricField.constant(kink.metric(np.zeros(3)), domain_radius=kink.domain_radius)
    rng = np.random.default_rng(10)
    bad, worst = 0, np.inf
    for _ in range(1000):
        k = int(rng.integers(1, 6))
        start = uniform_ball(rng, 1, 3, 0.5)[0]
        spatial = uniform_ball(rng, k, 2, 0.6)
        inc = np.hstack([np.ones((k, 1)), spatial]) * rng.uniform(0.005, 0.05, (k, 1))
        pts = start + np.vstack([np.zeros(3), np.cumsum(inc, axis=0)])
        res = length_comparison_check(SampledCurve(np.arange(k + 1.0), pts), kink, flat)
        bad += not res["ok"]
        worst = min(worst, res["slack"])
    ok = rep.violations == 0 and bad == 0
    verdict(10, ok, f"cone_violations={rep.violations}/100000 comparison_violations={bad}/1000 "
                    f"min_slack={worst:.3e}")
    assert ok
