import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import qp_grid_oracle
from safenav import qp
from safenav.safety_filter import (
    N_SCAN_RAYS,
    BoundingCircle,
    FilterParams,
    SafetyFilter,
    boundary_rows,
    cbf_terms,
    clf_terms,
    estimate_bounding_circle,
    scan,
)
from safenav.world import Obstacle
from scenes import random_circle

FAR = 50.0


def ranges_with(hits: dict[int, float]) -> np.ndarray:
    r = np.full(N_SCAN_RAYS, FAR)
    for i, d in hits.items():
        r[i] = d
    return r


# --- bounding circle ------------------------------------------------------------------

def test_circle_from_two_points():
    c = estimate_bounding_circle(ranges_with({0: 1.0, 6: 1.0}), (0.0, 0.0), 8.0, 0.5, None, 0.1, 3.0)
    assert c.valid
    np.testing.assert_allclose(c.center, [0.5, 0.5], atol=1e-12)
    assert c.radius == pytest.approx(math.sqrt(0.5) + 0.5)


def test_no_active_returns():
    c = estimate_bounding_circle(ranges_with({0: 9.0}), (0.0, 0.0), 8.0, 0.5, None, 0.1, 3.0)
    assert not c.valid


def test_same_cloud_zero_rates():
    r = ranges_with({0: 2.0, 1: 2.1, 2: 2.3})
    a = estimate_bounding_circle(r, (5.0, 5.0), 8.0, 0.5, None, 0.1, 3.0)
    b = estimate_bounding_circle(r, (5.0, 5.0), 8.0, 0.5, a, 0.1, 3.0)
    np.testing.assert_array_equal(b.center_rate, [0.0, 0.0])
    assert b.radius_rate == 0.0


def test_rates_are_differenced_and_clamped():
    r = ranges_with({0: 2.0, 6: 2.0})
    a = estimate_bounding_circle(r, (0.0, 0.0), 8.0, 0.5, None, 0.1, 3.0)
    b = estimate_bounding_circle(r, (0.1, 0.0), 8.0, 0.5, a, 0.1, 3.0)
    np.testing.assert_allclose(b.center_rate, [1.0, 0.0], atol=1e-9)
    c = estimate_bounding_circle(r, (5.0, 0.0), 8.0, 0.5, b, 0.1, 3.0)
    np.testing.assert_allclose(c.center_rate, [3.0, 0.0])


def test_rates_reset_on_point_count_jump():
    a = estimate_bounding_circle(ranges_with({0: 2.0, 1: 2.0}), (0.0, 0.0), 8.0, 0.5, None, 0.1, 3.0)
    many = ranges_with({i: 2.0 for i in range(6)})
    b = estimate_bounding_circle(many, (0.0, 0.0), 8.0, 0.5, a, 0.1, 3.0)
    np.testing.assert_array_equal(b.center_rate, [0.0, 0.0])
    assert b.radius_rate == 0.0


def test_estimator_rejects_wrong_scan_length():
    with pytest.raises(ValueError):
        estimate_bounding_circle(np.ones(9), (0, 0), 8.0, 0.5, None, 0.1, 3.0)


def test_scan_ignores_walls():
    r = scan(np.array([0.5, 0.5]), [], 15.0)
    np.testing.assert_array_equal(r, np.full(N_SCAN_RAYS, 15.0))
    r = scan(np.array([0.0, 0.0]), [Obstacle(np.array([5.0, 0.0]), 1.0)], 15.0)
    assert r[0] == pytest.approx(4.0)


# --- rows -----------------------------------------------------------------------------

def test_clf_terms():
    V, g, co, rhs = clf_terms((10.0, 0.0), (0.0, 0.0), (0.0, 0.0), 1.0)
    assert V == pytest.approx(50.0)
    assert g == pytest.approx(math.sqrt(50.0))
    assert rhs == pytest.approx(-math.sqrt(50.0))
    np.testing.assert_array_equal(co, [10.0, 0.0, -1.0, 0.0])
    V, g, co, rhs = clf_terms((3.0, 4.0), (3.0, 4.0), (1.0, 1.0), 1.0)
    assert V == g == 0.0
    np.testing.assert_array_equal(co[:2], [0.0, 0.0])


def test_cbf_terms():
    circle = BoundingCircle(np.zeros(2), 3.0, np.zeros(2), 0.0, True)
    h, co, rhs = cbf_terms((5.0, 0.0), circle, 1.0)
    assert h == pytest.approx(16.0)
    # radially outward at speed s: slack = 2|e|s + k h
    s = 1.5
    assert co @ np.array([s, 0.0, 0.0, 0.0]) - rhs == pytest.approx(2 * 5.0 * s + 16.0)


def test_cbf_on_boundary():
    circle = BoundingCircle(np.zeros(2), 5.0, np.array([0.2, 0.1]), 0.3, True)
    h, co, rhs = cbf_terms((3.0, 4.0), circle, 2.0)
    assert h == pytest.approx(0.0, abs=1e-12)
    # row: 2 e.(v - c_dot) >= 2 R R_dot
    assert rhs == pytest.approx(2 * (3 * 0.2 + 4 * 0.1) + 2 * 5.0 * 0.3)


def test_boundary_rows():
    rows = boundary_rows((1.0, 50.0), 100.0, 100.0, 1.0, 2.0)
    left = rows[0]
    np.testing.assert_array_equal(left[0], [1.0, 0.0, 0.0, -1.0])
    assert left[1] == 0.0  # x = m: v_x >= delta2
    z = np.zeros(4)
    for co, rhs, _ in boundary_rows((50.0, 50.0), 100.0, 100.0, 1.0, 10.0):
        assert co @ z >= rhs
    co, rhs, _ = boundary_rows((0.5, 50.0), 100.0, 100.0, 1.0, 1.0)[0]
    assert rhs == pytest.approx(0.5)  # outside the margin: needs positive v_x


@pytest.mark.parametrize("k,ok", [(0.0, False), (-1.0, False), (2 * math.sqrt(2) + 1e-6, False),
                                  (2 * math.sqrt(2), True), (0.5, True)])
def test_gain_guard(k, ok):
    kw = dict(v_max=3.0, v_target_max=1.0, k_clf=k)
    if ok:
        assert FilterParams(**kw).k_clf == k
    else:
        with pytest.raises(ValueError):
            FilterParams(**kw)


def test_default_clf_gain():
    assert FilterParams(v_max=3.0, v_target_max=1.0).k_clf == pytest.approx(0.9 * math.sqrt(2) * 2.0)
    with pytest.raises(ValueError):
        FilterParams(v_max=1.0, v_target_max=1.0)


# --- filter ---------------------------------------------------------------------------

PARAMS = FilterParams(v_max=3.0, margin=0.5, d_safe=0.5, activation_distance=3.0)


def test_empty_scan_passes_nominal():
    f = SafetyFilter(PARAMS, 100.0, 100.0)
    v_des = np.array([3.0, 0.0])
    v, d = f.filter_velocity(v_des, (50.0, 50.0), (60.0, 50.0), (0.0, 0.0), np.full(N_SCAN_RAYS, 15.0), 0.1)
    np.testing.assert_array_equal(v, v_des)
    assert not d.intervened and math.isnan(d.h_obs)


def test_at_target_passes_nominal():
    f = SafetyFilter(PARAMS, 100.0, 100.0)
    v_des = np.array([0.3, -0.2])
    v, _ = f.filter_velocity(v_des, (50.0, 50.0), (50.0, 50.0), (0.0, 0.0), np.full(N_SCAN_RAYS, 15.0), 0.1)
    np.testing.assert_array_equal(v, v_des)


def test_nominal_clipped_to_speed_limit():
    f = SafetyFilter(PARAMS, 100.0, 100.0)
    v, _ = f.filter_velocity([30.0, 0.0], (50.0, 50.0), (90.0, 50.0), (0, 0), np.full(N_SCAN_RAYS, 15.0), 0.1)
    np.testing.assert_allclose(v, [3.0, 0.0])


def test_deflection_matches_grid_oracle():
    # heading straight at a static circle 0.3 beyond its radius; target at the UAV so the
    # tracking row is degenerate and only the barrier shapes the answer
    f = SafetyFilter(PARAMS, 100.0, 100.0)
    p_a = np.array([50.0, 50.0])
    circle = BoundingCircle(np.array([52.3, 50.2]), 2.0, np.zeros(2), 0.0, True)
    v_des = np.array([3.0, 0.0])
    v, d = f.filter_with_circle(v_des, p_a, p_a, (0.0, 0.0), circle)
    assert d.intervened and "obstacle" in d.active
    e = p_a - circle.center
    h = e @ e - circle.radius**2
    assert 2 * e @ v + PARAMS.k_cbf * h >= -1e-8
    problem, _, _ = f.build_problem(v_des, p_a, p_a, (0.0, 0.0), circle)
    sol = qp.solve(problem)
    grid, _ = qp_grid_oracle(problem.v_des, problem.lam, problem.G, problem.h, problem.v_max,
                             resolution=0.01, zoom=4)
    assert sol.objective <= grid + 1e-9
    assert grid - sol.objective <= 1e-3


def _scene(rng, velocity_constraint=True):
    params = FilterParams(v_max=3.0, k_cbf=float(rng.uniform(0.3, 2.0)), margin=0.5,
                          velocity_constraint=velocity_constraint)
    f = SafetyFilter(params, 100.0, 100.0)
    p_a = rng.uniform(0.3, 99.7, 2) if rng.random() < 0.3 else rng.uniform(5, 95, 2)
    p_t = p_a + rng.normal(0, 20, 2)
    circle = random_circle(rng, p_a) if rng.random() < 0.8 else BoundingCircle()
    v_des = rng.uniform(0, 3.0) * np.array([math.cos(a := rng.uniform(-math.pi, math.pi)), math.sin(a)])
    return f, p_a, p_t, circle, v_des


def test_minimal_intervention_on_feasible_scenes():
    rng = np.random.default_rng(0)
    found = 0
    while found < 1000:
        f, p_a, p_t, circle, _ = _scene(rng)
        # aim at the target fast enough that the tracking row can hold
        e = p_t - p_a
        v_des = 3.0 * e / np.linalg.norm(e) * rng.uniform(0.9, 1.0)
        problem, _, _ = f.build_problem(v_des, p_a, p_t, np.zeros(2), circle)
        if problem.violation(np.r_[v_des, 0.0, 0.0]) > 0:
            continue
        found += 1
        v, d = f.filter_with_circle(v_des, p_a, p_t, np.zeros(2), circle)
        np.testing.assert_array_equal(v, v_des)
        assert not d.intervened
        # the solver agrees with the fast path
        np.testing.assert_allclose(qp.solve(problem).v, v_des, atol=1e-9)


@pytest.mark.parametrize("velocity_constraint", [True, False])
def test_hard_row_and_speed_bound(velocity_constraint):
    rng = np.random.default_rng(1)
    for _ in range(1000):
        f, p_a, p_t, circle, v_des = _scene(rng, velocity_constraint)
        v, d = f.filter_with_circle(v_des, p_a, p_t, np.zeros(2), circle)
        assert np.hypot(*v) <= 3.0 + 1e-8
        if circle.valid and d.status != "fallback" and velocity_constraint:
            h, co, rhs = cbf_terms(p_a, circle, f.params.k_cbf)
            assert co[:2] @ v - rhs >= -1e-8


def test_fallback_is_radial_escape_at_full_speed():
    # circle centre receding faster than the UAV can follow: the hard row has no solution in the ball
    f = SafetyFilter(PARAMS, 100.0, 100.0)
    p_a = np.array([50.0, 50.0])
    circle = BoundingCircle(np.array([47.0, 50.0]), 2.5, np.array([3.0, 0.0]), 3.0, True)
    v, d = f.filter_with_circle(np.zeros(2), p_a, (50.0, 80.0), (0.0, 0.0), circle)
    assert d.status == "fallback" and d.intervened
    np.testing.assert_allclose(v, [3.0, 0.0])


@pytest.mark.parametrize("k_cbf", [0.5, 1.0, 5.0, 10.0])
def test_forward_invariance_fixed_circle(k_cbf):
    # discrete-time invariance needs k_cbf * dt <= 1
    dt = 0.1
    rng = np.random.default_rng(int(k_cbf * 10))
    params = FilterParams(v_max=3.0, k_cbf=k_cbf, margin=0.0, d_safe=0.0)
    f = SafetyFilter(params, 100.0, 100.0)
    circle = BoundingCircle(np.array([50.0, 50.0]), 5.0, np.zeros(2), 0.0, True)
    p = np.array([40.0, 50.0])
    target = np.array([60.0, 50.0])
    for step in range(1000):
        if step % 100 == 0:
            target = rng.uniform(30, 70, 2)
        mode = step % 3
        if mode == 0:
            v_des = 3.0 * (circle.center - p) / np.linalg.norm(circle.center - p)
        elif mode == 1:
            v_des = rng.uniform(-3, 3, 2)
        else:
            v_des = 3.0 * (target - p) / max(np.linalg.norm(target - p), 1e-9)
        v, d = f.filter_with_circle(v_des, p, target, np.zeros(2), circle)
        assert d.status != "fallback"
        p = p + v * dt
        e = p - circle.center
        assert e @ e - circle.radius**2 >= -1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_reports_slacks_and_value(seed):
    rng = np.random.default_rng(seed)
    f, p_a, p_t, circle, v_des = _scene(rng)
    _, d = f.filter_with_circle(v_des, p_a, p_t, np.zeros(2), circle)
    assert d.V == pytest.approx(0.5 * float((p_a - p_t) @ (p_a - p_t)))
    if circle.valid:
        assert d.h_obs == pytest.approx(float((p_a - circle.center) @ (p_a - circle.center)) - circle.radius**2)
