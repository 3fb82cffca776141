import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import optimal_values_enumerate
from safenav.observe import Observation
from safenav.reward import (
    RewardParams,
    ToyMdp,
    base_reward,
    baseline_shaping,
    grid_distance_potential,
    gridworld,
    pbrs_invariance_check,
    potential,
    random_mdp,
    shaping_reward,
    solve_mdp,
    unique_argmax,
)


def obs(d=10.0, alpha=0.0, rays=None):
    rays = np.zeros(9) if rays is None else np.asarray(rays, float)
    return Observation(np.zeros(18), d, alpha, rays)


P = RewardParams(v_c=3.0)


def test_base_reward_cases():
    assert base_reward("success", 3.0, P) == pytest.approx(P.k_T)
    assert base_reward("collision", 3.0, P) == pytest.approx(-P.k_C)
    assert base_reward("none", 5.0, RewardParams(k_V=0.1, v_c=3.0)) == pytest.approx(0.2)


@given(v=st.floats(0, 10), dv=st.floats(0.01, 5))
def test_base_reward_linear_in_speed(v, dv):
    slope = (base_reward("none", v + dv, P) - base_reward("none", v, P)) / dv
    assert slope == pytest.approx(P.k_V, rel=1e-6)


def test_default_threshold_speed():
    assert RewardParams().threshold_speed(10.0) == pytest.approx(3.0)
    assert RewardParams(v_c=2.0).threshold_speed(10.0) == 2.0
    with pytest.raises(ValueError):
        base_reward("none", 1.0, RewardParams())


def test_shaping_distance_term():
    p = RewardParams(k_D=1.0, k_Theta=1e-12, k_obs=1e-12)
    assert shaping_reward(obs(d=10), obs(d=8), p) == pytest.approx(2.0)


def test_shaping_alignment_term():
    p = RewardParams(k_D=1e-12, k_Theta=0.1, k_obs=1e-12)
    r = shaping_reward(obs(alpha=math.pi / 2), obs(alpha=math.pi / 4), p)
    assert r == pytest.approx(0.1 * (math.pi / 4) * math.pi, abs=1e-9)
    assert r == pytest.approx(0.2467, abs=1e-4)


def test_shaping_clearance_term():
    p = RewardParams(k_D=1e-12, k_Theta=1e-12, k_obs=0.5)
    r = shaping_reward(obs(rays=np.ones(9)), obs(rays=2 * np.ones(9)), p)
    assert r == pytest.approx(4.5)


def test_shaping_identity_is_zero():
    o = obs(d=12.0, alpha=0.4, rays=np.arange(9))
    assert shaping_reward(o, o, RewardParams()) == 0.0


@settings(max_examples=50)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 30))
def test_shaping_telescopes(seed, n):
    rng = np.random.default_rng(seed)
    traj = [obs(rng.uniform(0, 100), rng.uniform(0, math.pi), rng.uniform(0, 40, 9)) for _ in range(n)]
    total = sum(shaping_reward(a, b, P) for a, b in zip(traj, traj[1:]))
    assert total == pytest.approx(potential(traj[-1], P) - potential(traj[0], P), abs=1e-9)


def test_baseline_shaping():
    p = RewardParams(variant="baseline")
    far = baseline_shaping(obs(d=40.0, rays=np.full(9, 40.0)), p, 40.0)
    assert far == pytest.approx(-p.k_dist_pen)
    near = baseline_shaping(obs(d=40.0, rays=np.r_[np.full(8, 40.0), 1.0]), p, 40.0)
    assert near == pytest.approx(-p.k_dist_pen - p.k_near)


@pytest.mark.parametrize("kw", [dict(k_T=0), dict(k_obs=-1), dict(gamma=1.0), dict(v_c=-1), dict(variant="x")])
def test_param_validation(kw):
    with pytest.raises(ValueError):
        RewardParams(**kw)


# --- tabular invariance -------------------------------------------------------------

def test_solver_matches_policy_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(5):
        mdp = random_mdp(rng, n_states=5, n_actions=3)
        V, _ = solve_mdp(mdp, 0.9)
        np.testing.assert_allclose(V, optimal_values_enumerate(mdp.P, mdp.R, 0.9), atol=1e-10)


def test_gridworld_values():
    # deterministic 5x5 grid: from the start corner the goal is 8 moves away
    V, _ = solve_mdp(gridworld(5), 0.99)
    g = 0.99
    expected = sum(-g**k for k in range(7)) + g**7 * 9.0
    assert V[0] == pytest.approx(expected, abs=1e-9)
    assert V[24] == pytest.approx(0.0)


def test_gridworld_pbrs():
    assert pbrs_invariance_check(gridworld(5), grid_distance_potential(5), 0.99, 1e-9)


def test_zero_potential():
    mdp = random_mdp(np.random.default_rng(1))
    assert pbrs_invariance_check(mdp, np.zeros(mdp.n_states), 0.9, 1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_random_potentials(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng)
    phi = rng.normal(0, 5, mdp.n_states)
    assert pbrs_invariance_check(mdp, phi, 0.95, 1e-9)


def test_shaped_values_shift_by_minus_phi():
    rng = np.random.default_rng(3)
    mdp = random_mdp(rng)
    phi = rng.normal(0, 5, mdp.n_states)
    V, Q = solve_mdp(mdp, 0.9)
    V2, Q2 = solve_mdp(mdp.shaped(phi, 0.9), 0.9)
    np.testing.assert_allclose(V2, V - phi, atol=1e-9)
    np.testing.assert_allclose(Q2, Q - phi[:, None], atol=1e-9)


def test_non_potential_shaping_changes_policy():
    # two actions: stay in state 0 or go to state 1, which pays 1 per step
    P = np.zeros((2, 2, 2))
    P[:, 0, 0] = 1.0
    P[:, 1, 1] = 1.0
    R = np.zeros((2, 2, 2))
    R[:, 1, :] = 1.0
    mdp = ToyMdp(P, R)
    _, Q = solve_mdp(mdp, 0.9)
    assert pbrs_invariance_check(mdp, np.array([1.0, -1.0]), 0.9, 1e-9)
    # an action bonus is not a potential difference and flips the greedy choice
    bonus = R.copy()
    bonus[:, 0, :] += 5.0
    _, Qb = solve_mdp(ToyMdp(P, bonus), 0.9)
    assert not np.array_equal(Q.argmax(axis=1), Qb.argmax(axis=1))


def test_unique_argmax_mask():
    Q = np.array([[1.0, 1.0], [2.0, 1.0], [0.0, 0.0 + 1e-12]])
    np.testing.assert_array_equal(unique_argmax(Q), [False, True, False])


def test_gamma_one_rejected():
    with pytest.raises(ValueError):
        solve_mdp(random_mdp(np.random.default_rng(0)), 1.0)
