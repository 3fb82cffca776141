"""Base rewards, potential-based shaping terms and a tabular invariance check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .observe import Observation


@dataclass(frozen=True)
class RewardParams:
    k_T: float = 20.0
    k_C: float = 20.0
    k_V: float = 0.05
    k_D: float = 0.05
    k_Theta: float = 0.1
    k_obs: float = 0.005
    # Threshold speed; ``None`` means 0.3 * v_max of the world it is used in.
    v_c: float | None = None
    gamma: float = 0.99
    # "pbrs" (potential shaping) or "baseline" (heuristic distance/proximity terms).
    variant: str = "pbrs"
    # Baseline-only heuristic gains.
    k_dist_pen: float = 0.05
    k_near: float = 0.1
    near_fraction: float = 0.2

    def __post_init__(self) -> None:
        gains = (self.k_T, self.k_C, self.k_V, self.k_D, self.k_Theta, self.k_obs)
        if any(g <= 0 for g in gains):
            raise ValueError("reward gains must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.v_c is not None and self.v_c < 0:
            raise ValueError("v_c must be non-negative")
        if self.variant not in ("pbrs", "baseline"):
            raise ValueError("variant must be 'pbrs' or 'baseline'")

    def threshold_speed(self, v_max: float) -> float:
        return 0.3 * v_max if self.v_c is None else self.v_c


def base_reward(outcome: str, speed: float, params: RewardParams, v_c: float | None = None) -> float:
    """Terminal bonus/penalty plus the linear speed term ``k_V * (v - v_c)``."""
    v_c = params.v_c if v_c is None else v_c
    if v_c is None:
        raise ValueError("threshold speed v_c is unresolved")
    r = params.k_V * (speed - v_c)
    if outcome == "success":
        r += params.k_T
    elif outcome == "collision":
        r -= params.k_C
    return r


def shaping_reward(prev: Observation, cur: Observation, params: RewardParams) -> float:
    """Distance, alignment and clearance shaping on raw quantities (discount taken as 1)."""
    r_d = params.k_D * (prev.raw_d - cur.raw_d)
    r_theta = params.k_Theta * (abs(prev.raw_alpha) - abs(cur.raw_alpha)) * math.pi
    r_obs = params.k_obs * float(np.sum(cur.raw_rays - prev.raw_rays))
    return r_d + r_theta + r_obs


def potential(obs: Observation, params: RewardParams) -> float:
    """Sum of the three potentials whose one-step differences give ``shaping_reward``.

    The alignment potential carries the same factor of pi as the shaping term.
    """
    return (
        -params.k_D * obs.raw_d
        - params.k_Theta * math.pi * abs(obs.raw_alpha)
        + params.k_obs * float(np.sum(obs.raw_rays))
    )


def baseline_shaping(cur: Observation, params: RewardParams, r_cap: float) -> float:
    """Heuristic per-step terms without potential structure.

    A penalty proportional to the current distance to target and a fixed
    penalty whenever the nearest ray return falls inside ``near_fraction * r_cap``.
    """
    r = -params.k_dist_pen * cur.raw_d / r_cap
    if float(np.min(cur.raw_rays)) < params.near_fraction * r_cap:
        r -= params.k_near
    return r


# --- tabular check ---------------------------------------------------------


@dataclass
class ToyMdp:
    """Finite MDP: ``P[s, a, s']`` transition probabilities, ``R[s, a, s']`` rewards."""

    P: np.ndarray
    R: np.ndarray

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    def shaped(self, phi: np.ndarray, gamma: float) -> ToyMdp:
        F = gamma * phi[None, None, :] - phi[:, None, None]
        return ToyMdp(self.P, self.R + F)


def gridworld(n: int = 5, slip: float = 0.0) -> ToyMdp:
    """n x n grid, four moves, absorbing goal in the top-right corner.

    Every move costs -1; entering the goal pays +10. ``slip`` moves the agent
    to a uniformly random neighbour instead.
    """
    n_s = n * n
    goal = n_s - 1
    moves = [(0, 1), (0, -1), (1, 0), (-1, 0)]
    P = np.zeros((n_s, 4, n_s))
    R = np.zeros((n_s, 4, n_s))

    def nxt(s: int, m) -> int:
        r, c = divmod(s, n)
        r2 = min(max(r + m[0], 0), n - 1)
        c2 = min(max(c + m[1], 0), n - 1)
        return r2 * n + c2

    for s in range(n_s):
        for a, m in enumerate(moves):
            if s == goal:
                P[s, a, s] = 1.0
                continue
            P[s, a, nxt(s, m)] += 1.0 - slip
            for m2 in moves:
                P[s, a, nxt(s, m2)] += slip / 4
            for s2 in range(n_s):
                R[s, a, s2] = -1.0 + (10.0 if s2 == goal else 0.0)
    return ToyMdp(P, R)


def grid_distance_potential(n: int = 5) -> np.ndarray:
    """Negative Manhattan distance to the goal corner."""
    r, c = np.divmod(np.arange(n * n), n)
    return -((n - 1 - r) + (n - 1 - c)).astype(float)


def random_mdp(rng: np.random.Generator, n_states: int = 8, n_actions: int = 3) -> ToyMdp:
    P = rng.random((n_states, n_actions, n_states)) ** 3
    P /= P.sum(axis=2, keepdims=True)
    R = rng.normal(size=(n_states, n_actions, n_states))
    return ToyMdp(P, R)


def solve_mdp(mdp: ToyMdp, gamma: float, max_iter: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Optimal (V, Q) by value iteration, finished with exact policy evaluation.

    Value iteration stops once the greedy policy is stable; the policy is then
    evaluated by solving the linear Bellman system, and improvement repeats
    until no state changes action.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("value iteration needs 0 <= gamma < 1")
    P, R = mdp.P, mdp.R
    n = mdp.n_states
    expected_r = np.einsum("ijk,ijk->ij", P, R)
    V = np.zeros(n)
    for _ in range(max_iter):
        Q = expected_r + gamma * P @ V
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) < 1e-8:
            V = V_new
            break
        V = V_new
    policy = (expected_r + gamma * P @ V).argmax(axis=1)
    for _ in range(1000):
        P_pi = P[np.arange(n), policy]
        r_pi = expected_r[np.arange(n), policy]
        V = np.linalg.solve(np.eye(n) - gamma * P_pi, r_pi)
        Q = expected_r + gamma * P @ V
        improved = Q.argmax(axis=1)
        # keep the incumbent action on ties so the loop terminates
        keep = Q[np.arange(n), policy] >= Q[np.arange(n), improved] - 1e-12
        improved = np.where(keep, policy, improved)
        if np.array_equal(improved, policy):
            return V, Q
        policy = improved
    raise RuntimeError("policy improvement did not converge")


def unique_argmax(Q: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Mask of states whose best action beats the runner-up by more than ``tol``."""
    if Q.shape[1] == 1:
        return np.ones(Q.shape[0], dtype=bool)
    top2 = np.sort(Q, axis=1)[:, -2:]
    return (top2[:, 1] - top2[:, 0]) > tol


def pbrs_invariance_check(mdp: ToyMdp, phi: np.ndarray, gamma: float, tol: float) -> bool:
    """True iff shaping by ``gamma*phi(s') - phi(s)`` keeps every unique greedy action
    and shifts the optimal value by exactly ``-phi``."""
    phi = np.asarray(phi, dtype=float)
    V, Q = solve_mdp(mdp, gamma)
    V2, Q2 = solve_mdp(mdp.shaped(phi, gamma), gamma)
    mask = unique_argmax(Q)
    same_policy = np.array_equal(Q.argmax(axis=1)[mask], Q2.argmax(axis=1)[mask])
    offset = float(np.max(np.abs(V2 - (V - phi))))
    return bool(same_policy and offset <= tol)
