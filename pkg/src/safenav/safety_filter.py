"""CLF-CBF-QP velocity filter.

The nominal velocity from the policy is replaced by the closest velocity that
keeps the UAV outside a LiDAR-estimated bounding circle (hard constraint),
inside the arena margins and descending the tracking Lyapunov function (both
softened by slack variables).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qp
from .world import Obstacle, cast_rays

N_SCAN_RAYS = 24


@dataclass(frozen=True)
class FilterParams:
    v_max: float
    v_target_max: float = 0.0
    k_clf: float | None = None
    k_cbf: float = 1.0
    alpha_bcbf: float = 1.0
    lam_slack: float = 1e3
    margin: float = 0.0
    d_safe: float = 1.0
    activation_distance: float = 8.0
    sensor_range: float = 15.0
    velocity_constraint: bool = True
    use_obstacle_cbf: bool = True

    def __post_init__(self) -> None:
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        bound = math.sqrt(2.0) * (self.v_max - self.v_target_max)
        if bound <= 0:
            raise ValueError("target speed must stay below v_max for a feasible CLF gain")
        if self.k_clf is None:
            object.__setattr__(self, "k_clf", 0.9 * bound)
        if not 0.0 < self.k_clf <= bound + 1e-12:
            raise ValueError(f"k_clf must lie in (0, {bound:.6g}], got {self.k_clf}")
        if self.k_cbf <= 0 or self.alpha_bcbf <= 0:
            raise ValueError("k_cbf and alpha_bcbf must be positive")
        if self.lam_slack <= 1.0:
            raise ValueError("lam_slack should be much larger than 1")
        if self.margin < 0 or self.d_safe < 0:
            raise ValueError("margin and d_safe must be non-negative")


@dataclass
class BoundingCircle:
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    radius: float = 0.0
    center_rate: np.ndarray = field(default_factory=lambda: np.zeros(2))
    radius_rate: float = 0.0
    valid: bool = False
    n_points: int = 0

    @property
    def r_obs(self) -> float:
        return self.radius


def scan(position, obstacles: list[Obstacle], sensor_range: float) -> np.ndarray:
    """360-degree obstacle-only scan used by the filter."""
    return cast_rays(position, 0.0, N_SCAN_RAYS, 2.0 * math.pi, sensor_range, obstacles, None)


def scan_points(position, ranges: np.ndarray, activation_distance: float) -> np.ndarray:
    n = len(ranges)
    ang = 2.0 * math.pi * np.arange(n) / n
    keep = ranges < activation_distance
    r = ranges[keep]
    return np.column_stack([position[0] + r * np.cos(ang[keep]), position[1] + r * np.sin(ang[keep])])


def estimate_bounding_circle(
    ranges: np.ndarray,
    position,
    activation_distance: float,
    d_safe: float,
    prev: BoundingCircle | None,
    dt: float,
    v_max: float,
) -> BoundingCircle:
    """Enclose the active LiDAR returns in one circle and difference its motion.

    Rates are reset to zero when the previous circle is invalid or the number
    of active points changed by more than half.
    """
    if len(ranges) != N_SCAN_RAYS:
        raise ValueError(f"expected {N_SCAN_RAYS} ranges, got {len(ranges)}")
    pts = scan_points(np.asarray(position, dtype=float), np.asarray(ranges, dtype=float),
                      activation_distance)
    if len(pts) == 0:
        return BoundingCircle()
    c = pts.mean(axis=0)
    r_obs = float(np.max(np.hypot(*(pts - c).T)))
    R = r_obs + d_safe
    c_dot = np.zeros(2)
    r_dot = 0.0
    if prev is not None and prev.valid and abs(len(pts) - prev.n_points) <= 0.5 * prev.n_points:
        c_dot = np.clip((c - prev.center) / dt, -v_max, v_max)
        r_dot = float(np.clip((R - prev.radius) / dt, -v_max, v_max))
    return BoundingCircle(c, R, c_dot, r_dot, True, len(pts))


def clf_terms(p_a, p_t, v_t, k_clf: float) -> tuple[float, float, np.ndarray, float]:
    """Tracking CLF value, its class-K bound, and the row ``coeffs . z <= rhs``."""
    e = np.asarray(p_a, dtype=float) - np.asarray(p_t, dtype=float)
    V = 0.5 * float(e @ e)
    gamma = k_clf * math.sqrt(V)
    coeffs = np.array([e[0], e[1], -1.0, 0.0])
    rhs = float(e @ np.asarray(v_t, dtype=float)) - gamma
    return V, gamma, coeffs, rhs


def cbf_terms(p_a, circle: BoundingCircle, k_cbf: float) -> tuple[float, np.ndarray, float]:
    """Obstacle barrier value and the hard row ``coeffs . z >= rhs``."""
    e = np.asarray(p_a, dtype=float) - circle.center
    h = float(e @ e) - circle.radius**2
    coeffs = np.array([2.0 * e[0], 2.0 * e[1], 0.0, 0.0])
    rhs = 2.0 * float(e @ circle.center_rate) + 2.0 * circle.radius * circle.radius_rate - k_cbf * h
    return h, coeffs, rhs


def boundary_rows(p_a, width: float, height: float, margin: float, alpha: float):
    """Four rows ``coeffs . z >= rhs`` keeping the UAV inside the margin-shrunk arena."""
    x, y = float(p_a[0]), float(p_a[1])
    return [
        (np.array([1.0, 0.0, 0.0, -1.0]), -alpha * (x - margin), "left"),
        (np.array([-1.0, 0.0, 0.0, -1.0]), -alpha * (width - margin - x), "right"),
        (np.array([0.0, 1.0, 0.0, -1.0]), -alpha * (y - margin), "bottom"),
        (np.array([0.0, -1.0, 0.0, -1.0]), -alpha * (height - margin - y), "top"),
    ]


@dataclass
class FilterDiagnostics:
    V: float
    h_obs: float  # nan when no circle is active
    delta1: float
    delta2: float
    active: list[str]
    status: str  # optimal | fallback | <solver status>
    intervened: bool
    circle: BoundingCircle


class SafetyFilter:
    """One instance per episode; caches the last bounding circle and active set."""

    def __init__(self, params: FilterParams, width: float, height: float) -> None:
        self.params = params
        self.width = width
        self.height = height
        self.prev_circle: BoundingCircle | None = None
        self._warm: list[int] | None = None

    def reset(self) -> None:
        self.prev_circle = None
        self._warm = None

    def build_problem(self, v_des, p_a, p_t, v_t, circle: BoundingCircle) -> tuple[qp.QpProblem, float, float]:
        prm = self.params
        problem = qp.QpProblem(v_des=v_des, lam=prm.lam_slack,
                               v_max=prm.v_max if prm.velocity_constraint else None)
        V, _, coeffs, rhs = clf_terms(p_a, p_t, v_t, prm.k_clf)
        problem.add_le(coeffs, rhs, "clf")
        h_obs = math.nan
        if prm.use_obstacle_cbf and circle.valid:
            h_obs, coeffs, rhs = cbf_terms(p_a, circle, prm.k_cbf)
            problem.add_ge(coeffs, rhs, "obstacle", hard=True)
        for coeffs, rhs, name in boundary_rows(p_a, self.width, self.height, prm.margin, prm.alpha_bcbf):
            problem.add_ge(coeffs, rhs, name)
        return problem, V, h_obs

    def filter_velocity(self, v_des, p_a, p_t, v_t, ranges: np.ndarray, dt: float):
        """Return ``(v_star, diagnostics)`` for one control step."""
        prm = self.params
        circle = estimate_bounding_circle(ranges, p_a, prm.activation_distance, prm.d_safe,
                                          self.prev_circle, dt, prm.v_max)
        self.prev_circle = circle
        return self.filter_with_circle(v_des, p_a, p_t, v_t, circle)

    def filter_with_circle(self, v_des, p_a, p_t, v_t, circle: BoundingCircle):
        """Same as ``filter_velocity`` but with the bounding circle supplied by the caller."""
        prm = self.params
        v_des = np.asarray(v_des, dtype=float)
        speed = float(np.hypot(*v_des))
        if speed > prm.v_max:
            v_des = v_des * (prm.v_max / speed)
        problem, V, h_obs = self.build_problem(v_des, p_a, p_t, v_t, circle)

        # Fast path: nominal command with zero slack satisfies every row.
        z0 = np.array([v_des[0], v_des[1], 0.0, 0.0])
        if problem.violation(z0) <= 0.0:
            self._warm = []
            return v_des.copy(), FilterDiagnostics(V, h_obs, 0.0, 0.0, [], "optimal", False, circle)

        sol = qp.solve(problem, warm_start=self._warm)
        if sol.status != "optimal":
            self._warm = None
            e = np.asarray(p_a, dtype=float) - circle.center
            n = float(np.hypot(*e))
            if circle.valid and n > 1e-12:
                v = prm.v_max * e / n
            else:
                v = np.zeros(2)
            return v, FilterDiagnostics(V, h_obs, math.nan, math.nan, [], "fallback", True, circle)
        self._warm = list(sol.active)
        v = sol.v.copy()
        if not prm.velocity_constraint:
            s = float(np.hypot(*v))
            if s > prm.v_max:
                v = v * (prm.v_max / s)
        active = [problem.labels[i] for i in sol.active]
        if sol.ball_active:
            active.append("speed")
        intervened = bool(np.hypot(*(v - v_des)) > 1e-12)
        return v, FilterDiagnostics(V, h_obs, float(sol.z[2]), float(sol.z[3]), active,
                                    sol.status, intervened, circle)
