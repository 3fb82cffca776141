"""Planar kinematic world: UAV, target, circular obstacles, range sensing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np


class ScenarioError(ValueError):
    """Raised for invalid configurations or unsatisfiable layouts."""


class Collision(str, Enum):
    NONE = "none"
    OBSTACLE = "obstacle"
    OUT_OF_BOUNDS = "out_of_bounds"


LAYOUTS = ("uniform", "corridor", "boxed")
MAX_PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True)
class WorldConfig:
    width: float = 1000.0
    height: float = 1000.0
    n_static: int = 20
    n_dynamic: int = 5
    r_min: float = 10.0
    r_max: float = 40.0
    uav_radius: float = 5.0
    v_max_uav: float = 10.0
    dv_max: float = 2.0
    dtheta_max: float = math.pi / 6
    obstacle_speed: float = 3.0
    target_mode: str = "static"
    target_speed: float = 0.0
    target_turn_prob: float = 0.1
    success_threshold: float = 20.0
    physics_dt: float = 0.1
    episode_cap: int = 1000
    r_cap: float = 150.0
    filter_sensor_range: float = 150.0
    activation_distance: float = 80.0
    d_safe: float = 10.0
    randomize_layout: bool = True
    layout: str = "uniform"
    # Seed for the obstacle layout reused every episode when randomize_layout is off.
    layout_seed: int = 0
    # Minimum free gap between obstacle discs at spawn.
    obstacle_gap: float = 0.0
    # Side of the centred square holding obstacles and target in the boxed layout.
    box_size: float = 80.0

    def __post_init__(self) -> None:
        checks = [
            (self.width > 0 and self.height > 0, "width and height must be positive"),
            (0 < self.r_min <= self.r_max, "need 0 < r_min <= r_max"),
            (self.v_max_uav > 0, "v_max_uav must be positive"),
            (self.physics_dt > 0, "physics_dt must be positive"),
            (self.success_threshold > 0, "success_threshold must be positive"),
            (self.r_cap > 0, "r_cap must be positive"),
            (self.n_static >= 0 and self.n_dynamic >= 0, "obstacle counts must be >= 0"),
            (self.uav_radius >= 0, "uav_radius must be >= 0"),
            (self.episode_cap >= 1, "episode_cap must be >= 1"),
            (self.target_mode in ("static", "moving"), "target_mode must be static or moving"),
            (0.0 <= self.target_turn_prob <= 1.0, "target_turn_prob must lie in [0, 1]"),
            (self.layout in LAYOUTS, f"layout must be one of {LAYOUTS}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ScenarioError(msg)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def bounds(self) -> tuple[float, float]:
        return (self.width, self.height)


@dataclass
class UavState:
    position: np.ndarray
    heading: float
    speed: float

    def velocity(self) -> np.ndarray:
        return self.speed * np.array([math.cos(self.heading), math.sin(self.heading)])


@dataclass
class Obstacle:
    center: np.ndarray
    radius: float
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    kind: str = "static"

    def copy(self) -> Obstacle:
        return Obstacle(self.center.copy(), self.radius, self.velocity.copy(), self.kind)


@dataclass
class TargetState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass
class WorldState:
    uav: UavState
    target: TargetState
    obstacles: list[Obstacle]
    config: WorldConfig
    step: int = 0
    # Region the moving target is confined to: (xmin, ymin, xmax, ymax).
    target_box: tuple[float, float, float, float] | None = None

    def distance_to_target(self) -> float:
        return float(np.linalg.norm(self.target.position - self.uav.position))


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi]."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


def step_uav(uav: UavState, action, cfg: WorldConfig, dt: float) -> UavState:
    """Apply a fractional speed/heading change and advance the UAV by ``dt``."""
    lam_v, lam_theta = float(action[0]), float(action[1])
    px, py = float(uav.position[0]), float(uav.position[1])
    if not _finite(lam_v, lam_theta, px, py, uav.heading, uav.speed, dt):
        raise ValueError("step_uav received a non-finite input")
    if abs(lam_v) > 1.0 or abs(lam_theta) > 1.0:
        raise ValueError(f"action components must lie in [-1, 1], got {action!r}")
    speed = min(max(uav.speed + lam_v * cfg.dv_max, 0.0), cfg.v_max_uav)
    heading = wrap_angle(uav.heading + lam_theta * cfg.dtheta_max)
    position = np.array([px + speed * math.cos(heading) * dt, py + speed * math.sin(heading) * dt])
    return UavState(position, heading, speed)


def apply_velocity(uav: UavState, v: np.ndarray, cfg: WorldConfig, dt: float) -> UavState:
    """Fly a commanded planar velocity for ``dt``; heading follows the velocity."""
    v = np.asarray(v, dtype=float)
    speed = float(np.hypot(v[0], v[1]))
    if speed > cfg.v_max_uav:
        v = v * (cfg.v_max_uav / speed)
        speed = cfg.v_max_uav
    heading = math.atan2(v[1], v[0]) if speed > 1e-12 else uav.heading
    return UavState(uav.position + v * dt, heading, speed)


def step_obstacles(
    obstacles: list[Obstacle], bounds: tuple[float, float], dt: float
) -> list[Obstacle]:
    """Advance dynamic obstacles with specular reflections off walls and each other."""
    w, h = bounds
    out = [o.copy() for o in obstacles]
    for o in out:
        if o.kind == "dynamic":
            o.center = o.center + o.velocity * dt

    n = len(out)
    if n > 1:
        centers = np.array([o.center for o in out])
        radii = np.array([o.radius for o in out])
        moving = np.array([o.kind == "dynamic" for o in out])
        diff = centers[:, None, :] - centers[None, :, :]
        touching = np.hypot(diff[..., 0], diff[..., 1]) < radii[:, None] + radii[None, :]
        touching &= moving[:, None] | moving[None, :]
        pairs = [(i, j) for i, j in zip(*np.nonzero(np.triu(touching, k=1)))]
    else:
        pairs = []
    for i, j in pairs:
        a, b = out[i], out[j]
        delta = b.center - a.center
        dist = float(np.hypot(delta[0], delta[1]))
        gap = a.radius + b.radius - dist
        if gap <= 0.0:
            continue
        normal = delta / dist if dist > 1e-12 else np.array([1.0, 0.0])
        # reflect each velocity component that points into the other body
        if a.kind == "dynamic" and float(a.velocity @ normal) > 0.0:
            a.velocity = a.velocity - 2.0 * float(a.velocity @ normal) * normal
        if b.kind == "dynamic" and float(b.velocity @ normal) < 0.0:
            b.velocity = b.velocity - 2.0 * float(b.velocity @ normal) * normal
        if a.kind == "dynamic" and b.kind == "dynamic":
            a.center = a.center - 0.5 * gap * normal
            b.center = b.center + 0.5 * gap * normal
        elif a.kind == "dynamic":
            a.center = a.center - gap * normal
        else:
            b.center = b.center + gap * normal

    for o in out:
        if o.kind != "dynamic":
            continue
        c, v, r = o.center.copy(), o.velocity.copy(), o.radius
        for k, size in ((0, w), (1, h)):
            if c[k] - r < 0.0:
                c[k] = 2.0 * r - c[k]
                v[k] = abs(v[k])
            elif c[k] + r > size:
                c[k] = 2.0 * (size - r) - c[k]
                v[k] = -abs(v[k])
            c[k] = min(max(c[k], min(r, size / 2)), max(size - r, size / 2))
        o.center, o.velocity = c, v
    return out


def step_target(
    target: TargetState,
    box: tuple[float, float, float, float],
    cfg: WorldConfig,
    rng: np.random.Generator,
    dt: float,
) -> TargetState:
    """Constant-speed target that re-draws its heading with probability ``target_turn_prob``."""
    if cfg.target_mode != "moving":
        return TargetState(target.position.copy(), np.zeros(2))
    v = target.velocity.copy()
    if rng.random() < cfg.target_turn_prob:
        ang = rng.uniform(-math.pi, math.pi)
        v = cfg.target_speed * np.array([math.cos(ang), math.sin(ang)])
    p = target.position + v * dt
    lo, hi = (box[0], box[1]), (box[2], box[3])
    for k in range(2):
        if p[k] < lo[k]:
            p[k] = 2.0 * lo[k] - p[k]
            v[k] = abs(v[k])
        elif p[k] > hi[k]:
            p[k] = 2.0 * hi[k] - p[k]
            v[k] = -abs(v[k])
        p[k] = min(max(p[k], lo[k]), hi[k])
    return TargetState(p, v)


def ray_angles(heading: float, n_rays: int, arc: float) -> np.ndarray:
    if arc >= 2.0 * math.pi - 1e-12:
        return heading + 2.0 * math.pi * np.arange(n_rays) / n_rays
    if n_rays == 1:
        return np.array([heading])
    return heading + arc * (np.arange(n_rays) / (n_rays - 1) - 0.5)


def cast_rays(
    origin,
    heading: float,
    n_rays: int,
    arc: float,
    max_range: float,
    obstacles: list[Obstacle],
    bounds: tuple[float, float] | None,
) -> np.ndarray:
    """Distance along each ray to the nearest obstacle or wall, capped at ``max_range``.

    ``arc >= 2*pi`` selects full-circle mode. Passing ``bounds=None`` ignores walls.
    """
    if n_rays < 1 or max_range <= 0:
        raise ValueError("need n_rays >= 1 and max_range > 0")
    ox, oy = float(origin[0]), float(origin[1])
    ang = ray_angles(heading, n_rays, arc)
    ux, uy = np.cos(ang), np.sin(ang)
    dist = np.full(n_rays, float(max_range))

    if obstacles:
        centers = np.array([o.center for o in obstacles], dtype=float)
        radii = np.array([o.radius for o in obstacles], dtype=float)
        fx = ox - centers[:, 0]
        fy = oy - centers[:, 1]
        c = fx * fx + fy * fy - radii * radii  # (m,)
        b = ux[:, None] * fx[None, :] + uy[:, None] * fy[None, :]  # (n, m)
        disc = b * b - c[None, :]
        hit = disc >= 0.0
        root = np.sqrt(np.where(hit, disc, 0.0))
        t_near = -b - root
        t_far = -b + root
        inside = c[None, :] <= 0.0
        t = np.where(inside, 0.0, t_near)
        valid = hit & (inside | (t_far >= 0.0)) & (t >= 0.0)
        t = np.where(valid, t, np.inf)
        dist = np.minimum(dist, t.min(axis=1))

    if bounds is not None:
        w, h = bounds
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(ux > 0, (w - ox) / ux, np.where(ux < 0, -ox / ux, np.inf))
            ty = np.where(uy > 0, (h - oy) / uy, np.where(uy < 0, -oy / uy, np.inf))
        tw = np.maximum(np.minimum(tx, ty), 0.0)
        dist = np.minimum(dist, tw)
    return dist


def detect_collision(
    uav: UavState, obstacles: list[Obstacle], bounds: tuple[float, float], uav_radius: float
) -> Collision:
    p = uav.position
    for o in obstacles:
        if float(np.hypot(*(p - o.center))) < uav_radius + o.radius:
            return Collision.OBSTACLE
    w, h = bounds
    x, y = float(p[0]), float(p[1])
    if x - uav_radius < 0.0 or x + uav_radius > w or y - uav_radius < 0.0 or y + uav_radius > h:
        return Collision.OUT_OF_BOUNDS
    return Collision.NONE


def boxed_region(cfg: WorldConfig) -> tuple[float, float, float, float]:
    half = cfg.box_size / 2.0
    cx, cy = cfg.width / 2.0, cfg.height / 2.0
    return (cx - half, cy - half, cx + half, cy + half)


class _Placer:
    def __init__(self, rng: np.random.Generator) -> None:
        self.rng = rng
        self.discs: list[tuple[np.ndarray, float, float]] = []  # center, radius, extra gap

    def place(self, radius: float, region, gap: float = 0.0) -> np.ndarray:
        x0, y0, x1, y1 = region
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            p = np.array([self.rng.uniform(x0, x1), self.rng.uniform(y0, y1)])
            if all(
                np.hypot(*(p - c)) >= radius + r + max(gap, g) for c, r, g in self.discs
            ):
                self.discs.append((p, radius, gap))
                return p
        raise ScenarioError(
            f"could not place a disc of radius {radius} after {MAX_PLACEMENT_ATTEMPTS} attempts"
        )


def _place_obstacles(cfg: WorldConfig, placer: _Placer, region) -> list[Obstacle]:
    rng = placer.rng
    obstacles = []
    for i in range(cfg.n_static + cfg.n_dynamic):
        r = float(rng.uniform(cfg.r_min, cfg.r_max))
        x0, y0, x1, y1 = region
        inner = (
            max(x0, r), max(y0, r), min(x1, cfg.width - r), min(y1, cfg.height - r)
        )
        c = placer.place(r, inner, cfg.obstacle_gap)
        if i < cfg.n_static:
            obstacles.append(Obstacle(c, r, np.zeros(2), "static"))
        else:
            ang = rng.uniform(-math.pi, math.pi)
            vel = cfg.obstacle_speed * np.array([math.cos(ang), math.sin(ang)])
            obstacles.append(Obstacle(c, r, vel, "dynamic"))
    return obstacles


def randomize_scenario(cfg: WorldConfig, rng: np.random.Generator) -> WorldState:
    """Draw a non-overlapping initial world for ``cfg.layout``.

    * ``uniform``: everything anywhere in the arena (training).
    * ``corridor``: UAV along the bottom edge, target along the top, obstacles
      in the middle band.
    * ``boxed``: obstacles and target inside the centred ``box_size`` square,
      UAV along the bottom edge.

    With ``randomize_layout`` off the obstacles come from ``layout_seed`` and
    are identical every episode; only the UAV and target are redrawn.
    """
    w, h = cfg.width, cfg.height
    ru = cfg.uav_radius
    full = (0.0, 0.0, w, h)
    if cfg.layout == "uniform":
        obstacle_region = full
        uav_region = (ru, ru, w - ru, h - ru)
        target_region = uav_region
    elif cfg.layout == "corridor":
        obstacle_region = (0.0, 0.15 * h, w, 0.85 * h)
        uav_region = (ru, ru, w - ru, min(0.1 * h, h - ru) - 1e-9)
        target_region = (ru, 0.9 * h + 1e-9, w - ru, h - ru)
    else:
        obstacle_region = boxed_region(cfg)
        uav_region = (ru, ru, w - ru, min(0.1 * h, h - ru) - 1e-9)
        target_region = obstacle_region

    if cfg.randomize_layout:
        placer = _Placer(rng)
        obstacles = _place_obstacles(cfg, placer, obstacle_region)
    else:
        fixed = _Placer(np.random.default_rng(cfg.layout_seed))
        obstacles = _place_obstacles(cfg, fixed, obstacle_region)
        placer = _Placer(rng)
        placer.discs = [(o.center, o.radius, 0.0) for o in obstacles]

    target_pos = placer.place(0.0, target_region)
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        trial = _Placer(rng)
        trial.discs = list(placer.discs)
        uav_pos = trial.place(ru, uav_region)
        if np.hypot(*(uav_pos - target_pos)) > cfg.success_threshold:
            break
    else:
        raise ScenarioError("could not place the UAV outside the success radius")

    heading = float(rng.uniform(-math.pi, math.pi))
    uav = UavState(uav_pos, heading, 0.0)

    target_box = target_region if cfg.layout != "uniform" else (0.0, 0.0, w, h)
    if cfg.target_mode == "moving":
        ang = rng.uniform(-math.pi, math.pi)
        target = TargetState(target_pos, cfg.target_speed * np.array([math.cos(ang), math.sin(ang)]))
    else:
        target = TargetState(target_pos, np.zeros(2))
    return WorldState(uav, target, obstacles, cfg, 0, target_box)


def with_overrides(cfg: WorldConfig, **kwargs) -> WorldConfig:
    return replace(cfg, **kwargs)
