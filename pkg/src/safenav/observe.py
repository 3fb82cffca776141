"""18-component normalized observation plus the raw quantities used for shaping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .world import WorldState, cast_rays

N_RAYS = 9
RAY_ARC = 2.0 * math.pi / 3.0
OBS_DIM = 18


@dataclass
class Observation:
    s: np.ndarray  # (18,)
    raw_d: float
    raw_alpha: float
    raw_rays: np.ndarray  # (9,)


def relative_geometry(p_a, heading: float, p_t) -> tuple[float, float, float]:
    """Distance, bearing to the horizontal and heading misalignment towards the target."""
    dx = float(p_t[0] - p_a[0])
    dy = float(p_t[1] - p_a[1])
    d = math.hypot(dx, dy)
    beta = math.atan2(dy, dx)
    if d == 0.0:
        return 0.0, beta, 0.0
    cos_alpha = (dx * math.cos(heading) + dy * math.sin(heading)) / d
    alpha = math.acos(min(1.0, max(-1.0, cos_alpha)))
    return d, beta, alpha


def build_observation(world: WorldState) -> Observation:
    cfg = world.config
    uav, target = world.uav, world.target
    rays = cast_rays(
        uav.position, uav.heading, N_RAYS, RAY_ARC, cfg.r_cap, world.obstacles, cfg.bounds
    )
    d, beta, alpha = relative_geometry(uav.position, uav.heading, target.position)
    theta = uav.heading % (2.0 * math.pi)
    if theta >= 2.0 * math.pi:  # tiny negative headings round up to 2*pi
        theta = 0.0
    s = np.empty(OBS_DIM)
    s[0] = uav.position[0] / cfg.width
    s[1] = uav.position[1] / cfg.height
    s[2] = theta / math.pi
    s[3] = uav.speed / cfg.v_max_uav
    s[4] = target.position[0] / cfg.width
    s[5] = target.position[1] / cfg.height
    s[6:15] = rays / cfg.r_cap
    s[15] = beta / math.pi
    s[16] = d / cfg.diagonal
    s[17] = alpha / math.pi
    return Observation(s, d, alpha, rays)
