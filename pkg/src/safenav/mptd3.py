"""TD3 with success/failure replay pools, plus the training environment and loop."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .observe import OBS_DIM, Observation, build_observation
from .replay import ACT_DIM, ReplayPools, Transition
from .reward import RewardParams, base_reward, baseline_shaping, shaping_reward
from .world import (
    Collision,
    WorldConfig,
    WorldState,
    detect_collision,
    randomize_scenario,
    step_obstacles,
    step_target,
    step_uav,
)

LOG_COLUMNS = ("episode", "steps", "outcome", "return", "wall_ms")


@dataclass(frozen=True)
class Td3Config:
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    expl_noise: float = 0.1
    target_noise: float = 0.2
    noise_clip: float = 0.5
    batch_size: int = 256
    eta: float = 0.7
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    learning_starts: int = 10_000
    total_timesteps: int = 1_000_000
    hidden: tuple[int, ...] = (256, 256)
    temp_capacity: int = 1000
    pool_capacity: int = 500_000

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")
        if min(self.expl_noise, self.target_noise, self.noise_clip) < 0:
            raise ValueError("noise scales must be non-negative")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


class NavEnv:
    """Episodic wrapper around the world for training and raw-policy rollouts.

    One ``step`` is one decision at ``physics_dt``. Terminal outcomes are
    ``success``, ``collision`` and ``out_of_bounds``; hitting ``episode_cap``
    truncates with outcome ``timeout``.
    """

    def __init__(self, cfg: WorldConfig, reward: RewardParams | None = None,
                 rng: np.random.Generator | None = None) -> None:
        self.cfg = cfg
        self.reward = reward if reward is not None else RewardParams()
        self.v_c = self.reward.threshold_speed(cfg.v_max_uav)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.world: WorldState | None = None
        self.obs: Observation | None = None

    def reset(self, world: WorldState | None = None) -> np.ndarray:
        self.world = world if world is not None else randomize_scenario(self.cfg, self.rng)
        self.obs = build_observation(self.world)
        return self.obs.s

    def step(self, action) -> tuple[np.ndarray, float, bool, bool, str | None]:
        w, cfg = self.world, self.cfg
        dt = cfg.physics_dt
        w.uav = step_uav(w.uav, action, cfg, dt)
        w.obstacles = step_obstacles(w.obstacles, cfg.bounds, dt)
        if cfg.target_mode == "moving":
            w.target = step_target(w.target, w.target_box, cfg, self.rng, dt)
        w.step += 1
        obs = build_observation(w)
        hit = detect_collision(w.uav, w.obstacles, cfg.bounds, cfg.uav_radius)
        outcome = None
        if hit == Collision.OBSTACLE:
            outcome = "collision"
        elif hit == Collision.OUT_OF_BOUNDS:
            outcome = "out_of_bounds"
        elif obs.raw_d <= cfg.success_threshold:
            outcome = "success"
        reward_outcome = "collision" if outcome in ("collision", "out_of_bounds") else outcome or "none"
        r = base_reward(reward_outcome, w.uav.speed, self.reward, self.v_c)
        if self.reward.variant == "pbrs":
            r += shaping_reward(self.obs, obs, self.reward)
        else:
            r += baseline_shaping(obs, self.reward, cfg.r_cap)
        self.obs = obs
        terminated = outcome is not None
        truncated = not terminated and w.step >= cfg.episode_cap
        if truncated:
            outcome = "timeout"
        return obs.s, r, terminated, truncated, outcome


def polyak(target: nn.Mlp, source: nn.Mlp, tau: float) -> None:
    for pt, ps in zip(target.params, source.params):
        pt *= 1.0 - tau
        pt += tau * ps
    target.version += 1


class Mptd3:
    def __init__(self, cfg: Td3Config, rng: np.random.Generator) -> None:
        self.cfg = cfg
        hidden = list(cfg.hidden)
        self.actor = nn.Mlp([OBS_DIM, *hidden, ACT_DIM], "tanh", rng)
        self.critic1 = nn.Mlp([OBS_DIM + ACT_DIM, *hidden, 1], "identity", rng)
        self.critic2 = nn.Mlp([OBS_DIM + ACT_DIM, *hidden, 1], "identity", rng)
        self.actor_target = self.actor.copy()
        self.critic1_target = self.critic1.copy()
        self.critic2_target = self.critic2.copy()
        self.actor_opt = nn.AdamState.for_params(self.actor.params, lr=cfg.lr_actor)
        self.critic1_opt = nn.AdamState.for_params(self.critic1.params, lr=cfg.lr_critic)
        self.critic2_opt = nn.AdamState.for_params(self.critic2.params, lr=cfg.lr_critic)
        self.n_updates = 0

    def nets(self) -> dict[str, nn.Mlp]:
        return {name: getattr(self, name) for name in nn.CHECKPOINT_NETS}

    @classmethod
    def from_checkpoint(cls, path, cfg: Td3Config | None = None) -> Mptd3:
        nets = nn.load_checkpoint(path)
        hidden = tuple(nets["actor"].dims[1:-1])
        learner = cls(cfg or Td3Config(hidden=hidden), np.random.default_rng(0))
        for name, net in nets.items():
            setattr(learner, name, net)
        return learner

    def save(self, path) -> None:
        nn.save_checkpoint(path, self.nets())

    def select_action(self, obs: np.ndarray, sigma: float, rng: np.random.Generator | None) -> np.ndarray:
        return select_action(self.actor, obs, sigma, rng)

    def critic_target(self, batch: dict[str, np.ndarray], rng: np.random.Generator) -> np.ndarray:
        return critic_target(batch, self.actor_target, self.critic1_target, self.critic2_target,
                             self.cfg, rng)

    def update(self, pools: ReplayPools, rng: np.random.Generator) -> dict[str, float]:
        cfg = self.cfg
        batch = pools.sample(cfg.batch_size, cfg.eta, rng)
        y = self.critic_target(batch, rng)
        sa = np.concatenate([batch["s"], batch["a"]], axis=1)
        n = len(y)
        losses = {}
        for name, critic, opt in (("critic1", self.critic1, self.critic1_opt),
                                  ("critic2", self.critic2, self.critic2_opt)):
            q, tape = nn.forward(critic, sa)
            err = q[:, 0] - y
            losses[name] = float(np.mean(err * err))
            grads = nn.backward(critic, tape, (2.0 / n) * err[:, None])
            nn.optimize(critic, grads, opt)
        self.n_updates += 1
        if self.n_updates % cfg.policy_delay == 0:
            a, tape_a = nn.forward(self.actor, batch["s"])
            q, tape_q = nn.forward(self.critic1, np.concatenate([batch["s"], a], axis=1))
            losses["actor"] = -float(np.mean(q))
            g_q = nn.backward(self.critic1, tape_q, np.full_like(q, -1.0 / n))
            g_a = nn.backward(self.actor, tape_a, g_q.input[:, OBS_DIM:])
            nn.optimize(self.actor, g_a, self.actor_opt)
            polyak(self.actor_target, self.actor, cfg.tau)
            polyak(self.critic1_target, self.critic1, cfg.tau)
            polyak(self.critic2_target, self.critic2, cfg.tau)
        return losses


def select_action(actor: nn.Mlp, obs: np.ndarray, sigma: float,
                  rng: np.random.Generator | None) -> np.ndarray:
    """Deterministic actor output plus clipped Gaussian exploration noise."""
    a = np.asarray(actor(np.asarray(obs, dtype=np.float32)), dtype=float)
    if sigma > 0.0:
        a = a + rng.normal(0.0, sigma, size=a.shape)
    return np.clip(a, -1.0, 1.0)


def critic_target(batch, actor_target: nn.Mlp, critic1_target: nn.Mlp, critic2_target: nn.Mlp,
                  cfg: Td3Config, rng: np.random.Generator) -> np.ndarray:
    """Clipped double-Q target with target-policy smoothing."""
    s2 = batch["s2"]
    a2 = actor_target(s2)
    if cfg.target_noise > 0.0:
        noise = np.clip(rng.normal(0.0, cfg.target_noise, size=a2.shape), -cfg.noise_clip, cfg.noise_clip)
        a2 = a2 + noise.astype(a2.dtype)
    a2 = np.clip(a2, -1.0, 1.0)
    sa2 = np.concatenate([s2, a2], axis=1)
    q = np.minimum(critic1_target(sa2)[:, 0], critic2_target(sa2)[:, 0])
    return batch["r"] + cfg.gamma * (1.0 - batch["done"]) * q


@dataclass
class EpisodeLog:
    episode: int
    steps: int
    outcome: str
    ret: float
    wall_ms: int

    def row(self) -> list:
        return [self.episode, self.steps, self.outcome, f"{self.ret:.6f}", self.wall_ms]


@dataclass
class TrainResult:
    learner: Mptd3
    log: list[EpisodeLog] = field(default_factory=list)

    def success_rate(self, last: int = 100) -> float:
        tail = self.log[-last:]
        return sum(e.outcome == "success" for e in tail) / max(len(tail), 1)


def write_log(path, log: list[EpisodeLog]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for entry in log:
            writer.writerow(entry.row())


def read_log(path) -> list[EpisodeLog]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EpisodeLog(int(r["episode"]), int(r["steps"]), r["outcome"], float(r["return"]),
                       int(r["wall_ms"])) for r in rows]


def train(env_cfg: WorldConfig, reward: RewardParams, cfg: Td3Config, seed: int,
          out_dir: str | Path | None = None, progress=None) -> TrainResult:
    """Run MPTD3 for ``cfg.total_timesteps`` environment steps.

    Every random stream derives from ``seed``: scenario/target draws, action
    noise, replay sampling and network initialisation.
    """
    env_ss, act_ss, sample_ss, init_ss = np.random.SeedSequence(seed).spawn(4)
    env = NavEnv(env_cfg, reward, np.random.default_rng(env_ss))
    act_rng = np.random.default_rng(act_ss)
    sample_rng = np.random.default_rng(sample_ss)
    learner = Mptd3(cfg, np.random.default_rng(init_ss))
    pools = ReplayPools(cfg.temp_capacity, cfg.pool_capacity, cfg.pool_capacity)
    result = TrainResult(learner)

    s = env.reset()
    ep_return, ep_steps, t_start = 0.0, 0, time.perf_counter()
    for t in range(cfg.total_timesteps):
        if t < cfg.learning_starts:
            a = act_rng.uniform(-1.0, 1.0, ACT_DIM)
        else:
            a = learner.select_action(s, cfg.expl_noise, act_rng)
        s2, r, terminated, truncated, outcome = env.step(a)
        pools.push(Transition(s, a, r, s2, terminated, t))
        ep_return += r
        ep_steps += 1
        s = s2
        if terminated or truncated:
            pools.finalize_episode("success" if outcome == "success" else "failure")
            wall = int((time.perf_counter() - t_start) * 1000)
            result.log.append(EpisodeLog(len(result.log), ep_steps, outcome, ep_return, wall))
            if progress is not None:
                progress(t, result)
            s = env.reset()
            ep_return, ep_steps, t_start = 0.0, 0, time.perf_counter()
        if t + 1 > cfg.learning_starts and pools.d_success + pools.d_failure > 0:
            learner.update(pools, sample_rng)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        learner.save(out / "checkpoint.mpt3")
        write_log(out / "train_log.csv", result.log)
    return result
