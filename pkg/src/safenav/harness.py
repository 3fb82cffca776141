"""Deployment episodes, ablation tables and training comparisons."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import nn
from .config import Scenario
from .mptd3 import NavEnv, Td3Config, read_log, select_action, train
from .observe import build_observation
from .reward import RewardParams
from .safety_filter import FilterParams, SafetyFilter, clf_terms, scan
from .world import (
    Collision,
    WorldConfig,
    WorldState,
    apply_velocity,
    detect_collision,
    randomize_scenario,
    step_obstacles,
    step_target,
    step_uav,
)

OUTCOMES = ("success", "collision", "out_of_bounds", "timeout")
TRAJ_COLUMNS = ("t", "x", "y", "theta", "v", "v_des_x", "v_des_y", "v_x", "v_y",
                "V", "h_obs", "delta1", "delta2", "status")
METRIC_COLUMNS = ("episode", "seed", "outcome", "steps", "min_h_obs", "interventions", "fallbacks")
SUMMARY_COLUMNS = ("mode", "episodes", "success", "collision", "out_of_bounds", "timeout",
                   "mean_steps", "interventions", "fallbacks")
COMPARE_COLUMNS = ("variant", "train_succ", "test_succ", "train_steps", "test_steps")
SLOW_HOLD = 10  # physics ticks per decision in the 1 Hz mode


class Mode(str, Enum):
    RL_1HZ = "RL_1HZ"
    RL_10HZ = "RL_10HZ"
    RL_CLF_QP_10HZ = "RL_CLF_QP_10HZ"
    RL_CLF_CBF_QP_10HZ = "RL_CLF_CBF_QP_10HZ"
    RL_CLF_CBF_QP_NOVEL_10HZ = "RL_CLF_CBF_QP_NOVEL_10HZ"

    @property
    def filtered(self) -> bool:
        return self not in (Mode.RL_1HZ, Mode.RL_10HZ)

    @property
    def hold(self) -> int:
        return SLOW_HOLD if self is Mode.RL_1HZ else 1

    @classmethod
    def parse(cls, text: str) -> Mode:
        try:
            return cls(text.upper())
        except ValueError:
            raise ValueError(f"unknown mode {text!r}; choose from {[m.value for m in cls]}") from None


@dataclass
class EpisodeMetrics:
    episode: int
    seed: int
    outcome: str
    steps: int  # physics ticks
    min_h_obs: float  # nan when no bounding circle was ever active
    interventions: int
    fallbacks: int
    wall_ms: float

    def row(self) -> list:
        return [self.episode, self.seed, self.outcome, self.steps, _fmt(self.min_h_obs),
                self.interventions, self.fallbacks]


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def filter_params(scenario: Scenario, mode: Mode) -> FilterParams:
    """Filter settings for a scenario; ``[filter]`` entries override the defaults."""
    cfg = scenario.world
    kw = dict(
        v_max=cfg.v_max_uav,
        v_target_max=cfg.target_speed if cfg.target_mode == "moving" else 0.0,
        d_safe=cfg.d_safe,
        activation_distance=cfg.activation_distance,
        sensor_range=cfg.filter_sensor_range,
        margin=cfg.uav_radius,
    )
    kw.update(scenario.filter)
    kw["use_obstacle_cbf"] = mode is not Mode.RL_CLF_QP_10HZ
    kw["velocity_constraint"] = mode is not Mode.RL_CLF_CBF_QP_NOVEL_10HZ
    return FilterParams(**kw)


def load_actor(checkpoint) -> nn.Mlp:
    return nn.load_checkpoint(checkpoint)["actor"]


def go_to_goal(world: WorldState) -> np.ndarray:
    """Scripted nominal controller: full speed straight at the target."""
    e = world.target.position - world.uav.position
    d = float(np.hypot(*e))
    if d == 0.0:
        return np.zeros(2)
    return world.config.v_max_uav * e / d


def run_episode(actor, scenario: Scenario, mode: Mode, seed: int, episode: int = 0,
                record: bool = True, nominal=None,
                world: WorldState | None = None) -> tuple[EpisodeMetrics, list[list]]:
    """One deployment episode.

    Each tick: observe, query the actor (every tick, or every ``SLOW_HOLD``
    ticks in the 1 Hz mode), turn the action into a desired velocity, pass it
    through the filter in filtered modes, fly it for ``physics_dt`` and step
    the world. ``actor`` is an ``Mlp`` or any callable mapping the 18-vector
    to an action in [-1, 1]^2. If ``nominal`` is given it replaces the actor:
    it maps the world state to a desired velocity directly. ``world`` replaces
    the seeded scenario draw as the initial state.
    """
    cfg = scenario.world
    dt = cfg.physics_dt
    world_ss, target_ss = np.random.SeedSequence(seed).spawn(2)
    if world is None:
        world = randomize_scenario(cfg, np.random.default_rng(world_ss))
    target_rng = np.random.default_rng(target_ss)
    flt = SafetyFilter(filter_params(scenario, mode), cfg.width, cfg.height) if mode.filtered else None

    t0 = time.perf_counter()
    rows: list[list] = []
    min_h, interventions, fallbacks = math.inf, 0, 0
    v_des = np.zeros(2)
    outcome = "timeout"
    k = 0
    while True:
        if world.distance_to_target() <= cfg.success_threshold:
            outcome = "success"
            break
        if k >= cfg.episode_cap:
            break
        if k % mode.hold == 0 and nominal is not None:
            v_des = np.asarray(nominal(world), dtype=float)
        elif k % mode.hold == 0:
            obs = build_observation(world)
            a = np.clip(np.asarray(select_action(actor, obs.s, 0.0, None), dtype=float), -1.0, 1.0)
            v_des = step_uav(world.uav, a, cfg, dt).velocity()
        p = world.uav.position
        if flt is not None:
            ranges = scan(p, world.obstacles, cfg.filter_sensor_range)
            v, diag = flt.filter_velocity(v_des, p, world.target.position, world.target.velocity, ranges, dt)
            V, h, d1, d2, status = diag.V, diag.h_obs, diag.delta1, diag.delta2, diag.status
            interventions += diag.intervened
            fallbacks += status == "fallback"
            if not math.isnan(h):
                min_h = min(min_h, h)
        else:
            v = v_des
            V = clf_terms(p, world.target.position, world.target.velocity, 1.0)[0]
            h = d1 = d2 = math.nan
            status = "unfiltered"
        world.uav = apply_velocity(world.uav, v, cfg, dt)
        world.obstacles = step_obstacles(world.obstacles, cfg.bounds, dt)
        if cfg.target_mode == "moving":
            world.target = step_target(world.target, world.target_box, cfg, target_rng, dt)
        k += 1
        world.step = k
        if record:
            u = world.uav
            rows.append([k * dt, u.position[0], u.position[1], u.heading, u.speed, v_des[0], v_des[1],
                         v[0], v[1], V, h, d1, d2, status])
        hit = detect_collision(world.uav, world.obstacles, cfg.bounds, cfg.uav_radius)
        if hit is not Collision.NONE:
            outcome = "collision" if hit is Collision.OBSTACLE else "out_of_bounds"
            break
    wall = (time.perf_counter() - t0) * 1000.0
    metrics = EpisodeMetrics(episode, seed, outcome, k, min_h if math.isfinite(min_h) else math.nan,
                             interventions, fallbacks, wall)
    return metrics, rows


@dataclass
class Summary:
    mode: str
    episodes: int
    counts: dict[str, int]
    mean_steps: float
    interventions: int
    fallbacks: int

    def row(self) -> list:
        return [self.mode, self.episodes, *(self.counts[o] for o in OUTCOMES),
                f"{self.mean_steps:.2f}", self.interventions, self.fallbacks]

    def table(self) -> str:
        head = f"{'Mode':<26}{'Succ.':>7}{'Coll.':>7}{'O.o.B.':>8}{'T.O.':>6}{'Steps':>9}"
        c = self.counts
        line = (f"{self.mode:<26}{c['success']:>7}{c['collision']:>7}{c['out_of_bounds']:>8}"
                f"{c['timeout']:>6}{self.mean_steps:>9.2f}")
        return head + "\n" + line


def summarize(mode: str, metrics: list[EpisodeMetrics]) -> Summary:
    counts = {o: sum(m.outcome == o for m in metrics) for o in OUTCOMES}
    mean_steps = float(np.mean([m.steps for m in metrics])) if metrics else math.nan
    return Summary(mode, len(metrics), counts, mean_steps,
                   sum(m.interventions for m in metrics), sum(m.fallbacks for m in metrics))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) if isinstance(x, float) else x for x in r])


def evaluate(actor, scenario: Scenario, mode: Mode, n_episodes: int, base_seed: int,
             out_dir: str | Path | None = None, trajectories: bool = True,
             nominal=None) -> tuple[Summary, list[EpisodeMetrics]]:
    """Run ``n_episodes`` with seeds ``base_seed .. base_seed + n - 1`` and aggregate."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    metrics = []
    for ep in range(n_episodes):
        m, rows = run_episode(actor, scenario, mode, base_seed + ep, ep,
                              record=out is not None and trajectories, nominal=nominal)
        metrics.append(m)
        if out is not None and trajectories:
            _write_csv(out / f"traj_{ep}.csv", TRAJ_COLUMNS, rows)
    summary = summarize(mode.value, metrics)
    if out is not None:
        _write_csv(out / "metrics.csv", METRIC_COLUMNS, [m.row() for m in metrics])
        _write_csv(out / "summary.csv", SUMMARY_COLUMNS, [summary.row()])
        # wall time varies run to run, so it lives apart from the deterministic outputs
        _write_csv(out / "timing.csv", ("episode", "wall_ms"), [[m.episode, f"{m.wall_ms:.3f}"] for m in metrics])
        (out / "table.txt").write_text(summary.table() + "\n")
    return summary, metrics


def ablate(actor, scenario: Scenario, n_episodes: int, base_seed: int,
           out_dir: str | Path | None = None, trajectories: bool = False) -> dict[Mode, Summary]:
    """All five modes on identical episode seeds."""
    out = Path(out_dir) if out_dir is not None else None
    results = {}
    for mode in Mode:
        sub = out / mode.value if out is not None else None
        results[mode], _ = evaluate(actor, scenario, mode, n_episodes, base_seed, sub, trajectories)
    if out is not None:
        _write_csv(out / "summary.csv", SUMMARY_COLUMNS, [s.row() for s in results.values()])
        lines = [next(iter(results.values())).table().splitlines()[0]]
        lines += [s.table().splitlines()[1] for s in results.values()]
        (out / "table.txt").write_text("\n".join(lines) + "\n")
    return results


# --- raw-policy rollouts in the training environment ---------------------------------

def rollout_policy(actor, cfg: WorldConfig, n_episodes: int, base_seed: int,
                   reward: RewardParams | None = None) -> list[tuple[str, int]]:
    """Greedy policy in the training environment; returns ``(outcome, decision steps)`` per episode."""
    results = []
    for ep in range(n_episodes):
        env = NavEnv(cfg, reward, np.random.default_rng(base_seed + ep))
        s = env.reset()
        steps = 0
        while True:
            a = np.clip(np.asarray(select_action(actor, s, 0.0, None), dtype=float), -1.0, 1.0)
            s, _, terminated, truncated, outcome = env.step(a)
            steps += 1
            if terminated or truncated:
                break
        results.append((outcome, steps))
    return results


TEST_SEED_OFFSET = 1_000_000  # keeps test scenarios disjoint from training draws


@dataclass
class ArmResult:
    variant: str
    seed: int
    train_succ: float
    test_succ: float
    train_steps: float
    test_steps: float
    checkpoint: Path | None = None

    def row(self) -> list:
        return [self.variant, f"{self.train_succ:.4f}", f"{self.test_succ:.4f}",
                f"{self.train_steps:.2f}", f"{self.test_steps:.2f}"]


def train_and_test(cfg: WorldConfig, reward: RewardParams, td3: Td3Config, seed: int, variant: str,
                   out_dir: str | Path, test_cfg: WorldConfig | None = None, test_episodes: int = 100,
                   reuse: bool = True) -> ArmResult:
    """Train one arm (or reuse a finished run in ``out_dir``) and score it."""
    out = Path(out_dir)
    ckpt, log_path = out / "checkpoint.mpt3", out / "train_log.csv"
    if reuse and ckpt.exists() and log_path.exists():
        log = read_log(log_path)
    else:
        log = train(cfg, reward, td3, seed, out).log
    tail = log[-100:]
    train_succ = sum(e.outcome == "success" for e in tail) / max(len(tail), 1)
    train_steps = float(np.mean([e.steps for e in tail])) if tail else math.nan
    actor = load_actor(ckpt)
    test = rollout_policy(actor, test_cfg or cfg, test_episodes, TEST_SEED_OFFSET + 1000 * seed, reward)
    test_succ = sum(o == "success" for o, _ in test) / len(test)
    test_steps = float(np.mean([s for _, s in test]))
    return ArmResult(variant, seed, train_succ, test_succ, train_steps, test_steps, ckpt)


def compare_rewards(scenario: Scenario, seeds: list[int], out_dir: str | Path,
                    test_episodes: int = 100, baseline: RewardParams | None = None,
                    reuse: bool = True) -> dict[str, list[ArmResult]]:
    """Train the shaped and baseline reward arms on every seed and tabulate both."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    proposed = scenario.rewards
    baseline = baseline if baseline is not None else replace(proposed, variant="baseline")
    arms: dict[str, list[ArmResult]] = {"proposed": [], "baseline": []}
    for variant, reward in (("proposed", proposed), ("baseline", baseline)):
        for seed in seeds:
            arms[variant].append(train_and_test(scenario.world, reward, scenario.td3, seed, variant,
                                                out / f"{variant}_seed{seed}", test_episodes=test_episodes,
                                                reuse=reuse))
    rows = []
    for variant, results in arms.items():
        rows.append([variant,
                     f"{np.mean([r.train_succ for r in results]):.4f}",
                     f"{np.mean([r.test_succ for r in results]):.4f}",
                     f"{np.mean([r.train_steps for r in results]):.2f}",
                     f"{np.mean([r.test_steps for r in results]):.2f}"])
    _write_csv(out / "summary.csv", COMPARE_COLUMNS, rows)
    _write_csv(out / "per_seed.csv", ("seed",) + COMPARE_COLUMNS,
               [[r.seed] + r.row() for res in arms.values() for r in res])
    return arms


def compare_layouts(scenario: Scenario, seeds: list[int], out_dir: str | Path,
                    test_episodes: int = 200, reuse: bool = True) -> dict[str, list[ArmResult]]:
    """Train with a fixed obstacle layout and with per-episode layouts; test both on random layouts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    random_cfg = replace(scenario.world, randomize_layout=True)
    fixed_cfg = replace(scenario.world, randomize_layout=False)
    arms: dict[str, list[ArmResult]] = {"random": [], "fixed": []}
    for variant, cfg in (("random", random_cfg), ("fixed", fixed_cfg)):
        for seed in seeds:
            arms[variant].append(train_and_test(cfg, scenario.rewards, scenario.td3, seed, variant,
                                                out / f"{variant}_seed{seed}", test_cfg=random_cfg,
                                                test_episodes=test_episodes, reuse=reuse))
    _write_csv(out / "summary.csv", ("seed",) + COMPARE_COLUMNS,
               [[r.seed] + r.row() for res in arms.values() for r in res])
    return arms


def best_arm(results: list[ArmResult]) -> ArmResult:
    return max(results, key=lambda r: (r.train_succ, -r.seed))

