"""Command-line entry point: ``safenav <command> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import ConfigError, bundled_config, load_scenario
from .mptd3 import train
from .nn import CheckpointError
from .reward import gridworld, grid_distance_potential, pbrs_invariance_check, random_mdp
from .world import ScenarioError

EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3


def _scenario(path: str):
    p = Path(path)
    if not p.exists() and not p.suffix:
        p = bundled_config(path)
    return load_scenario(p)


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def cmd_train(args) -> int:
    sc = _scenario(args.config)

    def progress(t, result):
        n = len(result.log)
        if n % args.log_every == 0:
            print(f"step {t + 1:>8}  episodes {n:>6}  success(last 100) {result.success_rate():.2f}",
                  flush=True)

    result = train(sc.world, sc.rewards, sc.td3, args.seed, args.out, progress)
    print(f"final success rate over last 100 episodes: {result.success_rate():.3f}")
    print(f"wrote {Path(args.out) / 'checkpoint.mpt3'}")
    return 0


NOMINAL = {"policy": None, "go-to-goal": harness.go_to_goal}


def cmd_eval(args) -> int:
    sc = _scenario(args.scenario)
    mode = harness.Mode.parse(args.mode)
    nominal = NOMINAL[args.nominal]
    if nominal is None and args.checkpoint is None:
        raise ConfigError("--checkpoint is required unless --nominal go-to-goal is given")
    actor = harness.load_actor(args.checkpoint) if nominal is None else None
    summary, _ = harness.evaluate(actor, sc, mode, args.episodes, args.seed,
                                  args.out, trajectories=not args.no_traj, nominal=nominal)
    print(summary.table())
    return 0


def cmd_ablate(args) -> int:
    sc = _scenario(args.scenario)
    actor = harness.load_actor(args.checkpoint)
    harness.ablate(actor, sc, args.episodes, args.seed, args.out)
    print((Path(args.out) / "table.txt").read_text(), end="")
    return 0


def cmd_compare_rewards(args) -> int:
    sc = _scenario(args.config)
    arms = harness.compare_rewards(sc, args.seeds, args.out, test_episodes=args.test_episodes)
    print(",".join(harness.COMPARE_COLUMNS))
    print((Path(args.out) / "summary.csv").read_text().split("\n", 1)[1], end="")
    prop = np.mean([r.test_steps for r in arms["proposed"]])
    base = np.mean([r.test_steps for r in arms["baseline"]])
    print(f"test-steps ratio proposed/baseline: {prop / base:.3f}")
    return 0


def cmd_toy_pbrs(args) -> int:
    rng = np.random.default_rng(args.seed)
    ok = True
    for i in range(args.n):
        mdp = random_mdp(rng)
        phi = rng.normal(0.0, 5.0, mdp.n_states)
        passed = pbrs_invariance_check(mdp, phi, args.gamma, args.tol)
        ok &= passed
        print(f"random mdp {i:>3}: {'ok' if passed else 'FAILED'}")
    for slip in (0.0, 0.2):
        passed = pbrs_invariance_check(gridworld(5, slip), grid_distance_potential(5), args.gamma, args.tol)
        ok &= passed
        print(f"gridworld slip={slip}: {'ok' if passed else 'FAILED'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="safenav", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an agent")
    p.add_argument("--config", required=True, help="scenario TOML (or bundled name, e.g. desk_train)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log-every", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="deployment episodes in one mode")
    p.add_argument("--checkpoint")
    p.add_argument("--nominal", choices=sorted(NOMINAL), default="policy",
                   help="where the desired velocity comes from (default: the checkpoint's actor)")
    p.add_argument("--scenario", required=True)
    p.add_argument("--mode", default="RL_CLF_CBF_QP_10HZ", help=", ".join(m.value for m in harness.Mode))
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--no-traj", action="store_true", help="skip per-episode trajectory dumps")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run all five modes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("compare-rewards", help="shaped vs baseline reward training")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=_seeds, default=[0, 1, 2])
    p.add_argument("--out", required=True)
    p.add_argument("--test-episodes", type=int, default=100)
    p.set_defaults(func=cmd_compare_rewards)

    p = sub.add_parser("toy-pbrs", help="policy-invariance checks on tabular MDPs")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_toy_pbrs)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except ValueError as exc:
        if args.command in ("eval", "ablate") and "mode" in str(exc):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise


if __name__ == "__main__":
    sys.exit(main())
