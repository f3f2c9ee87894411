"""Command-line entry points: train, eval, compose, fixtures, synth-ref.

Exit codes: 0 success, 1 configuration error, 2 runtime divergence or oracle
disagreement, 3 missing artifact. Every run writes a manifest (config hash,
seed, build id) alongside its outputs. The BOXPARK_OUT_ROOT environment
variable prefixes relative output directories.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (CheckpointError, MetricsWriter, TrajectoryDumper,
                        check_checkpoint_dims, load_checkpoint, save_checkpoint,
                        write_manifest)
from .composer import run_sequence
from .config import ConfigError, ExperimentConfig
from .env import policy_obs_dim
from .evaluate import run_eval, write_outcomes_csv
from .fixtures import FixtureError, generate_fixtures
from .ppo import Trainer
from .rewards import ALL_TERMS
from .robot import default_planar_biped
from .runtime import make_env
from .synth import synth_reference
from .terrain import BoxLayout

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_MISSING = 3

METRIC_COLUMNS = [
    "iteration", "mean_step_reward", "mean_episode_reward", "mean_episode_length",
    "episodes", "imitation_episodes", "success_rate", "early_term_rate",
    "lambda", "beta", "p_imi", "kl", "lr", "policy_loss", "value_loss",
    "entropy", "aborted",
] + [f"reward/{t}" for t in ALL_TERMS]


def _out_dir(path: str) -> Path:
    root = os.environ.get("BOXPARK_OUT_ROOT")
    p = Path(path)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "skill", None):
        cfg.skill = args.skill
        cfg.env.skill = args.skill
    if getattr(args, "iterations", None) is not None:
        cfg.trainer.iterations = args.iterations
    for name in getattr(args, "ablate", []) or []:
        if not hasattr(cfg.ablate, name):
            raise ConfigError(f"unknown ablation flag {name!r}")
        setattr(cfg.ablate, name, True)
    return cfg


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg.out_dir)
    write_manifest(out, cfg.to_dict(), cfg.seed, {"command": "train"})
    cfg.to_json(out / "config_resolved.json")

    env = make_env(cfg, cfg.trainer.num_envs, cfg.seed)
    trainer = Trainer(env, cfg.reward, cfg.trainer, cfg.curriculum, cfg.seed,
                      ablation=cfg.ablate)
    writer = MetricsWriter(out / "metrics.csv", METRIC_COLUMNS)

    meta = {
        "skill": cfg.skill, "seed": cfg.seed,
        "obs_dim": policy_obs_dim(env.nj, env.nf), "act_dim": env.nj,
        "reference_free": cfg.ablate.no_imitation,
    }
    consecutive_aborts = 0
    for it in range(cfg.trainer.iterations):
        row = trainer.train_iteration()
        writer.write_row(row)
        consecutive_aborts = consecutive_aborts + 1 if row["aborted"] else 0
        if consecutive_aborts >= 3:
            save_checkpoint(out / "checkpoint_diverged.npz", trainer.actor,
                            trainer.critic, meta)
            print(f"training diverged at iteration {trainer.iteration}: "
                  "three consecutive non-finite updates", file=sys.stderr)
            return EXIT_DIVERGED
        if cfg.trainer.checkpoint_interval > 0 and \
                trainer.iteration % cfg.trainer.checkpoint_interval == 0:
            save_checkpoint(out / f"checkpoint_{trainer.iteration:06d}.npz",
                            trainer.actor, trainer.critic, meta)
    save_checkpoint(out / "checkpoint_final.npz", trainer.actor, trainer.critic, meta)
    print(f"wrote {out / 'checkpoint_final.npz'} and {out / 'metrics.csv'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args.out or cfg.out_dir)
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        print(f"missing checkpoint: {ckpt}", file=sys.stderr)
        return EXIT_MISSING
    actor, _, meta = load_checkpoint(ckpt)
    robot = default_planar_biped()
    check_checkpoint_dims(actor, policy_obs_dim(robot.num_joints, len(robot.legs)),
                          robot.num_joints)
    dump = None
    if args.dump_traj:
        nj = robot.num_joints
        dump = TrajectoryDumper(out / "trajectory.csv",
                                ["step", "time", "base_x", "base_z", "base_pitch"]
                                + [f"q{j}" for j in range(nj)] + ["reach_hold"])
    report = run_eval(actor, cfg, args.mode, args.trials, cfg.seed,
                      reference_free=bool(meta.get("reference_free", False)),
                      dump=dump)
    if dump is not None:
        dump.close()
    write_manifest(out, cfg.to_dict(), cfg.seed, {"command": "eval", "mode": args.mode})
    with open(out / "eval_report.json", "w") as f:
        json.dump(report.to_dict(), f, indent=1)
    write_outcomes_csv(report, out / "eval_outcomes.csv")
    print(json.dumps(report.to_dict(), indent=1))
    return EXIT_OK


def cmd_compose(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args.out or cfg.out_dir)
    policies = {}
    missing = []
    for spec in args.checkpoints:
        if "=" not in spec:
            print(f"--checkpoints entries must be skill=path, got {spec!r}", file=sys.stderr)
            return EXIT_CONFIG
        skill, path = spec.split("=", 1)
        if not Path(path).exists():
            missing.append(skill)
            continue
        actor, _, _ = load_checkpoint(path)
        policies[skill] = actor
    if missing:
        print(f"missing skill checkpoints: {', '.join(sorted(missing))}", file=sys.stderr)
        return EXIT_MISSING

    layout = BoxLayout.from_json(args.layout) if args.layout else None
    if layout is None:
        from .terrain import flat_layout
        layout = flat_layout(3.0)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]

    reports = []
    for seed in seeds:
        env = make_env(cfg, 1, seed, noise=False, domain_rand=False, layout=layout)
        start_x = layout.boxes_sorted()[0].x_min - 2.0 if layout.boxes else 0.0
        env.reset_all(eval_mode="nominal")
        env.sim.x[:] = start_x
        traj: list = []
        rep = run_sequence(env, policies, layout, cfg.composer, cfg.reward.reach,
                           trajectory=traj if args.dump_traj else None)
        reports.append({"seed": seed, **rep.to_dict()})
        if args.dump_traj and traj:
            dumper = TrajectoryDumper(out / f"compose_traj_seed{seed}.csv",
                                      list(traj[0].keys()))
            for row in traj:
                dumper.write(row)
            dumper.close()

    write_manifest(out, cfg.to_dict(), cfg.seed, {"command": "compose"})
    summary = {
        "sequences": reports,
        "completion_fraction": float(np.mean([r["completed"] for r in reports])),
    }
    with open(out / "compose_report.json", "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_fixtures(args) -> int:
    out = _out_dir(args.out)
    try:
        summary = generate_fixtures(out, seed=args.seed if args.seed is not None else 1234)
    except FixtureError as e:
        print(str(e), file=sys.stderr)
        return EXIT_DIVERGED
    write_manifest(out, {"command": "fixtures"}, args.seed or 1234,
                   {"command": "fixtures"})
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_synth_ref(args) -> int:
    motion = synth_reference(args.synth_skill, box_height=args.box_height)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    motion.save_json(out)
    print(f"wrote {out} ({motion.num_frames} frames, {motion.duration:.2f} s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boxpark",
                                description="Planar box-parkour multi-task RL")
    p.add_argument("--version", action="version", version=f"boxpark {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a skill policy")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--skill", choices=["walk", "walk_jump", "walk_climb", "climb_down"])
    t.add_argument("--iterations", type=int)
    t.add_argument("--ablate", action="append", default=[],
                   choices=["no_task_curriculum", "no_imitation", "no_generalization"])
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config")
    e.add_argument("--seed", type=int)
    e.add_argument("--skill", choices=["walk", "walk_jump", "walk_climb", "climb_down"])
    e.add_argument("--mode", choices=["nominal", "beyond_nominal"], default="nominal")
    e.add_argument("--trials", type=int, default=1000)
    e.add_argument("--out")
    e.add_argument("--dump-traj", action="store_true")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compose", help="run the skill composer on a layout")
    c.add_argument("--checkpoints", nargs="+", required=True,
                   help="skill=path entries, one per skill")
    c.add_argument("--layout")
    c.add_argument("--seeds", help="comma-separated seeds")
    c.add_argument("--config")
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    c.add_argument("--dump-traj", action="store_true")
    c.set_defaults(func=cmd_compose)

    f = sub.add_parser("fixtures", help="generate and verify oracle fixtures")
    f.add_argument("--out", default="fixtures")
    f.add_argument("--seed", type=int)
    f.set_defaults(func=cmd_fixtures)

    s = sub.add_parser("synth-ref", help="generate a procedural reference clip")
    s.add_argument("--synth-skill", required=True,
                   choices=["walk", "walk_jump", "walk_climb", "climb_down"])
    s.add_argument("--box-height", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_ref)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"missing artifact: {e}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
