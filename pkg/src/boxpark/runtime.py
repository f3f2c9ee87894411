"""Shared run assembly: robot + references + layout + environment from an
ExperimentConfig."""

from __future__ import annotations

from pathlib import Path

from .config import ExperimentConfig
from .curriculum import AssistGains
from .env import EnvConfig, ParkourEnv
from .motion import ReferenceMotion, mirror
from .robot import RobotModel, load_robot
from .synth import synth_reference
from .terrain import BoxLayout, flat_layout, single_box_layout


def prepare_refs(cfg: ExperimentConfig, robot: RobotModel) -> dict[str, list[ReferenceMotion]]:
    """Load reference clips from files, or synthesize them, then apply the
    mirror augmentation where enabled."""
    clips: list[ReferenceMotion] = []
    if cfg.reference_files:
        for p in cfg.reference_files:
            m = ReferenceMotion.load_json(p)
            if m.skill_label != cfg.skill:
                raise ValueError(f"{p}: clip skill {m.skill_label!r} != configured {cfg.skill!r}")
            clips.append(m)
    else:
        clips.append(synth_reference(cfg.skill, box_height=cfg.env.box_height,
                                     robot=robot, box_edge_x=cfg.env.box_edge_x))
    if cfg.mirror_enabled():
        clips = clips + [mirror(m, robot.mirror_perm, robot.mirror_sign) for m in clips]
    return {cfg.skill: clips}


def make_layout(env_cfg: EnvConfig) -> BoxLayout:
    if env_cfg.skill == "walk":
        return flat_layout(env_cfg.walk_goal_x)
    return single_box_layout(env_cfg.box_edge_x, env_cfg.box_height)


def make_env(cfg: ExperimentConfig, num_envs: int, seed: int,
             noise: bool | None = None, domain_rand: bool | None = None,
             layout: BoxLayout | None = None,
             refs: dict | None = None) -> ParkourEnv:
    robot = load_robot(cfg.robot_file)
    if refs is None:
        refs = prepare_refs(cfg, robot)
    if layout is None:
        layout = make_layout(cfg.env)
    env_cfg = cfg.env
    if domain_rand is not None:
        import copy
        env_cfg = copy.deepcopy(env_cfg)
        env_cfg.domain_rand.enabled = domain_rand
        env_cfg.domain_rand.pushes_enabled = domain_rand
    gains = AssistGains(M=robot.total_mass, I=robot.base_inertia.copy(),
                        r_b_com=robot.com_offset.copy(), g=robot.gravity.copy())
    return ParkourEnv(robot, env_cfg, cfg.reward, layout, refs, num_envs, seed,
                      assist_gains=gains, noise_override=noise)
