"""Rule-based skill composer: a finite-state machine that inspects the box
layout and robot state, picks the next skill, and issues world-frame goals.

plan_step is a pure function of (robot, layout, composer state); the caller
advances timers with tick(). Skills switch only when the active goal's reach
predicate fires or the per-skill timeout elapses, with a dwell hysteresis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .rewards import ReachThresholds, reach_predicate
from .state import RobotState, WorldGoal
from .terrain import BoxLayout


@dataclass
class ComposerConfig:
    h_climb: tuple = (0.35, 0.70)     # relative box heights handled by climbing
    h_jump: tuple = (0.10, 0.35)      # relative box heights handled by jumping
    lookahead: float = 2.5
    jump_range: float = 2.0
    skill_timeout: float = 12.0
    dwell_min: float = 0.5
    climb_down_dist: float = 0.9      # goal distance ahead of the box center
    standing_height: float = 0.80
    max_retries: int = 1


@dataclass(frozen=True)
class ComposerState:
    active_skill: str = "init"        # init/walk/walk_jump/walk_climb/climb_down/done
    goal_x: float = 0.0
    goal_height: float = 0.80
    dwell_timer: float = 1.0e9        # time since the last switch
    skill_elapsed: float = 0.0
    layout_cursor: int = 0
    retries: int = 0
    status: str = "active"            # active | done | stuck


def tick(comp: ComposerState, dt: float) -> ComposerState:
    return replace(comp, dwell_timer=comp.dwell_timer + dt,
                   skill_elapsed=comp.skill_elapsed + dt)


def _world_goal(x: float, height: float) -> WorldGoal:
    return WorldGoal(pos_xy=np.array([x, 0.0]), height=np.asarray(height),
                     quat=np.array([1.0, 0.0, 0.0, 0.0]))


def _goal_of(comp: ComposerState) -> WorldGoal:
    return _world_goal(comp.goal_x, comp.goal_height)


def plan_step(
    robot: RobotState,
    layout: BoxLayout,
    comp: ComposerState,
    cfg: ComposerConfig | None = None,
    reach: ReachThresholds | None = None,
) -> tuple[ComposerState, str, WorldGoal]:
    """One FSM decision. Returns (new state, active skill, active world goal).

    Rules, in order: climb-down when standing on a box with the next waypoint
    below; walk-climb for boxes in the climb height band within lookahead;
    walk-jump for the jump band within jump range; walk toward the next
    waypoint otherwise.
    """
    cfg = cfg or ComposerConfig()
    reach = reach or ReachThresholds()
    if comp.status in ("done", "stuck"):
        return comp, comp.active_skill, _goal_of(comp)

    x = float(robot.base_pos[0])
    boxes = layout.boxes_sorted()
    cursor = comp.layout_cursor
    while cursor < len(boxes) and x > boxes[cursor].x_max + 0.05:
        cursor += 1

    reached = bool(reach_predicate(robot, _goal_of(comp), reach)) \
        if comp.active_skill != "init" else False
    timed_out = comp.skill_elapsed >= cfg.skill_timeout
    may_switch = comp.active_skill == "init" or (
        comp.dwell_timer >= cfg.dwell_min and (reached or timed_out))
    if not may_switch:
        return replace(comp, layout_cursor=cursor), comp.active_skill, _goal_of(comp)

    if timed_out and not reached and comp.active_skill != "init":
        if comp.retries >= cfg.max_retries:
            out = replace(comp, status="stuck", layout_cursor=cursor)
            return out, comp.active_skill, _goal_of(comp)
        # rule-based retry: reissue the same goal once
        out = replace(comp, retries=comp.retries + 1, skill_elapsed=0.0,
                      dwell_timer=0.0, layout_cursor=cursor)
        return out, out.active_skill, _goal_of(out)

    support = float(layout.support_height(np.asarray(x)))
    final_x = float(layout.final_target[0])
    on_box = support > 0.05

    if on_box:
        # R3: next waypoint is below; step down ahead of the box center
        box = next((b for b in boxes if b.x_min - 0.05 <= x <= b.x_max + 0.05), None)
        center = 0.5 * (box.x_min + box.x_max) if box is not None else x
        skill = "climb_down"
        goal_x = center + cfg.climb_down_dist
        goal_h = cfg.standing_height
    else:
        nxt = next((b for i, b in enumerate(boxes)
                    if i >= cursor and b.x_min >= x - 0.05), None)
        rel_h = (nxt.height - support) if nxt is not None else 0.0
        gap = (nxt.x_min - x) if nxt is not None else np.inf
        if nxt is not None and gap <= cfg.lookahead and \
                cfg.h_climb[0] <= rel_h <= cfg.h_climb[1]:
            skill = "walk_climb"                                   # R1
            goal_x = 0.5 * (nxt.x_min + nxt.x_max)
            goal_h = nxt.height + cfg.standing_height
        elif nxt is not None and gap <= cfg.jump_range and \
                cfg.h_jump[0] <= rel_h <= cfg.h_jump[1]:
            skill = "walk_jump"                                    # R2
            goal_x = 0.5 * (nxt.x_min + nxt.x_max)
            goal_h = nxt.height + cfg.standing_height
        elif nxt is not None and gap <= cfg.lookahead and rel_h > cfg.h_climb[1]:
            out = replace(comp, status="stuck", layout_cursor=cursor)
            return out, comp.active_skill, _goal_of(out)           # no rule applies
        else:
            skill = "walk"                                         # R4
            goal_x = final_x
            goal_h = cfg.standing_height
            if comp.active_skill == "walk" and reached and nxt is None:
                out = replace(comp, status="done", active_skill="done",
                              layout_cursor=cursor, dwell_timer=0.0)
                return out, "done", _goal_of(out)

    if skill == comp.active_skill and abs(goal_x - comp.goal_x) < 1e-9 and not reached:
        out = replace(comp, layout_cursor=cursor)
        return out, skill, _goal_of(out)
    out = replace(comp, active_skill=skill, goal_x=float(goal_x),
                  goal_height=float(goal_h), dwell_timer=0.0, skill_elapsed=0.0,
                  retries=0, layout_cursor=cursor)
    return out, skill, _goal_of(out)


@dataclass
class SkillSegment:
    skill: str
    t_start: float
    t_end: float
    success: bool


@dataclass
class SequenceReport:
    segments: list
    completed: bool
    status: str
    total_time: float
    final_x: float

    def to_dict(self) -> dict:
        return {
            "segments": [
                {"skill": s.skill, "t_start": s.t_start, "t_end": s.t_end,
                 "success": s.success}
                for s in self.segments
            ],
            "completed": self.completed,
            "status": self.status,
            "total_time": self.total_time,
            "final_x": self.final_x,
        }


def run_sequence(env, policies: dict, layout: BoxLayout,
                 cfg: ComposerConfig | None = None,
                 reach: ReachThresholds | None = None,
                 max_time: float = 90.0,
                 trajectory: list | None = None) -> SequenceReport:
    """Closed-loop composition on a single-env ParkourEnv.

    `policies` maps skill name to a PolicyNet (actions taken at the mean). The
    env must be built with the same layout; observation noise should be off.
    """
    cfg = cfg or ComposerConfig()
    reach = reach or ReachThresholds()
    comp = ComposerState(goal_x=float(layout.final_target[0]),
                         goal_height=cfg.standing_height)
    dt = env.cfg.control_dt
    segments: list[SkillSegment] = []
    seg_start = 0.0
    t = 0.0
    last_skill = None

    while t < max_time:
        state = env.sim.states()
        robot = RobotState(
            base_pos=state.base_pos[0], base_quat=state.base_quat[0],
            base_linvel=state.base_linvel[0], base_angvel=state.base_angvel[0],
            joint_pos=state.joint_pos[0], joint_vel=state.joint_vel[0])
        comp, skill, goal = plan_step(robot, layout, comp, cfg, reach)
        if comp.status in ("done", "stuck"):
            if last_skill is not None:
                segments.append(SkillSegment(last_skill, seg_start, t,
                                             comp.status == "done"))
            break
        if skill != last_skill:
            if last_skill is not None:
                segments.append(SkillSegment(last_skill, seg_start, t, True))
            last_skill = skill
            seg_start = t
        env.goal.pos_xy[0] = goal.pos_xy
        env.goal.height[0] = float(goal.height)
        env.goal.quat[0] = goal.quat

        if skill not in policies:
            raise KeyError(f"no policy for skill {skill!r}")
        obs = env.build_policy_obs(noise=False)
        action = policies[skill].mean(obs)
        _, _, _, done, info = env.step(action)
        if trajectory is not None:
            trajectory.append({
                "time": t, "skill": skill,
                "base_x": float(env.sim.x[0]), "base_z": float(env.sim.z[0]),
                "base_pitch": float(env.sim.th[0]),
                **{f"q{j}": float(env.sim.q[0, j]) for j in range(env.nj)},
            })
        comp = tick(comp, dt)
        t += dt
        if bool(done[0]) and info["reason"][0] != 1:  # fell or diverged
            if last_skill is not None:
                segments.append(SkillSegment(last_skill, seg_start, t, False))
            comp = replace(comp, status="stuck")
            break
        env.elapsed[0] = 0.0  # composition ignores the per-episode clock

    completed = comp.status == "done"
    return SequenceReport(segments=segments, completed=completed, status=comp.status,
                          total_time=t, final_x=float(env.sim.x[0]))
