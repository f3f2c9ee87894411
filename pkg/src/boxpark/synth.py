"""Procedural reference clips for the planar biped.

Each generator lays out a base trajectory and per-foot world paths (stepping
plans, arcs over box corners), then converts foot paths to hip/knee angles with
closed-form two-link IK. Velocities come from central differences, so clips are
kinematically self-consistent. Clips are stylized, not dynamically feasible;
they only shape rewards and initial states.

Conventions: the robot walks toward +x; the box front edge sits at
`box_edge_x` (default 2.0 m) and the box is `2 * half_width` deep.
"""

from __future__ import annotations

import numpy as np

from . import so3
from .motion import ReferenceMotion
from .robot import RobotModel, default_planar_biped

BOX_EDGE_X = 2.0
BOX_HALF_WIDTH = 0.4

_WALK_HEIGHT = 0.78
_WALK_SPEED = 0.6
_STRIDE = 0.8          # full stride period, seconds
_SWING_H = 0.07


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _scalar_path(times: np.ndarray, keys: list[tuple[float, float]]) -> np.ndarray:
    """Piecewise smoothstep through (time, value) keyframes; flat outside."""
    out = np.full_like(times, keys[0][1], dtype=np.float64)
    for (t0, v0), (t1, v1) in zip(keys[:-1], keys[1:]):
        m = (times >= t0) & (times <= t1)
        if t1 > t0:
            s = _smoothstep((times[m] - t0) / (t1 - t0))
            out[m] = v0 + (v1 - v0) * s
        out[times > t1] = v1
    return out


def _velocity_profile_x(times: np.ndarray, t_go: float, v: float, dist: float,
                        ramp: float = 0.4) -> tuple[np.ndarray, float]:
    """Base x from a trapezoidal speed profile; returns (x, time walking ends)."""
    cruise = max(dist / v - ramp, 0.0)
    t_stop = t_go + ramp + cruise + ramp
    vel = np.zeros_like(times)
    for i, t in enumerate(times):
        if t < t_go or t > t_stop:
            continue
        if t < t_go + ramp:
            vel[i] = v * _smoothstep((t - t_go) / ramp)
        elif t <= t_go + ramp + cruise:
            vel[i] = v
        else:
            vel[i] = v * _smoothstep((t_stop - t) / ramp)
    dt = times[1] - times[0]
    x = np.concatenate([[0.0], np.cumsum(0.5 * (vel[1:] + vel[:-1]) * dt)])
    # normalize the integrated distance to hit `dist` exactly
    if x[-1] > 0:
        x = x * (dist / x[-1])
    return x, t_stop


def _stepping_plan(times, xb, t_walk0, t_walk1, stride=_STRIDE, swing_h=_SWING_H):
    """Alternating-leg stepping: foot world (x, z) for left and right.

    During each half-stride one foot swings to the midpoint of its upcoming
    stance window while the other stays planted; the plan converges to both
    feet under the base once xb stops changing.
    """
    half = stride / 2.0
    t_last = times[-1]
    n = times.size
    fx = np.zeros((n, 2))
    fz = np.zeros((n, 2))
    plant = [xb[0], xb[0]]

    def xb_at(t):
        return float(np.interp(t, times, xb))

    k = 0
    win0 = t_walk0
    events = []
    while win0 + half <= min(t_walk1 + stride, t_last) + 1e-9:
        events.append((win0, win0 + half, k % 2))
        win0 += half
        k += 1

    for i, t in enumerate(times):
        cur = None
        for (a, b, leg) in events:
            if a <= t < b:
                cur = (a, b, leg)
                break
        if cur is None:
            fx[i] = plant
            continue
        a, b, leg = cur
        target = 0.5 * (xb_at(b) + xb_at(min(b + half, t_last)))
        s = (t - a) / (b - a)
        start = plant[leg]
        fx[i, leg] = start + (target - start) * _smoothstep(s)
        fz[i, leg] = swing_h * np.sin(np.pi * np.clip(s, 0.0, 1.0))
        fx[i, 1 - leg] = plant[1 - leg]
        if i + 1 < n and times[i + 1] >= b:
            plant[leg] = target
    return fx, fz


def _assemble(times, base_x, base_z, pitch, foot_x, foot_z, skill, robot, frame_rate):
    """Convert base + foot world paths into a ReferenceMotion via leg IK."""
    n = times.size
    nj = robot.num_joints
    q = np.zeros((n, nj))
    reach = None
    for i in range(n):
        c, s = np.cos(pitch[i]), np.sin(pitch[i])
        for k, leg in enumerate(robot.legs):
            if reach is None:
                reach = 0.98 * (leg.thigh_length + leg.shank_length)
            dxw = foot_x[i, k] - base_x[i]
            dzw = foot_z[i, k] - base_z[i]
            bx = c * dxw - s * dzw
            bz = s * dxw + c * dzw
            r = np.hypot(bx, bz)
            if r > reach:
                bx, bz = bx * reach / r, bz * reach / r
            hip, knee = robot.leg_ik(leg, (bx, bz))
            q[i, leg.hip_joint] = hip
            q[i, leg.knee_joint] = knee

    dt = 1.0 / frame_rate
    base_pos = np.stack([base_x, np.zeros(n), base_z], axis=-1)
    linvel = np.gradient(base_pos, dt, axis=0)
    pitch_rate = np.gradient(pitch, dt)
    angvel = np.stack([np.zeros(n), pitch_rate, np.zeros(n)], axis=-1)
    joint_vel = np.gradient(q, dt, axis=0)
    return ReferenceMotion(
        times=times,
        base_pos=base_pos,
        base_quat=so3.quat_from_pitch(pitch),
        base_linvel=linvel,
        base_angvel=angvel,
        joint_pos=q,
        joint_vel=joint_vel,
        frame_rate=frame_rate,
        skill_label=skill,
        joint_names=robot.joint_names,
    )


def _times(duration, frame_rate):
    n = int(round(duration * frame_rate)) + 1
    return np.arange(n) / frame_rate


def _gen_walk(robot, frame_rate, distance=2.5):
    t_go, stand_post = 1.0, 1.2
    times = _times(t_go + distance / _WALK_SPEED + 0.8 + stand_post + _STRIDE, frame_rate)
    x, t_stop = _velocity_profile_x(times, t_go, _WALK_SPEED, distance)
    z = np.full_like(times, _WALK_HEIGHT)
    pitch = np.zeros_like(times)
    fx, fz = _stepping_plan(times, x, t_go, t_stop)
    return times, x, z, pitch, fx, fz


def _gen_walk_jump(robot, frame_rate, box_h, edge):
    x_to = edge - 0.35
    t_go = 0.8
    walk_end_pad = _STRIDE + 0.3
    t_walk, walk_dist = None, x_to
    # walk segment
    dur_walk = t_go + walk_dist / _WALK_SPEED + 0.8 + walk_end_pad
    t_crouch0 = dur_walk
    t_launch0 = t_crouch0 + 0.45
    t_takeoff = t_launch0 + 0.14
    # ballistic flight onto the box top
    dz_land = (box_h + 0.74) - 0.82
    apex = max(dz_land, 0.0) + 0.18
    g = 9.81
    v0 = np.sqrt(2.0 * g * apex)
    t_up = v0 / g
    t_down = np.sqrt(max(2.0 * (apex - dz_land) / g, 1e-6))
    t_flight = t_up + t_down
    t_land = t_takeoff + t_flight
    t_settle = t_land + 0.5
    duration = t_settle + 1.2
    times = _times(duration, frame_rate)

    x, t_stop = _velocity_profile_x(times, t_go, _WALK_SPEED, walk_dist)
    # forward motion through flight
    x_land = edge + 0.35
    fly = (times >= t_takeoff) & (times <= t_land)
    x[fly] = x_to + (x_land - x_to) * (times[fly] - t_takeoff) / t_flight
    x[times > t_land] = x_land

    z = _scalar_path(times, [
        (0.0, _WALK_HEIGHT),
        (t_crouch0, _WALK_HEIGHT),
        (t_launch0, 0.60),
        (t_takeoff, 0.82),
    ])
    tf = times[fly] - t_takeoff
    z[fly] = 0.82 + v0 * tf - 0.5 * g * tf * tf
    after = times > t_land
    z[after] = _scalar_path(times, [
        (t_land, box_h + 0.74),
        (t_land + 0.3, box_h + 0.70),
        (t_settle, box_h + 0.78),
    ])[after]

    pitch = _scalar_path(times, [
        (0.0, 0.0), (t_crouch0, 0.0), (t_launch0, 0.18), (t_takeoff, 0.05),
        (t_land, 0.12), (t_settle, 0.0),
    ])

    fx, fz = _stepping_plan(times, np.minimum(x, x_to), t_go, t_stop)
    # crouch/launch: both feet planted at the takeoff point
    planted = (times >= t_crouch0) & (times <= t_takeoff)
    fx[planted] = x_to
    fz[planted] = 0.0
    # flight: feet track the base with a tuck bump
    tuck = 0.26 * np.sin(np.pi * np.clip((times[fly] - t_takeoff) / t_flight, 0, 1))
    for k in range(2):
        fx[fly, k] = x[fly]
        fz[fly, k] = z[fly] - 0.80 + tuck + (times[fly] - t_takeoff) / t_flight * 0.06
    fx[after] = x_land
    fz[after] = box_h
    return times, x, z, pitch, fx, fz


def _gen_walk_climb(robot, frame_rate, box_h, edge):
    x_to = edge - 0.30
    t_go = 0.8
    dur_walk = t_go + x_to / _WALK_SPEED + 0.8 + _STRIDE + 0.3
    t0 = dur_walk              # lead foot starts onto the box
    t1 = t0 + 0.6              # lead planted on box top
    t2 = t1 + 0.8              # base risen on lead leg
    t3 = t2 + 0.7              # trail foot planted on box top
    t4 = t3 + 0.6              # base fully up
    duration = t4 + 1.2
    times = _times(duration, frame_rate)

    x, t_stop = _velocity_profile_x(times, t_go, _WALK_SPEED, x_to)
    x = _scalar_path(times, [
        (t0, x_to), (t1, x_to + 0.06), (t2, edge + 0.10),
        (t3, edge + 0.24), (t4, edge + 0.38),
    ]) * (times >= t0) + x * (times < t0)
    z = _scalar_path(times, [
        (0.0, _WALK_HEIGHT), (t0, _WALK_HEIGHT), (t1, 0.74),
        (t2, box_h + 0.52), (t3, box_h + 0.64), (t4, box_h + 0.78),
    ])
    pitch = _scalar_path(times, [
        (0.0, 0.0), (t0, 0.05), (t1, 0.22), (t2, 0.18), (t4, 0.0),
    ])

    fx, fz = _stepping_plan(times, np.minimum(x, x_to), t_go, t_stop)
    lead_x = edge + 0.18
    trail_x = edge + 0.50
    seq = times >= t0
    # lead foot (left): ground -> arc over the corner -> box top
    fx[seq, 0] = _scalar_path(times, [(t0, x_to), (t0 + 0.3, edge + 0.02), (t1, lead_x)])[seq]
    fz[seq, 0] = _scalar_path(times, [(t0, 0.0), (t0 + 0.3, box_h + 0.14), (t1, box_h)])[seq]
    # trail foot (right): planted during the rise, then swings up
    t_lift = t1 + 0.18
    fx[seq, 1] = _scalar_path(times, [(t0, x_to), (t_lift, x_to),
                                      (t_lift + 0.35, edge + 0.10), (t3, trail_x)])[seq]
    fz[seq, 1] = _scalar_path(times, [(t0, 0.0), (t_lift, 0.0),
                                      (t_lift + 0.35, box_h + 0.16), (t3, box_h)])[seq]
    after = times >= t3
    fx[after, 0] = lead_x
    fz[after, 0] = box_h
    fx[after, 1] = trail_x
    fz[after, 1] = box_h
    return times, x, z, pitch, fx, fz


def _gen_climb_down(robot, frame_rate, box_h, edge):
    # the robot starts centered on the box and steps down past the far edge
    center = edge + BOX_HALF_WIDTH
    far = edge + 2.0 * BOX_HALF_WIDTH
    x0 = center
    t0 = 0.8                  # end of initial stand
    t1 = t0 + 0.5             # forward shift
    t2 = t1 + 1.0             # deep crouch, lead foot reaches ground
    t3 = t2 + 0.6             # weight onto lead foot
    t4 = t3 + 0.7             # trail foot down
    t5 = t4 + 0.7             # settled
    duration = t5 + 1.2
    times = _times(duration, frame_rate)

    lead_ground = far + 0.22
    trail_ground = far + 0.48
    x = _scalar_path(times, [
        (0.0, x0), (t0, x0), (t1, far - 0.18), (t2, far - 0.05),
        (t3, far + 0.20), (t4, far + 0.32), (t5, far + 0.35),
    ])
    z = _scalar_path(times, [
        (0.0, box_h + 0.78), (t0, box_h + 0.78), (t1, box_h + 0.66),
        (t2, box_h + 0.30), (t3, 0.72), (t4, 0.74), (t5, 0.78),
    ])
    pitch = _scalar_path(times, [
        (0.0, 0.0), (t1, 0.15), (t2, 0.30), (t3, 0.12), (t5, 0.0),
    ])

    n = times.size
    fx = np.zeros((n, 2))
    fz = np.zeros((n, 2))
    # trail foot (right) holds the box until the weight transfer, then swings down
    fx[:, 1] = _scalar_path(times, [(0.0, x0 + 0.05), (t3, x0 + 0.05),
                                    (t3 + 0.2, far + 0.10), (t4, trail_ground)])
    fz[:, 1] = _scalar_path(times, [(0.0, box_h), (t3, box_h),
                                    (t3 + 0.2, box_h * 0.5), (t4, 0.0)])
    # lead foot (left) reaches down ahead of the box
    fx[:, 0] = _scalar_path(times, [(0.0, x0 - 0.05), (t1, x0 - 0.05),
                                    (t1 + 0.3, far + 0.10), (t2, lead_ground)])
    fz[:, 0] = _scalar_path(times, [(0.0, box_h), (t1, box_h),
                                    (t1 + 0.3, box_h + 0.10), (t2, 0.0)])
    return times, x, z, pitch, fx, fz


def synth_reference(
    skill: str,
    box_height: float = 0.5,
    robot: RobotModel | None = None,
    frame_rate: float = 50.0,
    box_edge_x: float = BOX_EDGE_X,
) -> ReferenceMotion:
    """Generate the procedural reference clip for a skill.

    Skills: walk (flat ground), walk_jump / walk_climb (onto a box of
    `box_height` whose front edge is at `box_edge_x`), climb_down (off that box,
    starting on top).
    """
    robot = robot or default_planar_biped()
    if skill == "walk":
        parts = _gen_walk(robot, frame_rate)
    elif skill == "walk_jump":
        parts = _gen_walk_jump(robot, frame_rate, box_height, box_edge_x)
    elif skill == "walk_climb":
        parts = _gen_walk_climb(robot, frame_rate, box_height, box_edge_x)
    elif skill == "climb_down":
        parts = _gen_climb_down(robot, frame_rate, box_height, box_edge_x)
    else:
        raise ValueError(f"unknown skill: {skill!r}")
    times, x, z, pitch, fx, fz = parts
    return _assemble(times, x, z, pitch, fx, fz, skill, robot, frame_rate)
