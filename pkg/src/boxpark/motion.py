"""Reference motions: storage, interpolation, mirroring, and reference-state
initialization (RSI).

Reference clips are consumed only by the reward engine, the assistive wrench,
and episode initialization; they are never part of the policy observation.
Clips are stored as versioned JSON (see MOTION_SCHEMA_VERSION) with per-frame
arrays; reference accelerations are not stored but derived at load time by
central finite differences of the stored velocities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import so3
from .state import RobotState

MOTION_SCHEMA_VERSION = 1
SKILLS = ("walk", "walk_jump", "walk_climb", "climb_down")


class MotionError(ValueError):
    pass


@dataclass
class ReferenceFrame:
    time: float
    base_pos: np.ndarray       # (3,)
    base_quat: np.ndarray      # (4,) unit
    base_linvel: np.ndarray    # (3,)
    base_angvel: np.ndarray    # (3,)
    base_linacc: np.ndarray    # (3,)
    base_angacc: np.ndarray    # (3,)
    joint_pos: np.ndarray      # (nj,)
    joint_vel: np.ndarray      # (nj,)


_CHANNELS = ("base_pos", "base_linvel", "base_angvel", "joint_pos", "joint_vel")


class ReferenceMotion:
    """Immutable, uniformly sampled reference clip.

    Invariants enforced at construction: at least 2 frames, strictly increasing
    times with uniform spacing 1/frame_rate (1e-9), unit quaternions (1e-9),
    and joint_pos/joint_vel of matching width.
    """

    def __init__(
        self,
        times: np.ndarray,
        base_pos: np.ndarray,
        base_quat: np.ndarray,
        base_linvel: np.ndarray,
        base_angvel: np.ndarray,
        joint_pos: np.ndarray,
        joint_vel: np.ndarray,
        frame_rate: float,
        skill_label: str,
        joint_names: list[str] | None = None,
    ):
        if skill_label not in SKILLS:
            raise MotionError(f"unknown skill label: {skill_label!r}")
        times = np.asarray(times, dtype=np.float64)
        if times.ndim != 1 or times.size < 2:
            raise MotionError("a reference motion needs at least 2 frames")
        dt = np.diff(times)
        if np.any(dt <= 0):
            raise MotionError("frame times must be strictly increasing")
        if np.any(np.abs(dt - 1.0 / frame_rate) > 1e-9):
            raise MotionError("frame spacing must equal 1/frame_rate within 1e-9")
        base_quat = np.asarray(base_quat, dtype=np.float64)
        norms = np.linalg.norm(base_quat, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise MotionError("base_quat frames must have unit norm within 1e-9")
        joint_pos = np.asarray(joint_pos, dtype=np.float64)
        joint_vel = np.asarray(joint_vel, dtype=np.float64)
        if joint_pos.shape != joint_vel.shape:
            raise MotionError("joint_pos and joint_vel must have identical shape")

        self.times = times
        self.base_pos = np.asarray(base_pos, dtype=np.float64)
        self.base_quat = base_quat
        self.base_linvel = np.asarray(base_linvel, dtype=np.float64)
        self.base_angvel = np.asarray(base_angvel, dtype=np.float64)
        self.joint_pos = joint_pos
        self.joint_vel = joint_vel
        self.frame_rate = float(frame_rate)
        self.skill_label = skill_label
        self.joint_names = list(joint_names) if joint_names else [f"j{i}" for i in range(joint_pos.shape[1])]
        self.base_linacc = _central_diff(self.base_linvel, 1.0 / frame_rate)
        self.base_angacc = _central_diff(self.base_angvel, 1.0 / frame_rate)

    @property
    def num_frames(self) -> int:
        return self.times.size

    @property
    def num_joints(self) -> int:
        return self.joint_pos.shape[1]

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def frame_at(self, index: int) -> ReferenceFrame:
        i = int(index)
        return ReferenceFrame(
            time=float(self.times[i]),
            base_pos=self.base_pos[i].copy(),
            base_quat=self.base_quat[i].copy(),
            base_linvel=self.base_linvel[i].copy(),
            base_angvel=self.base_angvel[i].copy(),
            base_linacc=self.base_linacc[i].copy(),
            base_angacc=self.base_angacc[i].copy(),
            joint_pos=self.joint_pos[i].copy(),
            joint_vel=self.joint_vel[i].copy(),
        )

    def sample_arrays(self, ts: np.ndarray) -> dict[str, np.ndarray]:
        """Vectorized interpolation at times ts (clamped to the clip range)."""
        ts = np.asarray(ts, dtype=np.float64)
        t = np.clip(ts, self.times[0], self.times[-1])
        hi = np.clip(np.searchsorted(self.times, t, side="right"), 1, self.num_frames - 1)
        lo = hi - 1
        t0 = self.times[lo]
        u = np.clip((t - t0) * self.frame_rate, 0.0, 1.0)
        out: dict[str, np.ndarray] = {}
        for name in _CHANNELS + ("base_linacc", "base_angacc"):
            arr = getattr(self, name)
            out[name] = arr[lo] + (arr[hi] - arr[lo]) * u[..., None]
        out["base_quat"] = so3.quat_slerp(self.base_quat[lo], self.base_quat[hi], u)
        out["time"] = t
        return out

    def save_json(self, path: str | Path) -> None:
        doc = {
            "version": MOTION_SCHEMA_VERSION,
            "frame_rate": self.frame_rate,
            "skill": self.skill_label,
            "joint_names": self.joint_names,
            "frames": {
                "time": self.times.tolist(),
                "base_pos": self.base_pos.tolist(),
                "base_quat": self.base_quat.tolist(),
                "base_linvel": self.base_linvel.tolist(),
                "base_angvel": self.base_angvel.tolist(),
                "joint_pos": self.joint_pos.tolist(),
                "joint_vel": self.joint_vel.tolist(),
            },
        }
        with open(path, "w") as f:
            json.dump(doc, f)

    @classmethod
    def load_json(cls, path: str | Path) -> "ReferenceMotion":
        with open(path) as f:
            doc = json.load(f)
        if doc.get("version") != MOTION_SCHEMA_VERSION:
            raise MotionError(f"unsupported motion schema version: {doc.get('version')}")
        fr = doc["frames"]
        return cls(
            times=np.asarray(fr["time"]),
            base_pos=np.asarray(fr["base_pos"]),
            base_quat=np.asarray(fr["base_quat"]),
            base_linvel=np.asarray(fr["base_linvel"]),
            base_angvel=np.asarray(fr["base_angvel"]),
            joint_pos=np.asarray(fr["joint_pos"]),
            joint_vel=np.asarray(fr["joint_vel"]),
            frame_rate=float(doc["frame_rate"]),
            skill_label=doc["skill"],
            joint_names=doc.get("joint_names"),
        )


def _central_diff(v: np.ndarray, dt: float) -> np.ndarray:
    acc = np.empty_like(v)
    acc[1:-1] = (v[2:] - v[:-2]) / (2.0 * dt)
    acc[0] = (v[1] - v[0]) / dt
    acc[-1] = (v[-1] - v[-2]) / dt
    return acc


@dataclass(frozen=True)
class InitPerturbation:
    """Uniform perturbation ranges applied around the sampled reference state."""

    dx_range: float
    dy_range: float
    yaw_range: float
    rollpitch_range: float

    def __post_init__(self):
        for nm in ("dx_range", "dy_range", "yaw_range", "rollpitch_range"):
            if getattr(self, nm) < 0:
                raise MotionError(f"{nm} must be non-negative")

    def scaled(self, s: float) -> "InitPerturbation":
        return InitPerturbation(self.dx_range * s, self.dy_range * s,
                                self.yaw_range * s, self.rollpitch_range * s)


# Table defaults: +-0.4 m / +-0.8 rad / +-0.15 rad for walk-jump and walk-climb,
# +-0.2 m / +-0.6 rad / +-0.15 rad for climb-down. Plain walking reuses the
# walk-jump ranges.
INIT_PERTURBATIONS = {
    "walk": InitPerturbation(0.4, 0.4, 0.8, 0.15),
    "walk_jump": InitPerturbation(0.4, 0.4, 0.8, 0.15),
    "walk_climb": InitPerturbation(0.4, 0.4, 0.8, 0.15),
    "climb_down": InitPerturbation(0.2, 0.2, 0.6, 0.15),
}


def sample_frame(motion: ReferenceMotion, t: float) -> tuple[ReferenceFrame, bool]:
    """Interpolated frame at time t.

    Linear interpolation for vector channels, normalized slerp for the
    quaternion. Out-of-range t clamps to the boundary frame and sets the
    clamped flag instead of raising.
    """
    clamped = bool(t < motion.times[0]) or bool(t > motion.times[-1])
    arrs = motion.sample_arrays(np.asarray(float(t)))
    frame = ReferenceFrame(
        time=float(arrs["time"]),
        base_pos=arrs["base_pos"],
        base_quat=arrs["base_quat"],
        base_linvel=arrs["base_linvel"],
        base_angvel=arrs["base_angvel"],
        base_linacc=arrs["base_linacc"],
        base_angacc=arrs["base_angacc"],
        joint_pos=arrs["joint_pos"],
        joint_vel=arrs["joint_vel"],
    )
    return frame, clamped


def mirror(motion: ReferenceMotion, perm: np.ndarray | None, signs: np.ndarray | None) -> ReferenceMotion:
    """Left-right mirrored clip (reflection across the x-z plane).

    Requires the robot's joint pairing permutation and per-joint sign map;
    a missing map is a configuration error.
    """
    if perm is None or signs is None:
        raise MotionError("robot model declares no left-right joint pairing; cannot mirror")
    perm = np.asarray(perm, dtype=int)
    signs = np.asarray(signs, dtype=np.float64)
    return ReferenceMotion(
        times=motion.times.copy(),
        base_pos=so3.mirror_vec_xz(motion.base_pos),
        base_quat=so3.mirror_quat_xz(motion.base_quat),
        base_linvel=so3.mirror_vec_xz(motion.base_linvel),
        base_angvel=so3.mirror_angvec_xz(motion.base_angvel),
        joint_pos=motion.joint_pos[:, perm] * signs,
        joint_vel=motion.joint_vel[:, perm] * signs,
        frame_rate=motion.frame_rate,
        skill_label=motion.skill_label,
        joint_names=motion.joint_names,
    )


def sample_rsi(
    motion: ReferenceMotion,
    perturb: InitPerturbation,
    rng: np.random.Generator,
) -> tuple[RobotState, float]:
    """Reference state initialization: uniform phase plus base-pose offsets.

    The returned state equals the sampled frame with x, y, yaw, roll, and pitch
    offset by independent uniform draws; joint state and base velocities are
    copied unperturbed. Orientation offsets compose as extrinsic rotations,
    yaw first, then pitch about world y, then roll about world x.
    """
    phase = float(rng.uniform(0.0, motion.duration))
    frame, _ = sample_frame(motion, motion.times[0] + phase)
    dx = rng.uniform(-perturb.dx_range, perturb.dx_range)
    dy = rng.uniform(-perturb.dy_range, perturb.dy_range)
    dyaw = rng.uniform(-perturb.yaw_range, perturb.yaw_range)
    droll = rng.uniform(-perturb.rollpitch_range, perturb.rollpitch_range)
    dpitch = rng.uniform(-perturb.rollpitch_range, perturb.rollpitch_range)

    pos = frame.base_pos.copy()
    pos[0] += dx
    pos[1] += dy
    quat = so3.quat_mul(
        so3.quat_from_roll(droll),
        so3.quat_mul(so3.quat_from_pitch(dpitch),
                     so3.quat_mul(so3.quat_from_yaw(dyaw), frame.base_quat)),
    )
    state = RobotState(
        base_pos=pos,
        base_quat=so3.quat_normalize(quat),
        base_linvel=frame.base_linvel.copy(),
        base_angvel=frame.base_angvel.copy(),
        joint_pos=frame.joint_pos.copy(),
        joint_vel=frame.joint_vel.copy(),
    )
    return state, phase
