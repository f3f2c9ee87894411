"""Robot description: a planar sagittal biped with point feet.

The model is loaded from a versioned JSON document (links, masses, joint limits,
torque limits, default pose, action scales, PD gains) so that the rest of the
stack stays model-agnostic. The default desk-scale robot is a 35 kg planar biped:
base (x, z, pitch) plus hip and knee per leg, 4 actuated DoF.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROBOT_SCHEMA_VERSION = 1


class RobotConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Leg:
    name: str
    hip_joint: int
    knee_joint: int
    thigh_length: float
    shank_length: float
    hip_offset: np.ndarray  # body frame (3,)


@dataclass
class RobotModel:
    name: str
    planar: bool
    total_mass: float
    base_inertia: np.ndarray          # (3,3) nominal base inertia
    com_offset: np.ndarray            # (3,) whole-body CoM w.r.t. base
    gravity: np.ndarray               # (3,)
    joint_names: list[str]
    q_lower: np.ndarray
    q_upper: np.ndarray
    torque_limit: np.ndarray
    q_default: np.ndarray             # default joint positions (residual-action origin)
    action_scale: np.ndarray          # positive per-DoF scale
    pd_kp: np.ndarray
    pd_kd: np.ndarray
    joint_inertia: np.ndarray         # reflected inertia per joint
    joint_damping: np.ndarray
    legs: list[Leg] = field(default_factory=list)
    mirror_perm: np.ndarray | None = None   # left-right joint pairing
    mirror_sign: np.ndarray | None = None
    nominal_height: float = 0.8
    # penalty-contact parameters
    contact_kn: float = 5.0e4
    contact_damping: float = 1.0      # Hunt-Crossley style: F = kn*phi*(1 + c*phi_dot)
    friction_vel_cap: float = 0.05    # tangential velocity regularization (m/s)
    contact_force_cap: float = 2000.0

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    @property
    def foot_names(self) -> list[str]:
        return [leg.name for leg in self.legs]

    def validate(self) -> None:
        n = self.num_joints
        for nm, arr in [
            ("q_lower", self.q_lower), ("q_upper", self.q_upper),
            ("torque_limit", self.torque_limit), ("q_default", self.q_default),
            ("action_scale", self.action_scale), ("pd_kp", self.pd_kp),
            ("pd_kd", self.pd_kd), ("joint_inertia", self.joint_inertia),
            ("joint_damping", self.joint_damping),
        ]:
            if arr.shape != (n,):
                raise RobotConfigError(f"{nm} must have shape ({n},), got {arr.shape}")
        if np.any(self.action_scale <= 0):
            raise RobotConfigError("action_scale entries must be positive")
        if np.any(self.pd_kp <= 0) or np.any(self.pd_kd <= 0):
            raise RobotConfigError("PD gains must be positive")
        if self.total_mass <= 0:
            raise RobotConfigError("total_mass must be positive")
        eig = np.linalg.eigvalsh(0.5 * (self.base_inertia + self.base_inertia.T))
        if np.any(eig <= 0):
            raise RobotConfigError("base_inertia must be symmetric positive-definite")
        if self.mirror_perm is not None:
            p = self.mirror_perm
            if sorted(p.tolist()) != list(range(n)) or np.any(p[p] != np.arange(n)):
                raise RobotConfigError("mirror_perm must be an involutive permutation")

    # ---- planar leg kinematics -------------------------------------------------
    # Joint convention: angles about +y; 0 rad points the segment straight down
    # (body -z). Thigh absolute angle = hip; shank absolute angle = hip + knee.
    # Pitch rotation about +y maps body (x,z) to world via
    #   x_w = c*x_b + s*z_b, z_w = -s*x_b + c*z_b.

    def foot_pos_body(self, q: np.ndarray) -> np.ndarray:
        """Foot positions in the base frame. q: (..., nj) -> (..., n_feet, 3)."""
        q = np.asarray(q, dtype=np.float64)
        out = np.zeros(q.shape[:-1] + (len(self.legs), 3))
        for k, leg in enumerate(self.legs):
            a1 = q[..., leg.hip_joint]
            a2 = a1 + q[..., leg.knee_joint]
            x = leg.thigh_length * np.sin(a1) + leg.shank_length * np.sin(a2)
            z = -(leg.thigh_length * np.cos(a1) + leg.shank_length * np.cos(a2))
            out[..., k, 0] = x + leg.hip_offset[0]
            out[..., k, 1] = leg.hip_offset[1]
            out[..., k, 2] = z + leg.hip_offset[2]
        return out

    def foot_jacobian_body(self, q: np.ndarray) -> np.ndarray:
        """d(foot xz in body frame)/d(hip,knee). Returns (..., n_feet, 2, 2)."""
        q = np.asarray(q, dtype=np.float64)
        out = np.zeros(q.shape[:-1] + (len(self.legs), 2, 2))
        for k, leg in enumerate(self.legs):
            a1 = q[..., leg.hip_joint]
            a2 = a1 + q[..., leg.knee_joint]
            l1, l2 = leg.thigh_length, leg.shank_length
            # rows: (x, z); cols: (hip, knee)
            out[..., k, 0, 0] = l1 * np.cos(a1) + l2 * np.cos(a2)
            out[..., k, 0, 1] = l2 * np.cos(a2)
            out[..., k, 1, 0] = l1 * np.sin(a1) + l2 * np.sin(a2)
            out[..., k, 1, 1] = l2 * np.sin(a2)
        return out

    def leg_ik(self, leg: Leg, target_body_xz: np.ndarray) -> tuple[float, float]:
        """Hip/knee angles placing the foot at target (x, z) in the base frame.

        Knee-back branch (knee angle <= 0). Raises if the target is out of reach.
        """
        dx = float(target_body_xz[0]) - float(leg.hip_offset[0])
        dz = float(target_body_xz[1]) - float(leg.hip_offset[2])
        l1, l2 = leg.thigh_length, leg.shank_length
        r2 = dx * dx + dz * dz
        c = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
        if c > 1.0 + 1e-9 or c < -1.0 - 1e-9:
            raise ValueError(f"IK target out of reach for {leg.name}: r={np.sqrt(r2):.3f}")
        knee = -np.arccos(np.clip(c, -1.0, 1.0))
        phi = np.arctan2(dx, -dz)
        hip = phi - np.arctan2(l2 * np.sin(knee), l1 + l2 * np.cos(knee))
        return float(hip), float(knee)

    # ---- serialization ----------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "version": ROBOT_SCHEMA_VERSION,
            "name": self.name,
            "planar": self.planar,
            "total_mass": self.total_mass,
            "base_inertia": self.base_inertia.tolist(),
            "com_offset": self.com_offset.tolist(),
            "gravity": self.gravity.tolist(),
            "joints": [
                {
                    "name": self.joint_names[i],
                    "limits": [float(self.q_lower[i]), float(self.q_upper[i])],
                    "torque_limit": float(self.torque_limit[i]),
                    "default_pos": float(self.q_default[i]),
                    "action_scale": float(self.action_scale[i]),
                    "kp": float(self.pd_kp[i]),
                    "kd": float(self.pd_kd[i]),
                    "inertia": float(self.joint_inertia[i]),
                    "damping": float(self.joint_damping[i]),
                }
                for i in range(self.num_joints)
            ],
            "legs": [
                {
                    "name": leg.name,
                    "hip_joint": self.joint_names[leg.hip_joint],
                    "knee_joint": self.joint_names[leg.knee_joint],
                    "thigh_length": leg.thigh_length,
                    "shank_length": leg.shank_length,
                    "hip_offset": leg.hip_offset.tolist(),
                }
                for leg in self.legs
            ],
            "mirror": None
            if self.mirror_perm is None
            else {
                "pairs": [[self.joint_names[i], self.joint_names[int(self.mirror_perm[i])]]
                          for i in range(self.num_joints) if i <= int(self.mirror_perm[i])],
                "signs": {self.joint_names[i]: float(self.mirror_sign[i]) for i in range(self.num_joints)},
            },
            "nominal_height": self.nominal_height,
            "contact": {
                "kn": self.contact_kn,
                "damping": self.contact_damping,
                "friction_vel_cap": self.friction_vel_cap,
                "force_cap": self.contact_force_cap,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RobotModel":
        if d.get("version") != ROBOT_SCHEMA_VERSION:
            raise RobotConfigError(f"unsupported robot schema version: {d.get('version')}")
        joints = d["joints"]
        names = [j["name"] for j in joints]
        idx = {nm: i for i, nm in enumerate(names)}
        legs = [
            Leg(
                name=lg["name"],
                hip_joint=idx[lg["hip_joint"]],
                knee_joint=idx[lg["knee_joint"]],
                thigh_length=float(lg["thigh_length"]),
                shank_length=float(lg["shank_length"]),
                hip_offset=np.asarray(lg["hip_offset"], dtype=np.float64),
            )
            for lg in d.get("legs", [])
        ]
        mirror = d.get("mirror")
        perm = sign = None
        if mirror is not None:
            perm = np.arange(len(names))
            for a, b in mirror["pairs"]:
                if a not in idx or b not in idx:
                    raise RobotConfigError(f"mirror pair references unknown joint: {a}, {b}")
                perm[idx[a]], perm[idx[b]] = idx[b], idx[a]
            sign = np.array([float(mirror["signs"][nm]) for nm in names])
        contact = d.get("contact", {})
        model = cls(
            name=d["name"],
            planar=bool(d.get("planar", True)),
            total_mass=float(d["total_mass"]),
            base_inertia=np.asarray(d["base_inertia"], dtype=np.float64),
            com_offset=np.asarray(d.get("com_offset", [0, 0, 0]), dtype=np.float64),
            gravity=np.asarray(d.get("gravity", [0, 0, -9.81]), dtype=np.float64),
            joint_names=names,
            q_lower=np.array([j["limits"][0] for j in joints], dtype=np.float64),
            q_upper=np.array([j["limits"][1] for j in joints], dtype=np.float64),
            torque_limit=np.array([j["torque_limit"] for j in joints], dtype=np.float64),
            q_default=np.array([j["default_pos"] for j in joints], dtype=np.float64),
            action_scale=np.array([j["action_scale"] for j in joints], dtype=np.float64),
            pd_kp=np.array([j["kp"] for j in joints], dtype=np.float64),
            pd_kd=np.array([j["kd"] for j in joints], dtype=np.float64),
            joint_inertia=np.array([j["inertia"] for j in joints], dtype=np.float64),
            joint_damping=np.array([j["damping"] for j in joints], dtype=np.float64),
            legs=legs,
            mirror_perm=perm,
            mirror_sign=sign,
            nominal_height=float(d.get("nominal_height", 0.8)),
            contact_kn=float(contact.get("kn", 5.0e4)),
            contact_damping=float(contact.get("damping", 1.0)),
            friction_vel_cap=float(contact.get("friction_vel_cap", 0.05)),
            contact_force_cap=float(contact.get("force_cap", 2000.0)),
        )
        model.validate()
        return model

    @classmethod
    def from_json(cls, path: str | Path) -> "RobotModel":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)


def default_planar_biped() -> RobotModel:
    """The desk-scale biped: 35 kg, thigh/shank 0.45 m, nominal base height 0.8 m.

    PD gains follow the critically-damped per-joint rule at 10 Hz natural
    frequency: kp = I_j * w_n^2, kd = 2 * I_j * w_n.
    """
    names = ["hip_left", "knee_left", "hip_right", "knee_right"]
    n = len(names)
    wn = 2.0 * np.pi * 10.0
    joint_inertia = np.full(n, 0.3)
    kp = joint_inertia * wn**2
    kd = 2.0 * joint_inertia * wn
    model = RobotModel(
        name="planar-biped",
        planar=True,
        total_mass=35.0,
        base_inertia=np.diag([1.5, 1.5, 0.8]),
        com_offset=np.zeros(3),
        gravity=np.array([0.0, 0.0, -9.81]),
        joint_names=names,
        q_lower=np.array([-1.8, -2.7, -1.8, -2.7]),
        q_upper=np.array([2.8, 0.0, 2.8, 0.0]),
        torque_limit=np.full(n, 220.0),
        q_default=np.array([0.45, -0.9, 0.45, -0.9]),
        action_scale=np.full(n, 0.5),
        pd_kp=kp,
        pd_kd=kd,
        joint_inertia=joint_inertia,
        joint_damping=np.full(n, 1.0),
        legs=[
            Leg("foot_left", 0, 1, 0.45, 0.45, np.zeros(3)),
            Leg("foot_right", 2, 3, 0.45, 0.45, np.zeros(3)),
        ],
        mirror_perm=np.array([2, 3, 0, 1]),
        mirror_sign=np.ones(n),
        nominal_height=0.81,
    )
    model.validate()
    return model


def load_robot(path: str | Path | None) -> RobotModel:
    if path is None:
        return default_planar_biped()
    return RobotModel.from_json(path)
