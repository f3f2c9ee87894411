"""Shared state containers passed between the simulator, reward engine, and trainer.

All fields are float64 numpy arrays. Every container works either for a single
robot (field shapes like (3,), (nj,)) or batched with a leading env axis
((N, 3), (N, nj)); the reward engine broadcasts over the leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RobotState:
    base_pos: np.ndarray        # (..., 3); planar mode keeps y = 0
    base_quat: np.ndarray       # (..., 4) unit, scalar-first; pitch-only in planar mode
    base_linvel: np.ndarray     # (..., 3)
    base_angvel: np.ndarray     # (..., 3)
    joint_pos: np.ndarray       # (..., nj)
    joint_vel: np.ndarray       # (..., nj)
    # world-frame contact force history per foot, newest last: (..., n_feet, H, 3)
    foot_contact_forces: np.ndarray | None = None
    applied_torques: np.ndarray | None = None    # (..., nj), after limit clamp
    computed_torques: np.ndarray | None = None   # (..., nj), raw PD output

    def copy(self) -> "RobotState":
        return RobotState(
            base_pos=self.base_pos.copy(),
            base_quat=self.base_quat.copy(),
            base_linvel=self.base_linvel.copy(),
            base_angvel=self.base_angvel.copy(),
            joint_pos=self.joint_pos.copy(),
            joint_vel=self.joint_vel.copy(),
            foot_contact_forces=None if self.foot_contact_forces is None else self.foot_contact_forces.copy(),
            applied_torques=None if self.applied_torques is None else self.applied_torques.copy(),
            computed_torques=None if self.computed_torques is None else self.computed_torques.copy(),
        )


@dataclass
class GoalCommand:
    """Character-centric goal: planar root displacement plus relative yaw."""

    dxy: np.ndarray        # (..., 2) displacement in the character yaw frame
    yaw_quat: np.ndarray   # (..., 4) relative yaw quaternion, world-aligned


@dataclass
class WorldGoal:
    """Goal resolved to the world frame by the environment."""

    pos_xy: np.ndarray     # (..., 2)
    height: np.ndarray     # (...,) target base height
    quat: np.ndarray       # (..., 4) target base orientation


@dataclass
class FootKinematics:
    """Per-foot world-frame kinematics needed by the contact reward terms."""

    heights: np.ndarray        # (..., n_feet) foot height above local support
    planar_vel: np.ndarray     # (..., n_feet, 2)
    vel: np.ndarray            # (..., n_feet, 3)
    acc: np.ndarray            # (..., n_feet, 3)
    prev_acc: np.ndarray       # (..., n_feet, 3)


@dataclass
class PhysicsAux:
    """Simulator internals consumed by the regularization terms.

    Missing pieces disable the terms that need them: no `ankle` block means the
    ankle-polytope and flat-ankle terms report inactive; no `feet` block means
    the slip / jerk / clearance / horizontal-force terms report inactive.
    """

    applied_torques: np.ndarray | None = None
    computed_torques: np.ndarray | None = None
    joint_lower: np.ndarray | None = None
    joint_upper: np.ndarray | None = None
    feet: FootKinematics | None = None
    contact_history: np.ndarray | None = None     # (..., n_feet, H, 3) world forces
    dt: float = 0.02
    ankle_pos: np.ndarray | None = None           # (..., n_ankle_dof)
    ankle_A: np.ndarray | None = None             # polytope rows (n_rows, n_ankle_dof)
    ankle_b: np.ndarray | None = None             # (n_rows,)
    ankle_gravity_z: np.ndarray | None = None     # (..., 2) z of gravity in each ankle frame
