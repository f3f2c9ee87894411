"""Vectorized planar rigid-body core for the desk biped.

The base is a rigid body in the sagittal plane (x, z, pitch); legs are massless
two-link chains with reflected joint inertia, so contact forces at the point
feet act on the base directly and on the joints through the leg Jacobian.
Contacts are penalty springs (Hunt-Crossley damping) with regularized Coulomb
friction against the ground plane and box AABBs.

Integration is semi-implicit Euler with a trapezoidal position update
(v' = v + a dt, x' = x + (v + v')/2 dt), which is exact for ballistic motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import so3
from .robot import RobotModel
from .state import FootKinematics, RobotState
from .terrain import BoxLayout


@dataclass
class ContactParams:
    static_friction: np.ndarray    # (N,)
    dynamic_friction: np.ndarray
    restitution: np.ndarray
    mass_delta: np.ndarray         # torso + pelvis randomization, kg


class PlanarSim:
    def __init__(self, model: RobotModel, num_envs: int, layout: BoxLayout,
                 dt: float = 0.004, hist_window: int = 5, base_radius: float = 0.12):
        self.model = model
        self.n = num_envs
        self.layout = layout
        self.dt = float(dt)
        self.hist = hist_window
        self.base_radius = base_radius
        nj = model.num_joints
        nf = len(model.legs)
        self.nj, self.nf = nj, nf

        self.x = np.zeros(num_envs)
        self.z = np.full(num_envs, model.nominal_height)
        self.th = np.zeros(num_envs)
        self.vx = np.zeros(num_envs)
        self.vz = np.zeros(num_envs)
        self.w = np.zeros(num_envs)
        self.q = np.tile(model.q_default, (num_envs, 1))
        self.qd = np.zeros((num_envs, nj))

        self.applied_tau = np.zeros((num_envs, nj))
        self.computed_tau = np.zeros((num_envs, nj))
        self.force_hist = np.zeros((num_envs, nf, hist_window, 3))
        self.foot_vel = np.zeros((num_envs, nf, 3))
        self.foot_acc = np.zeros((num_envs, nf, 3))
        self.prev_foot_acc = np.zeros((num_envs, nf, 3))

        self.contact = ContactParams(
            static_friction=np.full(num_envs, 1.2),
            dynamic_friction=np.full(num_envs, 1.0),
            restitution=np.zeros(num_envs),
            mass_delta=np.zeros(num_envs),
        )
        self.gravity_z = float(model.gravity[2])
        self.joint_limit_spring = 2.0 * model.pd_kp

    # ---- kinematics -------------------------------------------------------------
    def _rot(self, bx, bz):
        c, s = np.cos(self.th), np.sin(self.th)
        if bx.ndim > 1:
            c = c.reshape((-1,) + (1,) * (bx.ndim - 1))
            s = s.reshape((-1,) + (1,) * (bx.ndim - 1))
        return c * bx + s * bz, -s * bx + c * bz

    def foot_world(self):
        """Foot positions (N, nf, 2) and velocities (N, nf, 2) in world (x, z)."""
        fb = self.model.foot_pos_body(self.q)          # (N, nf, 3)
        bx, bz = fb[..., 0], fb[..., 2]
        wx, wz = self._rot(bx, bz)
        px = self.x[:, None] + wx
        pz = self.z[:, None] + wz
        # jacobian part (joint motion), body frame
        J = self.model.foot_jacobian_body(self.q)      # (N, nf, 2, 2)
        qd_leg = np.stack(
            [np.stack([self.qd[:, leg.hip_joint], self.qd[:, leg.knee_joint]], axis=-1)
             for leg in self.model.legs], axis=1)      # (N, nf, 2)
        vb = np.einsum("nfij,nfj->nfi", J, qd_leg)     # (N, nf, 2) body (x, z)
        vwx, vwz = self._rot(vb[..., 0], vb[..., 1])
        # rigid rotation part: omega (about +y) x r
        rx, rz = wx, wz
        vx = self.vx[:, None] + self.w[:, None] * rz + vwx
        vz = self.vz[:, None] - self.w[:, None] * rx + vwz
        return np.stack([px, pz], axis=-1), np.stack([vx, vz], axis=-1)

    # ---- contacts ---------------------------------------------------------------
    def _point_contact(self, px, pz, vx, vz, inv_mass_x, inv_mass_z):
        """Penalty contact force (fx, fz) for points against ground and boxes.

        inv_mass_x / inv_mass_z are the inverse effective masses of each point
        along the world axes; they bound friction and damping impulses so that
        a substep can stop a contact point but never reverse it (the velocity
        cap of the regularized Coulomb model is floored accordingly).
        """
        m = self.model
        kn = m.contact_kn
        dt = self.dt
        nx = np.zeros_like(px)
        nz = np.zeros_like(px)
        phi = np.zeros_like(px)

        # ground plane
        pen_g = -pz
        g_hit = pen_g > 0
        phi = np.where(g_hit, pen_g, phi)
        nz = np.where(g_hit, 1.0, nz)

        for b in self.layout.boxes:
            inside = (px > b.x_min) & (px < b.x_max) & (pz < b.height) & (pz > 0)
            if not np.any(inside):
                continue
            d_top = b.height - pz
            d_left = px - b.x_min
            d_right = b.x_max - px
            use_top = (d_top <= d_left) & (d_top <= d_right)
            use_left = (~use_top) & (d_left <= d_right)
            use_right = ~(use_top | use_left)
            take = inside & (np.where(use_top, d_top,
                              np.where(use_left, d_left, d_right)) > phi)
            phi = np.where(take, np.where(use_top, d_top,
                           np.where(use_left, d_left, d_right)), phi)
            nx = np.where(take, np.where(use_top, 0.0,
                          np.where(use_left, -1.0, 1.0)), nx)
            nz = np.where(take, np.where(use_top, 1.0, 0.0), nz)

        hit = phi > 0
        if not np.any(hit):
            return np.zeros_like(px), np.zeros_like(px)

        m_eff_n = 1.0 / np.maximum(nx * nx * inv_mass_x + nz * nz * inv_mass_z, 1e-9)
        m_eff_t = 1.0 / np.maximum(nz * nz * inv_mass_x + nx * nx * inv_mass_z, 1e-9)

        # Hunt-Crossley normal force: damping scales with penetration depth and
        # is reduced by the sampled restitution; the damping component is
        # impulse-limited so it can only remove approach velocity.
        pen_rate = -(vx * nx + vz * nz)
        c_eff = m.contact_damping * (1.0 - self.contact.restitution[:, None])
        damp = kn * phi * c_eff * pen_rate
        damp = np.clip(damp, 0.0, m_eff_n * np.maximum(pen_rate, 0.0) / dt)
        fn = np.clip(kn * phi + damp, 0.0, m.contact_force_cap)
        fn = np.where(hit, fn, 0.0)

        # regularized Coulomb friction; the cap velocity is floored where the
        # static slope matches the one-substep stopping impulse, and the
        # magnitude never exceeds that impulse, so contacts stick without chatter
        tx, tz = -nz, nx
        vt = vx * tx + vz * tz
        mu_s = self.contact.static_friction[:, None]
        mu_d = self.contact.dynamic_friction[:, None]
        stop = 0.8 * m_eff_t / dt
        cap = np.maximum(m.friction_vel_cap, mu_s * fn / np.maximum(stop, 1e-9))
        ft_mag = np.where(np.abs(vt) > cap, mu_d * fn,
                          mu_s * fn * np.abs(vt) / np.maximum(cap, 1e-12))
        ft_mag = np.minimum(ft_mag, stop * np.abs(vt))
        ft = -np.sign(vt) * ft_mag
        fx = fn * nx + ft * tx
        fz = fn * nz + ft * tz
        return fx, fz

    # ---- stepping ---------------------------------------------------------------
    def substep(self, q_cmd: np.ndarray, wrench: np.ndarray | None = None):
        """One physics substep under PD position control and an optional
        external base wrench (world force x/z and torque about y)."""
        m = self.model
        dt = self.dt
        M = m.total_mass + self.contact.mass_delta
        Iy = m.base_inertia[1, 1]

        # PD torques; both the raw and the limit-clamped values are recorded
        computed = m.pd_kp * (q_cmd - self.q) - m.pd_kd * self.qd
        applied = np.clip(computed, -m.torque_limit, m.torque_limit)
        self.computed_tau = computed
        self.applied_tau = applied

        # contacts: feet then the base sphere
        (fpos, fvel) = self.foot_world()
        J = self.model.foot_jacobian_body(self.q)
        c, s = np.cos(self.th), np.sin(self.th)
        rx = fpos[..., 0] - self.x[:, None]
        rz = fpos[..., 1] - self.z[:, None]
        # inverse effective mass of each foot along the world axes: base
        # translation + base rotation + the leg joint channel (J^T couplings)
        Jw = np.empty_like(J)
        Jw[..., 0, :] = c[:, None, None] * J[..., 0, :] + s[:, None, None] * J[..., 1, :]
        Jw[..., 1, :] = -s[:, None, None] * J[..., 0, :] + c[:, None, None] * J[..., 1, :]
        inv_m = 1.0 / (m.total_mass + self.contact.mass_delta)[:, None]
        Iy = m.base_inertia[1, 1]
        Ij = np.stack([np.stack([m.joint_inertia[leg.hip_joint],
                                 m.joint_inertia[leg.knee_joint]])
                       for leg in m.legs])                       # (nf, 2)
        w_x = inv_m + rz * rz / Iy + np.sum(Jw[..., 0, :] ** 2 / Ij, axis=-1)
        w_z = inv_m + rx * rx / Iy + np.sum(Jw[..., 1, :] ** 2 / Ij, axis=-1)
        ffx, ffz = self._point_contact(fpos[..., 0], fpos[..., 1],
                                       fvel[..., 0], fvel[..., 1], w_x, w_z)
        bpx = self.x
        bpz = self.z - self.base_radius
        bw_x = inv_m + (self.base_radius ** 2) / Iy * np.ones_like(inv_m)
        bw_z = inv_m.copy()
        bfx, bfz = self._point_contact(bpx[:, None], bpz[:, None],
                                       self.vx[:, None], self.vz[:, None],
                                       bw_x, bw_z)
        bfx, bfz = bfx[:, 0], bfz[:, 0]

        # base wrench from contacts
        Fx = np.sum(ffx, axis=1) + bfx
        Fz = np.sum(ffz, axis=1) + bfz
        Ty = np.sum(rz * ffx - rx * ffz, axis=1)
        Ty = Ty + (-self.base_radius) * bfx

        if wrench is not None:
            Fx = Fx + wrench[:, 0]
            Fz = Fz + wrench[:, 2]
            Ty = Ty + wrench[:, 4]

        # joint torques from foot contact via J^T, soft limits, damping;
        # world force rotated into body frame: R^T f
        fbx = c[:, None] * ffx - s[:, None] * ffz
        fbz = s[:, None] * ffx + c[:, None] * ffz
        tau_contact = np.zeros_like(self.q)
        for k, leg in enumerate(m.legs):
            th_ = J[:, k, 0, 0] * fbx[:, k] + J[:, k, 1, 0] * fbz[:, k]
            tk_ = J[:, k, 0, 1] * fbx[:, k] + J[:, k, 1, 1] * fbz[:, k]
            tau_contact[:, leg.hip_joint] += th_
            tau_contact[:, leg.knee_joint] += tk_

        over = np.maximum(0.0, self.q - m.q_upper)
        under = np.maximum(0.0, m.q_lower - self.q)
        tau_limit = self.joint_limit_spring * (under - over)

        qdd = (applied + tau_contact + tau_limit - m.joint_damping * self.qd) / m.joint_inertia
        ax = Fx / M
        az = Fz / M + self.gravity_z
        alpha = Ty / Iy

        vx1 = self.vx + ax * dt
        vz1 = self.vz + az * dt
        w1 = self.w + alpha * dt
        qd1 = self.qd + qdd * dt
        self.x = self.x + 0.5 * (self.vx + vx1) * dt
        self.z = self.z + 0.5 * (self.vz + vz1) * dt
        self.th = self.th + 0.5 * (self.w + w1) * dt
        self.q = self.q + 0.5 * (self.qd + qd1) * dt
        self.vx, self.vz, self.w, self.qd = vx1, vz1, w1, qd1

        # contact force history (newest last)
        self.force_hist = np.roll(self.force_hist, -1, axis=2)
        self.force_hist[:, :, -1, 0] = ffx
        self.force_hist[:, :, -1, 1] = 0.0
        self.force_hist[:, :, -1, 2] = ffz

    def control_step(self, q_cmd: np.ndarray, wrench: np.ndarray | None,
                     decimation: int = 5):
        """Run one control period (decimation substeps) and refresh the foot
        acceleration estimates used by the jerk reward."""
        v_prev = self.foot_vel.copy()
        for _ in range(decimation):
            self.substep(q_cmd, wrench)
        fpos, fvel = self.foot_world()
        v_now = np.zeros_like(self.foot_vel)
        v_now[..., 0] = fvel[..., 0]
        v_now[..., 2] = fvel[..., 1]
        dt_ctrl = self.dt * decimation
        self.prev_foot_acc = self.foot_acc.copy()
        self.foot_acc = (v_now - v_prev) / dt_ctrl
        self.foot_vel = v_now
        return fpos, fvel

    # ---- views ------------------------------------------------------------------
    def states(self) -> RobotState:
        n = self.n
        zeros = np.zeros(n)
        return RobotState(
            base_pos=np.stack([self.x, zeros, self.z], axis=-1),
            base_quat=so3.quat_from_pitch(self.th),
            base_linvel=np.stack([self.vx, zeros, self.vz], axis=-1),
            base_angvel=np.stack([zeros, self.w, zeros], axis=-1),
            joint_pos=self.q.copy(),
            joint_vel=self.qd.copy(),
            foot_contact_forces=self.force_hist.copy(),
            applied_torques=self.applied_tau.copy(),
            computed_torques=self.computed_tau.copy(),
        )

    def foot_kinematics(self) -> FootKinematics:
        fpos, fvel = self.foot_world()
        support = self.layout.support_height(fpos[..., 0])
        vel3 = np.zeros((self.n, self.nf, 3))
        vel3[..., 0] = fvel[..., 0]
        vel3[..., 2] = fvel[..., 1]
        return FootKinematics(
            heights=fpos[..., 1] - support,
            planar_vel=np.stack([fvel[..., 0], np.zeros_like(fvel[..., 0])], axis=-1),
            vel=vel3,
            acc=self.foot_acc.copy(),
            prev_acc=self.prev_foot_acc.copy(),
        )

    def set_state(self, idx: np.ndarray, state: RobotState):
        """Overwrite envs `idx` from a batched RobotState (planar projection)."""
        self.x[idx] = state.base_pos[..., 0]
        self.z[idx] = state.base_pos[..., 2]
        self.th[idx] = so3.pitch_of(state.base_quat)
        self.vx[idx] = state.base_linvel[..., 0]
        self.vz[idx] = state.base_linvel[..., 2]
        self.w[idx] = state.base_angvel[..., 1]
        self.q[idx] = state.joint_pos
        self.qd[idx] = state.joint_vel
        self.force_hist[idx] = 0.0
        self.foot_vel[idx] = 0.0
        self.foot_acc[idx] = 0.0
        self.prev_foot_acc[idx] = 0.0
        self.applied_tau[idx] = 0.0
        self.computed_tau[idx] = 0.0

    def diverged(self) -> np.ndarray:
        bad = ~(np.isfinite(self.x) & np.isfinite(self.z) & np.isfinite(self.th)
                & np.isfinite(self.vx) & np.isfinite(self.vz) & np.isfinite(self.w))
        bad |= ~np.all(np.isfinite(self.q), axis=1)
        bad |= ~np.all(np.isfinite(self.qd), axis=1)
        return bad

    def mechanical_energy(self) -> np.ndarray:
        M = self.model.total_mass + self.contact.mass_delta
        Iy = self.model.base_inertia[1, 1]
        ke = 0.5 * M * (self.vx**2 + self.vz**2) + 0.5 * Iy * self.w**2
        ke = ke + 0.5 * np.sum(self.model.joint_inertia * self.qd**2, axis=1)
        pe = -M * self.gravity_z * self.z
        return ke + pe
