"""Vectorized box-parkour environment for the planar biped.

Owns observation construction (policy and privileged), residual PD action
mapping, domain randomization, scheduled pushes, episode initialization for
both task kinds, termination, and success bookkeeping. Physics lives in
`sim.PlanarSim`; rewards are computed by the caller from the RewardInputs
returned by `step` so that imitation and generalization episodes can use their
own reward compositions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import so3
from .curriculum import AssistGains, assist_wrench
from .motion import INIT_PERTURBATIONS, ReferenceMotion, sample_rsi
from .rewards import RewardConfig, exp_tracking_term, reach_predicate
from .robot import RobotModel
from .sim import PlanarSim
from .state import FootKinematics, GoalCommand, PhysicsAux, RobotState, WorldGoal
from .terrain import BoxLayout

TASK_IMITATION = 0
TASK_GENERALIZATION = 1

TERM_NONE = 0
TERM_TIMEOUT = 1
TERM_FALL = 2
TERM_LOW_HEIGHT = 3
TERM_DIVERGED = 4
TERM_REASONS = {TERM_NONE: "none", TERM_TIMEOUT: "timeout", TERM_FALL: "fall",
                TERM_LOW_HEIGHT: "low_height", TERM_DIVERGED: "diverged"}

# beyond-nominal initialization ranges: (dx_min, dx_max, dy, yaw)
WIDE_RANGES = {
    "walk": (-2.0, 2.0, 1.0, np.pi / 4),
    "walk_jump": (-2.0, 2.0, 1.0, np.pi / 4),
    "walk_climb": (-2.0, 2.0, 1.0, np.pi / 4),
    "climb_down": (-0.3, 0.1, 0.2, np.pi / 6),
}


class EnvError(RuntimeError):
    pass


@dataclass
class PhysicsParams:
    """Per-episode randomized physics; ranges from the domain-randomization table."""

    static_friction: float = 1.2
    dynamic_friction: float = 1.0
    restitution: float = 0.0
    torso_mass_delta: float = 0.0
    pelvis_mass_delta: float = 0.0
    push_interval: float = 2.0
    push_speed: float = 0.4


@dataclass
class DomainRandConfig:
    enabled: bool = True
    static_friction: tuple = (0.8, 2.5)
    dynamic_friction: tuple = (0.7, 2.5)
    restitution: tuple = (0.0, 0.2)
    torso_mass: tuple = (-2.5, 4.0)
    pelvis_mass: tuple = (-1.0, 1.0)
    push_interval: tuple = (0.0, 4.0)
    push_speed: float = 0.4
    pushes_enabled: bool = True


@dataclass
class NoiseConfig:
    enabled: bool = True
    angvel: float = 0.10
    gravity: float = 0.015
    joint_pos: float = 0.005
    joint_vel: float = 0.25
    goal: float = 0.015


@dataclass
class EnvConfig:
    skill: str = "walk"
    dt: float = 0.004
    decimation: int = 5
    episode_length: float = 10.0
    contact_history: int = 5
    box_height: float = 0.5
    box_edge_x: float = 2.0
    walk_goal_x: float = 2.5
    standing_height: float = 0.80
    tilt_limit: float = 1.2
    min_height: float = 0.25
    reset_retries: int = 20
    nominal_jitter_pos: float = 0.05
    nominal_jitter_yaw: float = 0.05
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    domain_rand: DomainRandConfig = field(default_factory=DomainRandConfig)

    @property
    def control_dt(self) -> float:
        return self.dt * self.decimation


def randomize(rng: np.random.Generator, cfg: DomainRandConfig) -> PhysicsParams:
    """Draw per-episode physics parameters; passthrough nominal when disabled."""
    if not cfg.enabled:
        return PhysicsParams()
    return PhysicsParams(
        static_friction=rng.uniform(*cfg.static_friction),
        dynamic_friction=rng.uniform(*cfg.dynamic_friction),
        restitution=rng.uniform(*cfg.restitution),
        torso_mass_delta=rng.uniform(*cfg.torso_mass),
        pelvis_mass_delta=rng.uniform(*cfg.pelvis_mass),
        push_interval=rng.uniform(*cfg.push_interval),
        push_speed=cfg.push_speed,
    )


@dataclass
class RewardInputs:
    """Everything the reward engine needs for one control step."""

    state: RobotState
    ref: dict | None              # interpolated reference arrays (imitation envs)
    goal: WorldGoal
    aux: PhysicsAux
    task_kind: np.ndarray         # (N,) TASK_IMITATION / TASK_GENERALIZATION
    action: np.ndarray
    prev_action: np.ndarray
    reach_now: np.ndarray         # (N,) bool, instantaneous reach predicate


# ---- observation layout ----------------------------------------------------------

POLICY_CHANNELS = (
    # (name, width spec, source); width "nj" expands to the joint count
    ("base_angvel", 3, "proprio"),
    ("projected_gravity", 3, "proprio"),
    ("joint_pos_rel", "nj", "proprio"),
    ("joint_vel_rel", "nj", "proprio"),
    ("prev_action", "nj", "action"),
    ("goal_command", 6, "goal"),
)

PRIVILEGED_EXTRA_CHANNELS = (
    ("projected_gravity_base", 3, "privileged"),
    ("base_linvel_body", 3, "privileged"),
    ("base_angvel_body", 3, "privileged"),
    ("base_height", 1, "privileged"),
    ("ee_contact_wrench", "3nf", "privileged"),
    ("ee_pos_base", "3nf", "privileged"),
    ("ee_vel_base", "3nf", "privileged"),
    ("assist_force", 3, "reference"),
    ("assist_torque", 3, "reference"),
    ("wrench_scale", 1, "reference"),
    ("similarity", 1, "reference"),
    ("task_indicator", 1, "privileged"),
    ("ref_lookahead_joint_delta", "nj", "reference"),
)


def channel_widths(channels, nj: int, nf: int) -> list[tuple[str, int, str]]:
    out = []
    for name, w, src in channels:
        if w == "nj":
            w = nj
        elif w == "3nf":
            w = 3 * nf
        out.append((name, int(w), src))
    return out


def policy_obs_dim(nj: int, nf: int) -> int:
    return sum(w for _, w, _ in channel_widths(POLICY_CHANNELS, nj, nf))


def privileged_obs_dim(nj: int, nf: int) -> int:
    return policy_obs_dim(nj, nf) + sum(
        w for _, w, _ in channel_widths(PRIVILEGED_EXTRA_CHANNELS, nj, nf))


def assert_actor_channels_reference_free() -> None:
    bad = [nm for nm, _, src in POLICY_CHANNELS if src in ("reference", "privileged")]
    if bad:
        raise EnvError(f"policy observation contains reference/privileged channels: {bad}")


def character_goal(base_pos: np.ndarray, base_quat: np.ndarray,
                   goal: WorldGoal) -> GoalCommand:
    """Resolve a world goal into the character-centric command (yaw frame)."""
    yaw = so3.yaw_of(base_quat)
    d = goal.pos_xy - base_pos[..., :2]
    c, s = np.cos(-yaw), np.sin(-yaw)
    dxy = np.stack([c * d[..., 0] - s * d[..., 1],
                    s * d[..., 0] + c * d[..., 1]], axis=-1)
    rel_yaw = so3.yaw_of(goal.quat) - yaw
    return GoalCommand(dxy=dxy, yaw_quat=so3.quat_from_yaw(rel_yaw))


class ParkourEnv:
    def __init__(
        self,
        model: RobotModel,
        cfg: EnvConfig,
        reward_cfg: RewardConfig,
        layout: BoxLayout,
        refs: dict[str, list[ReferenceMotion]],
        num_envs: int,
        master_seed: int,
        assist_gains: AssistGains | None = None,
        noise_override: bool | None = None,
    ):
        assert_actor_channels_reference_free()
        self.model = model
        self.cfg = cfg
        self.reward_cfg = reward_cfg
        self.layout = layout
        self.refs = refs
        self.n = num_envs
        self.nj = model.num_joints
        self.nf = len(model.legs)
        self.sim = PlanarSim(model, num_envs, layout, dt=cfg.dt,
                             hist_window=cfg.contact_history)
        self.gains = assist_gains or AssistGains(
            M=model.total_mass, I=model.base_inertia.copy(),
            r_b_com=model.com_offset.copy(), g=model.gravity.copy())
        self.noise_on = cfg.noise.enabled if noise_override is None else noise_override

    # one rng stream per env plus a dedicated stream for observation noise
        self.rngs = [np.random.Generator(np.random.PCG64(master_seed ^ i))
                     for i in range(num_envs)]
        self.noise_rng = np.random.Generator(np.random.PCG64((master_seed << 16) ^ 0x6E6F7365))

        n = num_envs
        self.task_kind = np.full(n, TASK_GENERALIZATION, dtype=np.int64)
        self.clip_index = np.zeros(n, dtype=np.int64)
        self.phase0 = np.zeros(n)
        self.elapsed = np.zeros(n)
        self.prev_action = np.zeros((n, self.nj))
        self.goal = WorldGoal(pos_xy=np.zeros((n, 2)), height=np.full(n, cfg.standing_height),
                              quat=np.tile(np.array([1.0, 0, 0, 0]), (n, 1)))
        self.next_push = np.full(n, np.inf)
        self.push_interval = np.full(n, np.inf)
        self.push_speed = np.full(n, cfg.domain_rand.push_speed)
        self.reach_hold = np.zeros(n)
        self.diverged_flag = np.zeros(n, dtype=bool)
        # curriculum snapshot, fixed per trainer iteration
        self.lam = 1.0
        self.beta_max = 0.75
        self.p_imi = 0.0
        self.init_scale = 1.0
        self.assist_enabled = True

    # ---- curriculum snapshot ------------------------------------------------
    def set_curriculum(self, lam: float, beta_max: float, p_imi: float,
                       init_scale: float, assist_enabled: bool = True) -> None:
        self.lam = float(lam)
        self.beta_max = float(beta_max)
        self.p_imi = float(p_imi)
        self.init_scale = float(init_scale)
        self.assist_enabled = assist_enabled

    @property
    def beta(self) -> float:
        return (1.0 - self.lam) * self.beta_max

    # ---- resets ---------------------------------------------------------------
    def nominal_start_x(self) -> float:
        if self.cfg.skill == "climb_down":
            return self.cfg.box_edge_x + 0.4  # box-top center
        return 0.0

    def task_world_goal(self) -> tuple[float, float]:
        """(goal_x, goal_support_height) for the configured skill."""
        cfg = self.cfg
        if cfg.skill == "walk":
            return cfg.walk_goal_x, 0.0
        center = cfg.box_edge_x + 0.4
        if cfg.skill in ("walk_jump", "walk_climb"):
            return center, cfg.box_height
        if cfg.skill == "climb_down":
            return center + 0.9, 0.0
        raise EnvError(f"unknown skill {cfg.skill!r}")

    def _standing_state(self, x: float, pitch: float = 0.0) -> RobotState:
        z = self.layout.support_height(np.asarray(x)) + self.model.nominal_height
        return RobotState(
            base_pos=np.array([x, 0.0, float(z)]),
            base_quat=so3.quat_from_pitch(np.asarray(pitch)),
            base_linvel=np.zeros(3),
            base_angvel=np.zeros(3),
            joint_pos=self.model.q_default.copy(),
            joint_vel=np.zeros(self.nj),
        )

    def _penetrates(self, state: RobotState) -> bool:
        pitch = so3.pitch_of(state.base_quat)
        fb = self.model.foot_pos_body(state.joint_pos)
        c, s = np.cos(pitch), np.sin(pitch)
        fx = state.base_pos[0] + c * fb[:, 0] + s * fb[:, 2]
        fz = state.base_pos[2] - s * fb[:, 0] + c * fb[:, 2]
        support = self.layout.support_height(fx)
        if np.any(fz < support - 0.02):
            return True
        base_support = float(self.layout.support_height(np.asarray(state.base_pos[0])))
        return bool(state.base_pos[2] - 0.12 < base_support - 0.02)

    def _apply_physics_params(self, i: int, params: PhysicsParams) -> None:
        self.sim.contact.static_friction[i] = params.static_friction
        self.sim.contact.dynamic_friction[i] = params.dynamic_friction
        self.sim.contact.restitution[i] = params.restitution
        self.sim.contact.mass_delta[i] = params.torso_mass_delta + params.pelvis_mass_delta
        if self.cfg.domain_rand.pushes_enabled and self.cfg.domain_rand.enabled:
            interval = max(params.push_interval, self.cfg.control_dt)
            self.push_interval[i] = interval
            self.next_push[i] = interval
            self.push_speed[i] = params.push_speed
        else:
            self.push_interval[i] = np.inf
            self.next_push[i] = np.inf

    def reset_envs(
        self,
        ids: np.ndarray,
        task_kinds: np.ndarray | None = None,
        eval_mode: str | None = None,
    ) -> list[dict]:
        """Reset the listed envs; returns per-env info with the drawn offsets.

        eval_mode None (training) draws generalization starts from the wide
        ranges scaled by the curriculum; "nominal" uses a small jitter around
        the nominal start; "beyond_nominal" uses the full wide ranges.
        """
        infos = []
        goal_x, goal_support = self.task_world_goal()
        id_list = np.atleast_1d(np.asarray(ids, dtype=int))
        for pos, i in enumerate(id_list):
            rng = self.rngs[i]
            if eval_mode is not None:
                kind = TASK_GENERALIZATION
            elif task_kinds is not None:
                kind = int(task_kinds[pos])
            else:
                kind = TASK_IMITATION if rng.uniform() < self.p_imi else TASK_GENERALIZATION
            params = randomize(rng, self.cfg.domain_rand)
            self._apply_physics_params(i, params)

            info = {"task_kind": kind, "dx": 0.0, "dy": 0.0, "dyaw": 0.0}
            state = None
            if kind == TASK_IMITATION:
                clips = self.refs[self.cfg.skill]
                ci = int(rng.integers(len(clips)))
                perturb = INIT_PERTURBATIONS[self.cfg.skill].scaled(self.init_scale)
                for _ in range(self.cfg.reset_retries):
                    cand, phase = sample_rsi(clips[ci], perturb, rng)
                    if not self._penetrates(cand):
                        state = cand
                        break
                if state is None:
                    raise EnvError(f"env {i}: could not find a non-penetrating RSI state")
                self.clip_index[i] = ci
                self.phase0[i] = phase
                end = clips[ci].frame_at(clips[ci].num_frames - 1)
                self.goal.pos_xy[i] = end.base_pos[:2]
                self.goal.height[i] = end.base_pos[2]
                self.goal.quat[i] = so3.quat_from_yaw(so3.yaw_of(end.base_quat))
            else:
                x0 = self.nominal_start_x()
                if eval_mode == "nominal":
                    dx = rng.uniform(-self.cfg.nominal_jitter_pos, self.cfg.nominal_jitter_pos)
                    dy = rng.uniform(-self.cfg.nominal_jitter_pos, self.cfg.nominal_jitter_pos)
                    dyaw = rng.uniform(-self.cfg.nominal_jitter_yaw, self.cfg.nominal_jitter_yaw)
                else:
                    lo, hi, dy_r, yaw_r = WIDE_RANGES[self.cfg.skill]
                    s = 1.0 if eval_mode == "beyond_nominal" else self.init_scale
                    dx = rng.uniform(lo * s, hi * s)
                    dy = rng.uniform(-dy_r * s, dy_r * s)
                    dyaw = rng.uniform(-yaw_r * s, yaw_r * s)
                info.update(dx=float(dx), dy=float(dy), dyaw=float(dyaw))
                for attempt in range(self.cfg.reset_retries):
                    cand = self._standing_state(x0 + dx)
                    if not self._penetrates(cand):
                        state = cand
                        break
                    dx = rng.uniform(*WIDE_RANGES[self.cfg.skill][:2])
                if state is None:
                    raise EnvError(f"env {i}: could not find a non-penetrating start")
                self.goal.pos_xy[i] = np.array([goal_x, 0.0])
                self.goal.height[i] = goal_support + self.cfg.standing_height
                self.goal.quat[i] = np.array([1.0, 0.0, 0.0, 0.0])
                self.phase0[i] = 0.0
                self.clip_index[i] = 0

            self.sim.set_state(np.asarray([i]), _unsqueeze_state(state))
            self.task_kind[i] = kind
            self.elapsed[i] = 0.0
            self.prev_action[i] = 0.0
            self.reach_hold[i] = 0.0
            self.diverged_flag[i] = False
            infos.append(info)
        return infos

    def reset_all(self, task_kinds: np.ndarray | None = None,
                  eval_mode: str | None = None) -> list[dict]:
        return self.reset_envs(np.arange(self.n), task_kinds, eval_mode)

    # ---- reference access -------------------------------------------------------
    def _ref_arrays(self, ahead: float = 0.0) -> dict:
        """Interpolated reference channels at each env's current clip time.

        Generalization envs get zero-filled channels (they never consume them).
        """
        out = {k: np.zeros((self.n, 3)) for k in
               ("base_pos", "base_linvel", "base_angvel", "base_linacc", "base_angacc")}
        out["base_quat"] = np.tile(np.array([1.0, 0, 0, 0]), (self.n, 1))
        out["joint_pos"] = np.tile(self.model.q_default, (self.n, 1))
        out["joint_vel"] = np.zeros((self.n, self.nj))
        clips = self.refs.get(self.cfg.skill, [])
        imi = np.flatnonzero(self.task_kind == TASK_IMITATION)
        for ci in (np.unique(self.clip_index[imi]) if imi.size else []):
            sel = imi[self.clip_index[imi] == ci]
            clip = clips[int(ci)]
            ts = clip.times[0] + self.phase0[sel] + self.elapsed[sel] + ahead
            arrs = clip.sample_arrays(ts)
            for k in out:
                out[k][sel] = arrs[k]
        return out

    # ---- observations -------------------------------------------------------
    def _proprio(self, state: RobotState) -> dict:
        q = state.base_quat
        g_unit = np.array([0.0, 0.0, -1.0])
        return {
            "base_angvel": so3.quat_rotate_inv(q, state.base_angvel),
            "projected_gravity": so3.quat_rotate_inv(q, np.broadcast_to(g_unit, state.base_pos.shape)),
            "joint_pos_rel": state.joint_pos - self.model.q_default,
            "joint_vel_rel": state.joint_vel,
        }

    def build_policy_obs(self, state: RobotState | None = None,
                         noise: bool | None = None) -> np.ndarray:
        state = state or self.sim.states()
        pro = self._proprio(state)
        cmd = character_goal(state.base_pos, state.base_quat, self.goal)
        noise_on = self.noise_on if noise is None else noise
        ncfg = self.cfg.noise

        def jitter(x, std):
            if not noise_on or std <= 0:
                return x
            return x + self.noise_rng.normal(0.0, std, size=x.shape)

        parts = [
            jitter(pro["base_angvel"], ncfg.angvel),
            jitter(pro["projected_gravity"], ncfg.gravity),
            jitter(pro["joint_pos_rel"], ncfg.joint_pos),
            jitter(pro["joint_vel_rel"], ncfg.joint_vel),
            self.prev_action,
            jitter(np.concatenate([cmd.dxy, cmd.yaw_quat], axis=-1), ncfg.goal),
        ]
        # diverged envs are flagged done; keep their obs finite for the nets
        return np.nan_to_num(np.concatenate(parts, axis=-1), nan=0.0,
                             posinf=0.0, neginf=0.0)

    def _tracking_terms(self, state: RobotState, ref: dict) -> np.ndarray:
        cfg = self.reward_cfg
        k = cfg.kappa
        e = [
            exp_tracking_term(np.sum((state.base_pos - ref["base_pos"]) ** 2, axis=-1),
                              cfg.sigma_base_pos, k),
            exp_tracking_term(np.sum(so3.quat_diff_rotvec(state.base_quat, ref["base_quat"]) ** 2, axis=-1),
                              cfg.sigma_base_ori, k),
            exp_tracking_term(np.sum((state.base_angvel - ref["base_angvel"]) ** 2, axis=-1),
                              cfg.sigma_base_angvel, k),
            exp_tracking_term(np.sum((state.base_linvel - ref["base_linvel"]) ** 2, axis=-1),
                              cfg.sigma_base_linvel, k),
            exp_tracking_term(np.sum((state.joint_pos - ref["joint_pos"]) ** 2, axis=-1),
                              cfg.joint_sigma(self.nj), k),
        ]
        return np.mean(np.stack(e, axis=0), axis=0)

    def build_privileged_obs(self, state: RobotState | None = None,
                             ref: dict | None = None,
                             wrench: np.ndarray | None = None) -> np.ndarray:
        """Critic observation: noiseless policy obs plus privileged channels.

        Reference-dependent channels are zero-filled for generalization envs
        and the task indicator is 1 there (0 for imitation).
        """
        state = state or self.sim.states()
        ref = ref if ref is not None else self._ref_arrays()
        pol = self.build_policy_obs(state, noise=False)
        q = state.base_quat
        imi = (self.task_kind == TASK_IMITATION)
        mask = imi.astype(np.float64)[:, None]

        fpos, fvel = self.sim.foot_world()
        ee_pos = np.zeros((self.n, self.nf, 3))
        ee_pos[..., 0] = fpos[..., 0] - state.base_pos[:, None, 0]
        ee_pos[..., 2] = fpos[..., 1] - state.base_pos[:, None, 2]
        ee_vel = np.zeros((self.n, self.nf, 3))
        ee_vel[..., 0] = fvel[..., 0]
        ee_vel[..., 2] = fvel[..., 1]
        ee_force = self.sim.force_hist[:, :, -1, :]
        ee_pos_b = so3.quat_rotate_inv(q[:, None, :], ee_pos).reshape(self.n, -1)
        ee_vel_b = so3.quat_rotate_inv(q[:, None, :], ee_vel).reshape(self.n, -1)
        ee_force_b = so3.quat_rotate_inv(q[:, None, :], ee_force).reshape(self.n, -1)

        if wrench is None:
            wrench = self._assist(state, ref)
        similarity = self._tracking_terms(state, ref) * imi
        # look-ahead joint delta against the next-control-step reference
        ref_next = self._ref_arrays(ahead=self.cfg.control_dt)
        look = (ref_next["joint_pos"] - state.joint_pos) * mask

        g_unit = np.array([0.0, 0.0, -1.0])
        parts = [
            pol,
            so3.quat_rotate_inv(q, np.broadcast_to(g_unit, state.base_pos.shape)),
            so3.quat_rotate_inv(q, state.base_linvel),
            so3.quat_rotate_inv(q, state.base_angvel),
            state.base_pos[:, 2:3],
            ee_force_b,
            ee_pos_b,
            ee_vel_b,
            wrench[:, 0:3] * mask,
            wrench[:, 3:6] * mask,
            np.full((self.n, 1), self.beta) * mask,
            similarity[:, None],
            (self.task_kind == TASK_GENERALIZATION).astype(np.float64)[:, None],
            look,
        ]
        return np.nan_to_num(np.concatenate(parts, axis=-1), nan=0.0,
                             posinf=0.0, neginf=0.0)

    def _assist(self, state: RobotState, ref: dict) -> np.ndarray:
        """Assist wrench for imitation envs, zeros elsewhere (N, 6)."""
        if not self.assist_enabled:
            return np.zeros((self.n, 6))
        if np.any(self.diverged_flag):
            # keep the batch alive: diverged envs are terminated, not stepped into
            state = RobotState(
                base_pos=np.nan_to_num(state.base_pos),
                base_quat=so3.quat_normalize(np.nan_to_num(state.base_quat) + [1e-9, 0, 0, 0]),
                base_linvel=np.nan_to_num(state.base_linvel),
                base_angvel=np.nan_to_num(state.base_angvel),
                joint_pos=np.nan_to_num(state.joint_pos),
                joint_vel=np.nan_to_num(state.joint_vel),
            )
        w = assist_wrench(state, ref, self.gains, self.lam, beta_max=self.beta_max)
        mask = (self.task_kind == TASK_IMITATION).astype(np.float64)[:, None]
        return w * mask

    # ---- stepping -----------------------------------------------------------
    def step(self, actions: np.ndarray):
        """Advance one control step.

        Returns (obs, privileged_obs, reward_inputs, done, info).
        """
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.n, self.nj):
            raise EnvError(f"actions must have shape {(self.n, self.nj)}, got {actions.shape}")
        state_before = self.sim.states()
        ref_before = self._ref_arrays()
        wrench = self._assist(state_before, ref_before)
        q_cmd = self.model.q_default + self.model.action_scale * actions

        self.sim.control_step(q_cmd, wrench, self.cfg.decimation)
        self.elapsed += self.cfg.control_dt

        # scheduled pushes: planar velocity impulse of the drawn magnitude
        due = self.elapsed >= self.next_push
        for i in np.flatnonzero(due):
            direction = 1.0 if self.rngs[i].uniform() < 0.5 else -1.0
            self.sim.vx[i] += direction * self.push_speed[i]
            self.next_push[i] += max(self.push_interval[i], self.cfg.control_dt)

        state = self.sim.states()
        ref = self._ref_arrays()
        aux = PhysicsAux(
            applied_torques=self.sim.applied_tau.copy(),
            computed_torques=self.sim.computed_tau.copy(),
            joint_lower=self.model.q_lower,
            joint_upper=self.model.q_upper,
            feet=self.sim.foot_kinematics(),
            contact_history=self.sim.force_hist.copy(),
            dt=self.cfg.control_dt,
        )
        reach_now = reach_predicate(state, self.goal, self.reward_cfg.reach)
        self.reach_hold = np.where(reach_now, self.reach_hold + self.cfg.control_dt, 0.0)

        done, reason = self.check_termination(state, self.elapsed)
        inputs = RewardInputs(
            state=state, ref=ref, goal=self.goal, aux=aux,
            task_kind=self.task_kind.copy(), action=actions,
            prev_action=self.prev_action.copy(), reach_now=reach_now,
        )
        obs = self.build_policy_obs(state)
        priv = self.build_privileged_obs(state, ref)
        self.prev_action = actions.copy()
        info = {
            "reason": reason,
            "reach_hold": self.reach_hold.copy(),
            "success": reach_now & (self.reach_hold >= self.reward_cfg.reach.hold_time),
            "elapsed": self.elapsed.copy(),
        }
        return obs, priv, inputs, done, info

    def check_termination(self, state: RobotState, elapsed: np.ndarray):
        """Done flags and reason codes; NaN divergence flags but never raises."""
        diverged = self.sim.diverged() | self.diverged_flag
        self.diverged_flag = diverged
        pitch = np.abs(so3.pitch_of(np.where(np.isfinite(state.base_quat),
                                             state.base_quat, 0.0)))
        support = self.layout.support_height(
            np.where(np.isfinite(state.base_pos[..., 0]), state.base_pos[..., 0], 0.0))
        low = state.base_pos[..., 2] - support < self.cfg.min_height
        tilt = pitch > self.cfg.tilt_limit
        timeout = elapsed >= self.cfg.episode_length - 1e-9
        reason = np.zeros(self.n, dtype=np.int64)
        reason[timeout] = TERM_TIMEOUT
        reason[low & ~diverged] = TERM_LOW_HEIGHT
        reason[tilt & ~diverged] = TERM_FALL
        reason[diverged] = TERM_DIVERGED
        done = timeout | low | tilt | diverged
        return done, reason


def _unsqueeze_state(state: RobotState) -> RobotState:
    return RobotState(
        base_pos=state.base_pos[None],
        base_quat=state.base_quat[None],
        base_linvel=state.base_linvel[None],
        base_angvel=state.base_angvel[None],
        joint_pos=state.joint_pos[None],
        joint_vel=state.joint_vel[None],
    )
