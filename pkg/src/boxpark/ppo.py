"""Asymmetric actor-critic PPO: GAE, clipped-surrogate updates with a
KL-adaptive learning rate, multi-task rollout collection, and the training loop
that owns the difficulty curriculum.

The actor sees only proprioception + goal; the critic consumes the privileged
observation (which carries the task indicator). Updates run 5 epochs of 1/4
minibatches with per-batch advantage normalization.
"""

from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .curriculum import CurriculumConfig, CurriculumState, WindowStats, update_lambda
from .env import (TASK_GENERALIZATION, TASK_IMITATION, TERM_DIVERGED,
                  TERM_TIMEOUT, ParkourEnv, RewardInputs)
from .nets import (Adam, PolicyNet, ValueNet, clip_grad_norm, gaussian_kl,
                   net_backward, net_forward)
from .rewards import ALL_TERMS, RewardConfig, goal_reward, imitation_reward
from .state import FootKinematics, PhysicsAux, RobotState, WorldGoal


@dataclass
class TrainerConfig:
    lr: float = 1.0e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    desired_kl: float = 0.01
    clip: float = 0.2
    entropy_coef: float = 0.001
    value_coef: float = 0.5
    epochs: int = 5
    num_envs: int = 256
    steps_per_env: int = 24
    minibatch_fraction: float = 0.25
    actor_hidden: tuple = (256, 128, 64)
    critic_hidden: tuple = (256, 128, 64)
    init_log_std: float = 0.0
    lr_min: float = 1.0e-6
    lr_max: float = 1.0e-2
    lr_adapt_factor: float = 1.5
    max_grad_norm: float = 1.0
    iterations: int = 400
    checkpoint_interval: int = 200

    @property
    def batch_size(self) -> int:
        return self.num_envs * self.steps_per_env

    @property
    def num_minibatches(self) -> int:
        return max(1, int(round(1.0 / self.minibatch_fraction)))


PAPER_SCALE = dict(actor_hidden=(1024, 512, 256), critic_hidden=(1024, 512, 256),
                   num_envs=4096)


def gae(rewards, values, bootstrap_value, dones, gamma: float, lam: float):
    """Backward GAE recursion over (T, N) arrays; no bootstrap across dones.

    Returns (advantages, returns) with returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    last = np.zeros_like(np.asarray(bootstrap_value, dtype=np.float64))
    for t in reversed(range(T)):
        nonterminal = 1.0 - dones[t].astype(np.float64)
        next_value = values[t + 1] if t < T - 1 else np.asarray(bootstrap_value, dtype=np.float64)
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv, adv + values


# ---- batched reward evaluation ----------------------------------------------------

def _take_state(state: RobotState, idx) -> RobotState:
    return RobotState(
        base_pos=state.base_pos[idx], base_quat=state.base_quat[idx],
        base_linvel=state.base_linvel[idx], base_angvel=state.base_angvel[idx],
        joint_pos=state.joint_pos[idx], joint_vel=state.joint_vel[idx],
    )


def _take_aux(aux: PhysicsAux, idx) -> PhysicsAux:
    feet = aux.feet
    return PhysicsAux(
        applied_torques=aux.applied_torques[idx],
        computed_torques=aux.computed_torques[idx],
        joint_lower=aux.joint_lower, joint_upper=aux.joint_upper,
        feet=None if feet is None else FootKinematics(
            heights=feet.heights[idx], planar_vel=feet.planar_vel[idx],
            vel=feet.vel[idx], acc=feet.acc[idx], prev_acc=feet.prev_acc[idx]),
        contact_history=aux.contact_history[idx],
        dt=aux.dt,
    )


def compute_step_rewards(inputs: RewardInputs, cfg: RewardConfig,
                         valid: np.ndarray | None = None):
    """Per-env rewards for one control step, split by task kind.

    Returns (rewards (N,), track_base_pos score (N,), term sums dict) where the
    score is zero for generalization envs and term sums aggregate weighted
    values for logging.
    """
    n = inputs.task_kind.shape[0]
    rewards = np.zeros(n)
    track = np.zeros(n)
    sums: dict[str, float] = {}
    valid = np.ones(n, dtype=bool) if valid is None else valid

    imi = np.flatnonzero((inputs.task_kind == TASK_IMITATION) & valid)
    gen = np.flatnonzero((inputs.task_kind == TASK_GENERALIZATION) & valid)
    if imi.size:
        bd = imitation_reward(
            _take_state(inputs.state, imi),
            {k: v[imi] for k, v in inputs.ref.items() if k != "time"},
            inputs.prev_action[imi], inputs.action[imi], cfg,
            aux=_take_aux(inputs.aux, imi))
        rewards[imi] = bd.total
        track[imi] = bd.terms["track_base_pos"]
        for k, v in bd.weighted.items():
            sums[k] = sums.get(k, 0.0) + float(np.sum(v))
    if gen.size:
        goal = WorldGoal(pos_xy=inputs.goal.pos_xy[gen],
                         height=inputs.goal.height[gen],
                         quat=inputs.goal.quat[gen])
        bd = goal_reward(
            _take_state(inputs.state, gen), goal, cfg,
            prev_action=inputs.prev_action[gen], action=inputs.action[gen],
            aux=_take_aux(inputs.aux, gen))
        rewards[gen] = bd.total
        for k, v in bd.weighted.items():
            sums[k] = sums.get(k, 0.0) + float(np.sum(v))
    return rewards, track, sums


# ---- rollout collection ------------------------------------------------------------

@dataclass
class EpisodeRecord:
    task_kind: int
    length: int
    early_term: bool
    success: bool
    track_mean: float | None
    total_reward: float


@dataclass
class RolloutBatch:
    obs: np.ndarray
    priv_obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    means: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    bootstrap: np.ndarray
    episodes: list
    term_sums: dict
    steps: int


class RolloutCollector:
    """Steppable rollout state shared across trainer iterations."""

    def __init__(self, env: ParkourEnv, reward_cfg: RewardConfig, rng: np.random.Generator):
        self.env = env
        self.reward_cfg = reward_cfg
        self.rng = rng
        n = env.n
        self.ep_len = np.zeros(n, dtype=np.int64)
        self.ep_reward = np.zeros(n)
        self.ep_track_sum = np.zeros(n)
        self.obs = None
        self.priv = None

    def reset_all(self):
        self.env.reset_all()
        self.ep_len[:] = 0
        self.ep_reward[:] = 0.0
        self.ep_track_sum[:] = 0.0
        self.obs = self.env.build_policy_obs()
        self.priv = self.env.build_privileged_obs()

    def collect(self, actor: PolicyNet, critic: ValueNet, cfg: TrainerConfig) -> RolloutBatch:
        env = self.env
        if self.obs is None:
            self.reset_all()
        T, n = cfg.steps_per_env, env.n
        obs_buf = np.zeros((T, n, self.obs.shape[1]))
        priv_buf = np.zeros((T, n, self.priv.shape[1]))
        act_buf = np.zeros((T, n, env.nj))
        logp_buf = np.zeros((T, n))
        mean_buf = np.zeros((T, n, env.nj))
        rew_buf = np.zeros((T, n))
        done_buf = np.zeros((T, n), dtype=bool)
        val_buf = np.zeros((T, n))
        episodes: list[EpisodeRecord] = []
        term_sums: dict[str, float] = {}

        for t in range(T):
            obs_buf[t] = self.obs
            priv_buf[t] = self.priv
            actions, mean = actor.sample(self.obs, self.rng)
            logp = actor.log_prob(mean, actions)
            val_buf[t] = critic.value(self.priv)
            act_buf[t], mean_buf[t], logp_buf[t] = actions, mean, logp

            _, _, inputs, done, info = env.step(actions)
            valid = info["reason"] != TERM_DIVERGED  # diverged envs get zero reward
            rewards, track, sums = compute_step_rewards(inputs, self.reward_cfg, valid)
            for k, v in sums.items():
                term_sums[k] = term_sums.get(k, 0.0) + v
            rew_buf[t] = rewards
            done_buf[t] = done

            self.ep_len += 1
            self.ep_reward += rewards
            self.ep_track_sum += track

            done_ids = np.flatnonzero(done)
            if done_ids.size:
                for i in done_ids:
                    is_imi = env.task_kind[i] == TASK_IMITATION
                    episodes.append(EpisodeRecord(
                        task_kind=int(env.task_kind[i]),
                        length=int(self.ep_len[i]),
                        early_term=bool(info["reason"][i] != TERM_TIMEOUT),
                        success=bool(info["success"][i]),
                        track_mean=float(self.ep_track_sum[i] / max(self.ep_len[i], 1))
                        if is_imi else None,
                        total_reward=float(self.ep_reward[i]),
                    ))
                env.reset_envs(done_ids)
                self.ep_len[done_ids] = 0
                self.ep_reward[done_ids] = 0.0
                self.ep_track_sum[done_ids] = 0.0
            self.obs = env.build_policy_obs()
            self.priv = env.build_privileged_obs()

        bootstrap = critic.value(self.priv)
        return RolloutBatch(
            obs=obs_buf, priv_obs=priv_buf, actions=act_buf, log_probs=logp_buf,
            means=mean_buf, rewards=rew_buf, dones=done_buf, values=val_buf,
            bootstrap=bootstrap, episodes=episodes, term_sums=term_sums,
            steps=T * n,
        )


# ---- PPO update --------------------------------------------------------------------

def ppo_update(batch: dict, actor: PolicyNet, critic: ValueNet,
               actor_opt: Adam, critic_opt: Adam, cfg: TrainerConfig,
               rng: np.random.Generator, lr: float) -> dict:
    """Clipped-surrogate update over shuffled minibatches.

    `batch` holds flat arrays: obs, priv_obs, actions, old_log_probs, old_means,
    advantages (already normalized per batch), returns. Returns stats including
    the adapted learning rate. On a non-finite loss the previous parameters are
    restored, the learning rate decays, and the update aborts.
    """
    B = batch["obs"].shape[0]
    mb = max(1, B // cfg.num_minibatches)
    old_log_std = actor.log_std.copy()
    snap_actor = copy.deepcopy(actor.params)
    snap_log_std = actor.log_std.copy()
    snap_critic = copy.deepcopy(critic.params)

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "kl": 0.0, "entropy": actor.entropy(),
             "lr": lr, "aborted": False}
    count = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(B)
        epoch_kl = []
        for s in range(0, B - mb + 1, mb):
            idx = order[s:s + mb]
            obs = batch["obs"][idx]
            priv = batch["priv_obs"][idx]
            act = batch["actions"][idx]
            adv = batch["advantages"][idx]
            ret = batch["returns"][idx]
            old_logp = batch["old_log_probs"][idx]
            old_mean = batch["old_means"][idx]

            mean, cache = net_forward(actor.params, obs)
            std = np.exp(actor.log_std)
            var = std * std
            z = (act - mean) / std
            logp = -0.5 * np.sum(z * z, axis=-1) - np.sum(actor.log_std) \
                - 0.5 * act.shape[-1] * np.log(2.0 * np.pi)
            ratio = np.exp(logp - old_logp)
            unclipped = ratio * adv
            clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv
            policy_loss = -np.mean(np.minimum(unclipped, clipped))
            kl = gaussian_kl(old_mean, old_log_std, mean, actor.log_std)
            epoch_kl.append(kl)

            v, vcache = net_forward(critic.params, priv)
            v = v[:, 0]
            value_loss = np.mean((v - ret) ** 2)
            entropy = actor.entropy()
            total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
            if not np.isfinite(total):
                actor.params = snap_actor
                actor.log_std = snap_log_std
                critic.params = snap_critic
                stats["aborted"] = True
                stats["lr"] = max(lr / cfg.lr_adapt_factor, cfg.lr_min)
                return stats

            # gradient of the clipped surrogate w.r.t. the new log-prob
            active = (unclipped <= clipped).astype(np.float64)
            dlogp = -(adv * ratio * active) / idx.size
            dmean = dlogp[:, None] * (act - mean) / var
            dlogstd = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)
            dlogstd -= cfg.entropy_coef * np.ones_like(actor.log_std)
            agrads, _ = net_backward(actor.params, cache, dmean)
            agrads["log_std"] = dlogstd
            clip_grad_norm(agrads, cfg.max_grad_norm)
            log_std_grad = agrads.pop("log_std")

            dvout = (2.0 * cfg.value_coef * (v - ret) / idx.size)[:, None]
            cgrads, _ = net_backward(critic.params, vcache, dvout)
            clip_grad_norm(cgrads, cfg.max_grad_norm)

            actor_opt.lr = lr
            critic_opt.lr = lr
            actor_opt.step(actor.params, agrads)
            actor.log_std -= lr * log_std_grad
            actor.clamp()
            critic_opt.step(critic.params, cgrads)

            stats["policy_loss"] += float(policy_loss)
            stats["value_loss"] += float(value_loss)
            stats["kl"] += float(kl)
            count += 1
        # per-epoch KL-adaptive learning rate
        mkl = float(np.mean(epoch_kl)) if epoch_kl else 0.0
        if mkl > 2.0 * cfg.desired_kl:
            lr = max(lr / cfg.lr_adapt_factor, cfg.lr_min)
        elif mkl < 0.5 * cfg.desired_kl:
            lr = min(lr * cfg.lr_adapt_factor, cfg.lr_max)
    for k in ("policy_loss", "value_loss", "kl"):
        stats[k] /= max(count, 1)
    stats["lr"] = lr
    stats["entropy"] = actor.entropy()
    return stats


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


# ---- trainer -----------------------------------------------------------------------

@dataclass
class AblationFlags:
    no_task_curriculum: bool = False
    no_imitation: bool = False
    no_generalization: bool = False


class Trainer:
    def __init__(self, env: ParkourEnv, reward_cfg: RewardConfig,
                 trainer_cfg: TrainerConfig, curriculum_cfg: CurriculumConfig,
                 seed: int, ablation: AblationFlags | None = None):
        self.env = env
        self.cfg = trainer_cfg
        self.reward_cfg = reward_cfg
        self.ablation = ablation or AblationFlags()
        self.curriculum = CurriculumState(cfg=curriculum_cfg,
                                          lam=1.0 if self.ablation.no_task_curriculum else 0.0)
        init_rng = np.random.Generator(np.random.PCG64(seed ^ 0x1A2B))
        self.actor = PolicyNet.create(_policy_dim(env), env.nj,
                                      trainer_cfg.actor_hidden, init_rng,
                                      trainer_cfg.init_log_std)
        self.critic = ValueNet.create(_priv_dim(env), trainer_cfg.critic_hidden, init_rng)
        self.actor_opt = Adam(lr=trainer_cfg.lr)
        self.critic_opt = Adam(lr=trainer_cfg.lr)
        self.lr = trainer_cfg.lr
        self.collector = RolloutCollector(
            env, reward_cfg, np.random.Generator(np.random.PCG64(seed ^ 0x3C4D)))
        self.update_rng = np.random.Generator(np.random.PCG64(seed ^ 0x5E6F))
        self.episode_window: deque = deque()
        self.iteration = 0
        self._push_curriculum()

    def _effective_p_imi(self) -> float:
        if self.ablation.no_imitation:
            return 0.0
        if self.ablation.no_generalization:
            return 1.0
        return self.curriculum.p_imi

    def _push_curriculum(self):
        cur = self.curriculum
        self.env.set_curriculum(cur.lam, cur.cfg.beta_max, self._effective_p_imi(),
                                cur.init_range_scale)

    def _update_curriculum(self):
        W = self.curriculum.cfg.window_episodes
        while len(self.episode_window) >= W:
            batch = [self.episode_window.popleft() for _ in range(W)]
            early = float(np.mean([e.early_term for e in batch]))
            scores = [e.track_mean for e in batch if e.track_mean is not None]
            track = float(np.mean(scores)) if scores else 1.0
            stats = WindowStats(episodes=W, early_term_fraction=early,
                                mean_tracking_score=track)
            if not self.ablation.no_task_curriculum:
                self.curriculum = update_lambda(self.curriculum, stats)

    def train_iteration(self) -> dict:
        self._push_curriculum()
        batch = self.collector.collect(self.actor, self.critic, self.cfg)
        self.episode_window.extend(batch.episodes)

        adv, returns = gae(batch.rewards, batch.values, batch.bootstrap,
                           batch.dones, self.cfg.gamma, self.cfg.gae_lambda)
        flat = {
            "obs": batch.obs.reshape(-1, batch.obs.shape[-1]),
            "priv_obs": batch.priv_obs.reshape(-1, batch.priv_obs.shape[-1]),
            "actions": batch.actions.reshape(-1, batch.actions.shape[-1]),
            "old_log_probs": batch.log_probs.reshape(-1),
            "old_means": batch.means.reshape(-1, batch.means.shape[-1]),
            "advantages": normalize_advantages(adv.reshape(-1)),
            "returns": returns.reshape(-1),
        }
        stats = ppo_update(flat, self.actor, self.critic, self.actor_opt,
                           self.critic_opt, self.cfg, self.update_rng, self.lr)
        self.lr = stats["lr"]
        self._update_curriculum()
        self.iteration += 1

        eps = batch.episodes
        row = {
            "iteration": self.iteration,
            "mean_step_reward": float(batch.rewards.mean()),
            "mean_episode_reward": float(np.mean([e.total_reward for e in eps])) if eps else 0.0,
            "mean_episode_length": float(np.mean([e.length for e in eps])) if eps else 0.0,
            "episodes": len(eps),
            "imitation_episodes": sum(1 for e in eps if e.task_kind == TASK_IMITATION),
            "success_rate": float(np.mean([e.success for e in eps])) if eps else 0.0,
            "early_term_rate": float(np.mean([e.early_term for e in eps])) if eps else 0.0,
            "lambda": self.curriculum.lam,
            "beta": self.curriculum.beta,
            "p_imi": self._effective_p_imi(),
            "kl": stats["kl"],
            "lr": stats["lr"],
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
            "entropy": stats["entropy"],
            "aborted": int(stats["aborted"]),
        }
        steps = batch.steps
        for name in ALL_TERMS:
            row[f"reward/{name}"] = batch.term_sums.get(name, 0.0) / steps
        return row


def _policy_dim(env: ParkourEnv) -> int:
    from .env import policy_obs_dim
    return policy_obs_dim(env.nj, env.nf)


def _priv_dim(env: ParkourEnv) -> int:
    from .env import privileged_obs_dim
    return privileged_obs_dim(env.nj, env.nf)
