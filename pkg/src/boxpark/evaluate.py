"""Policy evaluation: N-trial success reports under nominal or beyond-nominal
initialization, with motion-similarity metrics against the reference clip.

Evaluation runs with observation noise, domain randomization, and pushes
disabled; actions are taken at the policy mean. A trial succeeds when the
episode ends with the reach predicate held for the configured hold time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import so3
from .artifacts import TrajectoryDumper
from .config import ExperimentConfig
from .env import TERM_REASONS
from .nets import PolicyNet
from .runtime import make_env, prepare_refs
from .robot import load_robot


@dataclass
class EvalReport:
    mode: str
    trials: int
    success_rate: float
    mean_root_ori_err: float | None
    mean_joint_err: float | None
    outcomes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "trials": self.trials,
            "success_rate": self.success_rate,
            "mean_root_ori_err": self.mean_root_ori_err,
            "mean_joint_err": self.mean_joint_err,
        }


def _projected_gravity(quat: np.ndarray) -> np.ndarray:
    g = np.array([0.0, 0.0, -1.0])
    return so3.quat_rotate_inv(quat, np.broadcast_to(g, quat.shape[:-1] + (3,)))


def run_eval(actor: PolicyNet, cfg: ExperimentConfig, mode: str, trials: int,
             seed: int, reference_free: bool = False, batch: int = 256,
             dump: TrajectoryDumper | None = None) -> EvalReport:
    """Evaluate `trials` episodes; returns the success report.

    Similarity metrics compare against the primary reference clip aligned from
    episode start; they are omitted for reference-free checkpoints.
    """
    if mode not in ("nominal", "beyond_nominal"):
        raise ValueError(f"unknown eval mode {mode!r}")
    robot = load_robot(cfg.robot_file)
    refs = prepare_refs(cfg, robot) if not reference_free else {cfg.skill: []}
    clip = refs[cfg.skill][0] if refs[cfg.skill] else None

    outcomes = []
    remaining = trials
    chunk_seed = seed
    while remaining > 0:
        n = min(batch, remaining)
        env = make_env(cfg, n, chunk_seed, noise=False, domain_rand=False,
                       refs={cfg.skill: refs[cfg.skill] or []})
        chunk_seed += 1000003
        infos = env.reset_all(eval_mode=mode)
        active = np.ones(n, dtype=bool)
        success = np.zeros(n, dtype=bool)
        end_reason = np.zeros(n, dtype=np.int64)
        steps_taken = np.zeros(n, dtype=np.int64)
        ori_err_sum = np.zeros(n)
        joint_err_sum = np.zeros(n)

        max_steps = int(round(cfg.env.episode_length / cfg.env.control_dt))
        for t in range(max_steps):
            obs = env.build_policy_obs(noise=False)
            action = actor.mean(obs)
            action[~active] = 0.0
            _, _, _, done, info = env.step(action)
            state = env.sim.states()
            if clip is not None:
                ts = np.full(n, min(t * cfg.env.control_dt, clip.duration))
                ref = clip.sample_arrays(ts)
                g_err = np.linalg.norm(
                    _projected_gravity(state.base_quat) - _projected_gravity(ref["base_quat"]),
                    axis=-1)
                q_err = np.linalg.norm(state.joint_pos - ref["joint_pos"], axis=-1)
                ori_err_sum += g_err * active
                joint_err_sum += q_err * active
            steps_taken += active
            if dump is not None and active[0]:
                dump.write({
                    "step": t, "time": t * cfg.env.control_dt,
                    "base_x": float(env.sim.x[0]), "base_z": float(env.sim.z[0]),
                    "base_pitch": float(env.sim.th[0]),
                    **{f"q{j}": float(env.sim.q[0, j]) for j in range(env.nj)},
                    "reach_hold": float(info["reach_hold"][0]),
                })
            ending = done & active
            if np.any(ending):
                success[ending] = info["success"][ending]
                end_reason[ending] = info["reason"][ending]
                active &= ~done
            if not np.any(active):
                break

        for i in range(n):
            k = max(int(steps_taken[i]), 1)
            outcomes.append({
                "trial": len(outcomes),
                "dx": infos[i]["dx"], "dy": infos[i]["dy"], "dyaw": infos[i]["dyaw"],
                "success": bool(success[i]),
                "reason": TERM_REASONS[int(end_reason[i])],
                "steps": int(steps_taken[i]),
                "root_ori_err": float(ori_err_sum[i] / k) if clip is not None else None,
                "joint_err": float(joint_err_sum[i] / k) if clip is not None else None,
            })
        remaining -= n

    rate = float(np.mean([o["success"] for o in outcomes]))
    mo = float(np.mean([o["root_ori_err"] for o in outcomes])) if clip is not None else None
    mj = float(np.mean([o["joint_err"] for o in outcomes])) if clip is not None else None
    return EvalReport(mode=mode, trials=trials, success_rate=rate,
                      mean_root_ori_err=mo, mean_joint_err=mj, outcomes=outcomes)


def write_outcomes_csv(report: EvalReport, path: str | Path) -> None:
    cols = ["trial", "dx", "dy", "dyaw", "success", "reason", "steps",
            "root_ori_err", "joint_err"]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for o in report.outcomes:
            vals = []
            for c in cols:
                v = o[c]
                if v is None:
                    vals.append("")       # reference-free runs omit these columns
                elif isinstance(v, bool):
                    vals.append("1" if v else "0")
                elif isinstance(v, float):
                    vals.append(format(v, ".10g"))
                else:
                    vals.append(str(v))
            f.write(",".join(vals) + "\n")
