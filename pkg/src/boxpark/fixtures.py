"""Golden-fixture generation and verification.

Each fixture family pairs the production implementation against an independent
straight-line oracle written here from the printed formulas: the assist wrench
term by term, brute-force discounted GAE sums, closed-form reward values, and
finite-difference gradient checks. Disagreement raises FixtureError naming the
fixture so the CLI can exit nonzero.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import so3
from .curriculum import AssistGains, assist_wrench
from .nets import PolicyNet, ValueNet, net_backward, net_forward
from .ppo import gae
from .rewards import RewardConfig, exp_tracking_term
from .state import RobotState


class FixtureError(RuntimeError):
    def __init__(self, name: str, detail: str):
        super().__init__(f"fixture {name!r} disagrees with its oracle: {detail}")
        self.fixture = name


def _rand_quat(rng) -> np.ndarray:
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def _oracle_wrench(state: RobotState, ref: dict, gains: AssistGains, lam: float,
                   beta_max: float) -> np.ndarray:
    """Term-by-term re-evaluation of the assist wrench, scalar style."""
    M = gains.M
    I = gains.I
    F = np.zeros(3)
    for k in range(3):
        F[k] = M * (ref["base_linacc"][k]
                    + gains.kp_v * (ref["base_pos"][k] - state.base_pos[k])
                    + gains.kd_v * (ref["base_linvel"][k] - state.base_linvel[k])
                    - gains.g[k])
    # world-frame log map of q_ref * q^-1
    q_inv = state.base_quat * np.array([1.0, -1, -1, -1])
    q_rel = np.array([
        ref["base_quat"][0] * q_inv[0] - np.dot(ref["base_quat"][1:], q_inv[1:]),
        *(ref["base_quat"][0] * q_inv[1:] + q_inv[0] * ref["base_quat"][1:]
          + np.cross(ref["base_quat"][1:], q_inv[1:])),
    ])
    if q_rel[0] < 0:
        q_rel = -q_rel
    sin_half = np.linalg.norm(q_rel[1:])
    angle = 2.0 * np.arctan2(sin_half, q_rel[0])
    axis = q_rel[1:] / sin_half if sin_half > 1e-12 else np.zeros(3)
    ori_err = axis * angle
    w = state.base_angvel
    T = (I @ ref["base_angacc"]
         + gains.kp_w * (I @ ori_err)
         + gains.kd_w * (I @ (ref["base_angvel"] - w))
         + np.cross(w, I @ w)
         - np.cross(gains.r_b_com, M * gains.g))
    return (1.0 - lam) * beta_max * np.concatenate([F, T])


def wrench_fixtures(rng: np.random.Generator, count: int = 100) -> list[dict]:
    gains = AssistGains()
    cases = []
    for i in range(count):
        state = RobotState(
            base_pos=rng.normal(scale=1.0, size=3),
            base_quat=_rand_quat(rng),
            base_linvel=rng.normal(scale=1.0, size=3),
            base_angvel=rng.normal(scale=1.0, size=3),
            joint_pos=np.zeros(4), joint_vel=np.zeros(4))
        ref = {
            "base_pos": rng.normal(scale=1.0, size=3),
            "base_quat": _rand_quat(rng),
            "base_linvel": rng.normal(scale=1.0, size=3),
            "base_angvel": rng.normal(scale=1.0, size=3),
            "base_linacc": rng.normal(scale=2.0, size=3),
            "base_angacc": rng.normal(scale=2.0, size=3),
        }
        lam = float(rng.uniform())
        got = assist_wrench(state, ref, gains, lam)
        want = _oracle_wrench(state, ref, gains, lam, beta_max=0.75)
        if not np.allclose(got, want, rtol=0.0, atol=1e-10):
            raise FixtureError("wrench_oracle", f"case {i}: |d|={np.max(np.abs(got - want))}")
        cases.append({
            "state": {"pos": state.base_pos.tolist(), "quat": state.base_quat.tolist(),
                      "linvel": state.base_linvel.tolist(), "angvel": state.base_angvel.tolist()},
            "ref": {k: np.asarray(v).tolist() for k, v in ref.items()},
            "lam": lam,
            "wrench": want.tolist(),
        })
    # gravity-compensation fixed point
    state = RobotState(base_pos=np.zeros(3), base_quat=np.array([1.0, 0, 0, 0]),
                       base_linvel=np.zeros(3), base_angvel=np.zeros(3),
                       joint_pos=np.zeros(4), joint_vel=np.zeros(4))
    ref = {k: np.zeros(3) for k in ("base_pos", "base_linvel", "base_angvel",
                                    "base_linacc", "base_angacc")}
    ref["base_quat"] = np.array([1.0, 0, 0, 0])
    got = assist_wrench(state, ref, gains, 0.0)
    want = np.array([0.0, 0.0, 0.75 * 35.0 * 9.81, 0, 0, 0])
    if not np.allclose(got, want, atol=1e-9):
        raise FixtureError("wrench_gravity_fixed_point", f"{got} vs {want}")
    cases.append({"state": "gravity_fixed_point", "lam": 0.0, "wrench": want.tolist()})
    return cases


def _oracle_gae(rewards, values, bootstrap, dones, gamma, lam):
    """Brute-force enumeration of discounted TD-residual sums."""
    T = len(rewards)
    next_vals = [0.0] * T
    for t in range(T):
        if dones[t]:
            next_vals[t] = 0.0
        elif t == T - 1:
            next_vals[t] = bootstrap
        else:
            next_vals[t] = values[t + 1]
    deltas = [rewards[t] + gamma * next_vals[t] - values[t] for t in range(T)]
    adv = [0.0] * T
    for t in range(T):
        acc = 0.0
        w = 1.0
        for k in range(t, T):
            acc += w * deltas[k]
            if dones[k]:
                break
            w *= gamma * lam
        adv[t] = acc
    return np.asarray(adv)


def gae_fixtures(rng: np.random.Generator, count: int = 50) -> list[dict]:
    cases = []
    for i in range(count):
        T = int(rng.integers(1, 11))
        rewards = rng.normal(size=T)
        values = rng.normal(size=T)
        dones = rng.uniform(size=T) < 0.25
        bootstrap = float(rng.normal())
        want = _oracle_gae(rewards.tolist(), values.tolist(), bootstrap,
                           dones.tolist(), 0.99, 0.95)
        got, _ = gae(rewards[:, None], values[:, None], np.array([bootstrap]),
                     dones[:, None], 0.99, 0.95)
        if not np.allclose(got[:, 0], want, atol=1e-10):
            raise FixtureError("gae_oracle", f"case {i}")
        cases.append({"rewards": rewards.tolist(), "values": values.tolist(),
                      "dones": dones.astype(int).tolist(), "bootstrap": bootstrap,
                      "advantages": want.tolist()})
    return cases


def reward_fixtures() -> dict:
    cfg = RewardConfig()
    out = {}
    # closed-form evaluation of the exponential form at sigma=0.4, |e|^2=0.16
    val = float(exp_tracking_term(0.16, 0.4, 1.0))
    want = float(np.exp(-1.0))
    if abs(val - want) > 1e-12:
        raise FixtureError("exp_tracking_e_minus_1", f"{val} vs {want}")
    out["exp_tracking_e_minus_1"] = want
    # the joint-sigma rule: |e|^2 = 0.09 * nj with nj = 4 -> exp(-kappa)
    nj = 4
    val = float(exp_tracking_term(0.09 * nj, cfg.joint_sigma(nj), cfg.kappa))
    if abs(val - want) > 1e-12:
        raise FixtureError("joint_sigma_rule", f"{val} vs {want}")
    out["joint_sigma_rule"] = want
    # clearance formula at height error 0.1 and speed 1.0
    h, v = 0.18, 1.0
    want = float(np.exp(-((h - cfg.clearance_target) ** 2)
                        * np.tanh(cfg.clearance_alpha * v) / cfg.clearance_sigma))
    out["clearance_single_foot"] = want
    out["base_height_penalty_0p1"] = -10.0 * 0.1
    out["goal_pos_penalty_1m"] = -5.0 * 1.0
    out["goal_ori_penalty_90deg"] = -1.0 * float(np.pi / 2)
    return out


def gradcheck_fixtures(rng: np.random.Generator, configs: int = 5) -> dict:
    worst = 0.0
    for _ in range(configs):
        sizes = [int(rng.integers(3, 8)) for _ in range(4)]
        actor = PolicyNet.create(sizes[0], sizes[-1], tuple(sizes[1:3]), rng)
        x = rng.normal(size=sizes[0])
        proj = rng.normal(size=sizes[-1])
        out, cache = net_forward(actor.params, x)
        grads, _ = net_backward(actor.params, cache, proj)
        for k in actor.params:
            p = actor.params[k]
            g = grads[k]
            it = np.nditer(p, flags=["multi_index"])
            for _v in it:
                idx = it.multi_index
                h = 1e-5
                p[idx] += h
                up, _ = net_forward(actor.params, x)
                p[idx] -= 2 * h
                dn, _ = net_forward(actor.params, x)
                p[idx] += h
                fd = float(np.dot(proj, up - dn) / (2 * h))
                denom = max(abs(fd), abs(float(g[idx])), 1e-8)
                rel = abs(fd - float(g[idx])) / denom
                worst = max(worst, rel)
    if worst >= 1e-4:
        raise FixtureError("gradcheck", f"max relative error {worst:.2e}")
    return {"max_rel_err": worst}


def generate_fixtures(out_dir: str | Path, seed: int = 1234) -> dict:
    """Generate, verify, and write every fixture family. Returns a summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(seed))
    families = {
        "wrench": wrench_fixtures(rng),
        "gae": gae_fixtures(rng),
        "reward": reward_fixtures(),
        "gradcheck": gradcheck_fixtures(rng),
    }
    for name, payload in families.items():
        with open(out / f"{name}_fixtures.json", "w") as f:
            json.dump(payload, f, indent=1)
    return {k: (len(v) if isinstance(v, list) else 1) for k, v in families.items()}
