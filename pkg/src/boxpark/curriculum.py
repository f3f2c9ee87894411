"""Difficulty curriculum: the global scalar lambda, the assistive base wrench
with scale beta(lambda), and the imitation-task sampling probability.

Lambda adapts online from windowed episode statistics: it rises when early
terminations are rare and the relaxed tracking criterion holds, and falls
otherwise. A single trainer loop owns the state; rollout workers only read
per-iteration snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import so3
from .state import RobotState


class CurriculumError(ValueError):
    pass


@dataclass
class CurriculumConfig:
    beta_max: float = 0.75
    p0: float = 1.0
    p_target: float = 0.5
    step: float = 0.02
    window_episodes: int = 50
    term_frac_threshold: float = 0.20     # criterion (i): early-termination fraction
    track_threshold: float = 0.50         # criterion (ii): mean base-position tracking term
    init_range_scale_min: float = 0.25    # init ranges expand linearly from this to 1.0

    def validate(self) -> None:
        if not (0.0 <= self.beta_max < 1.0):
            raise CurriculumError("beta_max must be in [0, 1)")
        if self.p0 < self.p_target:
            raise CurriculumError("p0 must be >= p_target")
        if self.step <= 0:
            raise CurriculumError("step must be positive")


@dataclass
class WindowStats:
    episodes: int
    early_term_fraction: float
    mean_tracking_score: float


@dataclass
class CurriculumState:
    cfg: CurriculumConfig = field(default_factory=CurriculumConfig)
    lam: float = 0.0

    def __post_init__(self):
        self.cfg.validate()
        if not (0.0 <= self.lam <= 1.0):
            raise CurriculumError("lambda must stay in [0, 1]")

    @property
    def beta(self) -> float:
        return beta_scale(self.lam, self.cfg.beta_max)

    @property
    def p_imi(self) -> float:
        return mix_probability(self.lam, self.cfg.p0, self.cfg.p_target)

    @property
    def init_range_scale(self) -> float:
        lo = self.cfg.init_range_scale_min
        return lo + (1.0 - lo) * self.lam


def beta_scale(lam: float, beta_max: float) -> float:
    """beta(lambda) = (1 - lambda) * beta_max; affine, beta(1) = 0."""
    return (1.0 - lam) * beta_max


def mix_probability(lam: float, p0: float, p_target: float) -> float:
    """Imitation-task sampling probability, linear in lambda, clamped to [0,1]."""
    return float(np.clip((1.0 - lam) * p0 + lam * p_target, 0.0, 1.0))


def update_lambda(cur: CurriculumState, window: WindowStats) -> CurriculumState:
    """Advance lambda by one step based on a full reporting window.

    Lambda increases iff the early-termination fraction is below threshold AND
    the relaxed tracking score is above threshold; otherwise it decreases.
    Always clamped to [0, 1].
    """
    ok = (window.early_term_fraction < cur.cfg.term_frac_threshold) and (
        window.mean_tracking_score > cur.cfg.track_threshold)
    lam = cur.lam + (cur.cfg.step if ok else -cur.cfg.step)
    return replace(cur, lam=float(np.clip(lam, 0.0, 1.0)))


@dataclass
class AssistGains:
    """Eq.-style assist gains plus the nominal model constants."""

    kp_v: float = 0.0
    kd_v: float = 15.0
    kp_w: float = 200.0
    kd_w: float = 1.0
    M: float = 35.0
    I: np.ndarray = field(default_factory=lambda: np.diag([1.5, 1.5, 0.8]))
    r_b_com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    g: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def validate(self) -> None:
        if self.M <= 0:
            raise CurriculumError("M must be positive")
        sym = 0.5 * (self.I + self.I.T)
        if not np.allclose(self.I, sym) or np.any(np.linalg.eigvalsh(sym) <= 0):
            raise CurriculumError("I must be symmetric positive-definite")


def assist_wrench(state: RobotState, ref, gains: AssistGains, lam: float,
                  beta_max: float = 0.75) -> np.ndarray:
    """Assistive base wrench beta(lambda) * [F; M].

    Force: F = M * (vdot_ref + kp_v (p_ref - p) + kd_v (v_ref - v) - g).
    Torque: M = I wdot_ref + kp_w I (q_ref [-] q) + kd_w I (w_ref - w)
              + w x (I w) - r_com x (M g),
    with [-] the world-frame SO(3) log difference. Returns (..., 6).
    At lam = 1 the result is exactly zero.
    """
    if isinstance(ref, dict):
        rp, rq = ref["base_pos"], ref["base_quat"]
        rv, rw = ref["base_linvel"], ref["base_angvel"]
        ra, rdw = ref["base_linacc"], ref["base_angacc"]
    else:
        rp, rq, rv, rw = ref.base_pos, ref.base_quat, ref.base_linvel, ref.base_angvel
        ra, rdw = ref.base_linacc, ref.base_angacc

    p, q = state.base_pos, state.base_quat
    v, w = state.base_linvel, state.base_angvel
    for nm, arr in [("p", p), ("q", q), ("v", v), ("w", w), ("ref_p", rp),
                    ("ref_q", rq), ("ref_v", rv), ("ref_w", rw),
                    ("ref_acc", ra), ("ref_angacc", rdw)]:
        if not np.all(np.isfinite(np.asarray(arr, dtype=np.float64))):
            raise CurriculumError(f"non-finite input to assist_wrench: {nm}")

    gains.validate()
    I = gains.I
    force = gains.M * (ra + gains.kp_v * (rp - p) + gains.kd_v * (rv - v) - gains.g)
    ori_err = so3.quat_diff_rotvec(rq, q)
    Iw = w @ I.T
    torque = (rdw @ I.T
              + gains.kp_w * (ori_err @ I.T)
              + gains.kd_w * ((rw - w) @ I.T)
              + np.cross(w, Iw)
              - np.cross(gains.r_b_com, gains.M * gains.g))
    wrench = np.concatenate([force, torque], axis=-1)
    beta = beta_scale(lam, beta_max)
    if beta == 0.0:
        return np.zeros_like(wrench)
    return beta * wrench
