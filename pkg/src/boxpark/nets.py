"""Dense networks with hand-rolled forward/backward passes, an Adam optimizer,
and the diagonal-Gaussian policy head.

Parameters are plain dicts of float64 arrays ("W0", "b0", "W1", ...), which
keeps checkpointing and finite-difference checks straightforward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


class ShapeError(ValueError):
    pass


def elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, z, np.expm1(np.minimum(z, 0.0)))


def elu_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, 1.0, np.exp(np.minimum(z, 0.0)))


def init_mlp(sizes: list[int], rng: np.random.Generator) -> dict:
    """He-style scaled normal init; final layer downscaled for small outputs."""
    params: dict = {}
    L = len(sizes) - 1
    for i in range(L):
        fan_in = sizes[i]
        scale = np.sqrt(2.0 / fan_in)
        if i == L - 1:
            scale *= 0.1
        params[f"W{i}"] = rng.normal(0.0, scale, size=(sizes[i], sizes[i + 1]))
        params[f"b{i}"] = np.zeros(sizes[i + 1])
    return params


def num_layers(params: dict) -> int:
    return sum(1 for k in params if k.startswith("W"))


def net_forward(params: dict, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Affine + ELU composition (linear final layer). Returns (output, cache)."""
    x = np.asarray(x, dtype=np.float64)
    L = num_layers(params)
    if x.shape[-1] != params["W0"].shape[0]:
        raise ShapeError(
            f"input width {x.shape[-1]} does not match layer 0 ({params['W0'].shape[0]})")
    cache = [x]
    h = x
    for i in range(L):
        z = h @ params[f"W{i}"] + params[f"b{i}"]
        cache.append(z)
        h = elu(z) if i < L - 1 else z
        cache.append(h)
    return h, cache


def net_backward(params: dict, cache: list, dout: np.ndarray) -> tuple[dict, np.ndarray]:
    """Exact reverse-mode gradients of net_forward. Returns (grads, dinput)."""
    L = num_layers(params)
    if len(cache) != 2 * L + 1:
        raise ShapeError("stale or mismatched forward cache")
    grads: dict = {}
    delta = np.asarray(dout, dtype=np.float64)
    for i in reversed(range(L)):
        z = cache[1 + 2 * i]
        h_in = cache[2 * i]
        if i < L - 1:
            delta = delta * elu_grad(z)
        if delta.ndim == 1:
            grads[f"W{i}"] = np.outer(h_in, delta)
            grads[f"b{i}"] = delta.copy()
        else:
            grads[f"W{i}"] = h_in.T @ delta
            grads[f"b{i}"] = delta.sum(axis=0)
        delta = delta @ params[f"W{i}"].T
    return grads, delta


@dataclass
class Adam:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            mhat = self.m[k] / b1t
            vhat = self.v[k] / b2t
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return total


@dataclass
class PolicyNet:
    """Actor MLP plus a state-independent log-std vector (clamped)."""

    params: dict
    log_std: np.ndarray

    @classmethod
    def create(cls, obs_dim: int, act_dim: int, hidden: tuple, rng: np.random.Generator,
               init_log_std: float = 0.0) -> "PolicyNet":
        params = init_mlp([obs_dim] + list(hidden) + [act_dim], rng)
        return cls(params=params, log_std=np.full(act_dim, init_log_std))

    def clamp(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def mean(self, obs: np.ndarray) -> np.ndarray:
        out, _ = net_forward(self.params, obs)
        return out

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        mean, _ = net_forward(self.params, obs)
        std = np.exp(self.log_std)
        noise = rng.standard_normal(mean.shape)
        actions = mean + std * noise
        return actions, mean

    def log_prob(self, mean: np.ndarray, actions: np.ndarray) -> np.ndarray:
        std = np.exp(self.log_std)
        z = (actions - mean) / std
        return -0.5 * np.sum(z * z, axis=-1) - np.sum(self.log_std) \
            - 0.5 * mean.shape[-1] * np.log(2.0 * np.pi)

    def entropy(self) -> float:
        return float(np.sum(self.log_std) + 0.5 * self.log_std.size * (1.0 + np.log(2.0 * np.pi)))


@dataclass
class ValueNet:
    params: dict

    @classmethod
    def create(cls, obs_dim: int, hidden: tuple, rng: np.random.Generator) -> "ValueNet":
        return cls(params=init_mlp([obs_dim] + list(hidden) + [1], rng))

    def value(self, obs: np.ndarray) -> np.ndarray:
        out, _ = net_forward(self.params, obs)
        return out[..., 0]


def gaussian_kl(mean_old, log_std_old, mean_new, log_std_new) -> float:
    """Mean KL(old || new) for diagonal Gaussians over a batch."""
    var_old = np.exp(2.0 * log_std_old)
    var_new = np.exp(2.0 * log_std_new)
    per_dim = (log_std_new - log_std_old
               + (var_old + (mean_old - mean_new) ** 2) / (2.0 * var_new) - 0.5)
    return float(np.mean(np.sum(per_dim, axis=-1)))
