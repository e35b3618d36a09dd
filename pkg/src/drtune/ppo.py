"""Inner-problem solver: clipped-surrogate policy optimization.

Given a randomization distribution, trains a policy to maximize expected
return across environments drawn from it: every episode in a rollout batch
re-samples the physical parameters, so the data distribution realizes the
expectation over environments. Updates use the clipped likelihood-ratio
surrogate with GAE advantages and an Adam optimizer, all hand-rolled on
numpy (gradients come from `policy.mlp_backward`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .envsim import EnvSpec
from .errors import NumericInputError, ParameterShapeError, TrainingDivergedError
from .policy import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    PolicyParams,
    PolicySpec,
    entropy,
    grads_to_vector,
    init_policy,
    mlp_backward,
    mlp_forward,
    params_to_vector,
    value,
    vector_to_params,
)
from .randdist import Phi
from .seeding import TAG_POLICY_INIT, TAG_ROLLOUT, TAG_SHUFFLE, rng_from, seed_key

LN_2PI = math.log(2.0 * math.pi)
ADV_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    epochs_per_update: int = 10
    minibatches: int = 4
    learning_rate: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    steps_per_update: int = 2048
    total_updates: int = 150
    advantage_normalization: bool = True

    def validate(self) -> None:
        if not (0.0 < self.gamma <= 1.0):
            raise NumericInputError(f"gamma must be in (0, 1], got {self.gamma}")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise NumericInputError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.clip_ratio <= 0.0:
            raise NumericInputError(f"clip_ratio must be > 0, got {self.clip_ratio}")
        if self.epochs_per_update < 1 or self.minibatches < 1:
            raise NumericInputError("epochs_per_update and minibatches must be >= 1")
        if self.learning_rate < 0.0 or self.value_coef < 0.0 or self.entropy_coef < 0.0:
            raise NumericInputError("learning_rate/value_coef/entropy_coef must be >= 0")
        if self.steps_per_update < 1 or self.total_updates < 0:
            raise NumericInputError("steps_per_update must be >= 1, total_updates >= 0")
        if self.steps_per_update % self.minibatches != 0:
            raise NumericInputError(
                f"steps_per_update ({self.steps_per_update}) must be divisible by "
                f"minibatches ({self.minibatches})"
            )


@dataclass(frozen=True)
class TrajectoryBatch:
    """Parallel arrays of one on-policy batch; episodes lie back to back."""

    observations: np.ndarray  # (T, state_dim)
    actions: np.ndarray  # (T, act_dim)
    rewards: np.ndarray  # (T,)
    log_probs: np.ndarray  # (T,)
    values: np.ndarray  # (T,)
    dones: np.ndarray  # (T,) bool
    episode_index: np.ndarray  # (T,) which sampled environment produced each step
    episode_params: np.ndarray  # (n_episodes, param_dim)
    bootstrap_value: float  # value of the state after step T-1 (0 if that episode ended)
    final_done: bool


def collect_rollouts(policy: PolicyParams, phi: Phi, spec: EnvSpec, cfg: PpoConfig,
                     rng, backend: str | None = None) -> TrajectoryBatch:
    """Collect exactly steps_per_update transitions, re-sampling the
    environment parameters from `phi` at every episode start.

    Noise is pre-drawn in a fixed order (episode parameter draws, reset
    perturbations, action noise), so both rollout backends consume the
    generator identically.
    """
    if phi.dim != spec.param_dim:
        raise ParameterShapeError(
            f"phi has {phi.dim} dims but {spec.env_id} has {spec.param_dim} parameters"
        )
    rng = rng_from(rng)
    steps = cfg.steps_per_update
    episodes_cap = steps + 1
    param_z = rng.standard_normal((episodes_cap, spec.param_dim))
    reset_u = rng.uniform(-1.0, 1.0, (episodes_cap, spec.state_dim))
    action_z = rng.standard_normal((steps, spec.action_dim))

    raw = _backend.collect_steps(
        spec, policy, phi.mean, phi.sigma(), param_z, reset_u, action_z, backend=backend
    )
    bootstrap = 0.0 if raw["final_done"] else value(policy, raw["final_obs"])
    return TrajectoryBatch(
        observations=raw["observations"],
        actions=raw["actions"],
        rewards=raw["rewards"],
        log_probs=raw["log_probs"],
        values=raw["values"],
        dones=raw["dones"].astype(bool),
        episode_index=raw["episode_index"],
        episode_params=raw["episode_params"][: raw["n_episodes"]],
        bootstrap_value=float(bootstrap),
        final_done=raw["final_done"],
    )


def completed_episode_returns(batch: TrajectoryBatch) -> np.ndarray:
    """Undiscounted returns of the episodes that finished inside the batch."""
    returns = []
    total = 0.0
    for reward, done in zip(batch.rewards, batch.dones):
        total += reward
        if done:
            returns.append(total)
            total = 0.0
    return np.asarray(returns)


def compute_gae(batch: TrajectoryBatch, gamma: float, lam: float,
                bootstrap_value: float):
    """Generalized advantage estimation, truncated at episode ends.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)
    A_t = sum_{l>=0} (gamma * lam)^l * delta_{t+l}   (within the episode)
    Returns (advantages, returns) with returns = advantages + values.
    """
    rewards = batch.rewards
    values = batch.values
    not_done = 1.0 - batch.dones.astype(np.float64)
    steps = rewards.shape[0]
    advantages = np.empty(steps)
    last_adv = 0.0
    next_value = bootstrap_value
    for t in range(steps - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * not_done[t] - values[t]
        last_adv = delta + gamma * lam * not_done[t] * last_adv
        advantages[t] = last_adv
        next_value = values[t]
    return advantages, advantages + values


class AdamState:
    """Adaptive-moment optimizer over a flat parameter vector."""

    def __init__(self, n: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(n)
        self.v = np.zeros(n)

    def step(self, vec: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return vec - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def surrogate_loss_and_grads(params: PolicyParams, obs, actions, old_logp, adv, ret,
                             cfg: PpoConfig):
    """Clipped-surrogate loss (to minimize) and its gradient vector.

    loss = -E[min(rho*A, clip(rho, 1-eps, 1+eps)*A)]
           + value_coef * E[(V - R)^2] - entropy_coef * H
    """
    mean, mean_acts = mlp_forward(params.layers, obs)
    v_out, v_acts = mlp_forward(params.value_layers, obs)
    sigma = np.exp(params.log_std)
    act_dim = params.log_std.shape[0]
    u = (actions - mean) / sigma
    logp = -0.5 * np.sum(u * u, axis=1) - np.sum(params.log_std) - 0.5 * act_dim * LN_2PI
    ratio = np.exp(logp - old_logp)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * adv
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    v_err = v_out[:, 0] - ret
    value_loss = np.mean(v_err * v_err)
    ent = entropy(params)
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * ent

    batch_size = obs.shape[0]
    # Gradient flows through rho only where the unclipped term attains the min
    # (ties included, which covers the interior of the clip region).
    d_logp = np.where(surr1 <= surr2, -adv * ratio / batch_size, 0.0)
    d_mean = d_logp[:, None] * (u / sigma)
    d_log_std = (d_logp[:, None] * (u * u - 1.0)).sum(axis=0) - cfg.entropy_coef
    d_v = (2.0 * cfg.value_coef / batch_size) * v_err

    mean_grads = mlp_backward(params.layers, mean_acts, d_mean)
    value_grads = mlp_backward(params.value_layers, v_acts, d_v[:, None])
    grad = grads_to_vector(mean_grads, d_log_std, value_grads)
    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(ent),
        "mean_ratio": float(np.mean(ratio)),
        "clip_fraction": float(np.mean(surr1 > surr2)),
    }
    return float(loss), grad, stats


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    std = float(np.std(adv))
    return (adv - np.mean(adv)) / max(std, ADV_STD_FLOOR)


def _log_std_slice(params: PolicyParams) -> slice:
    offset = sum(w.size + b.size for w, b in params.layers)
    return slice(offset, offset + params.log_std.shape[0])


def ppo_update(policy: PolicyParams, batch: TrajectoryBatch, advantages, returns, cfg: PpoConfig,
               rng, optimizer: AdamState | None = None, update_index: int = 0) -> PolicyParams:
    """One policy-improvement phase: epochs_per_update passes over shuffled
    minibatches. Raises TrainingDivergedError on a non-finite loss."""
    cfg.validate()
    rng = rng_from(rng)
    steps = batch.observations.shape[0]
    if not (len(advantages) == len(returns) == steps):
        raise NumericInputError("advantages/returns must match the batch length")
    adv = np.asarray(advantages, dtype=np.float64)
    if cfg.advantage_normalization:
        adv = normalize_advantages(adv)
    ret = np.asarray(returns, dtype=np.float64)

    vec = params_to_vector(policy)
    params = vector_to_params(vec, policy)
    opt = optimizer if optimizer is not None else AdamState(vec.shape[0], cfg.learning_rate)
    ls_slice = _log_std_slice(policy)
    mb_size = steps // cfg.minibatches

    for epoch in range(cfg.epochs_per_update):
        perm = rng.permutation(steps)
        for mb in range(cfg.minibatches):
            idx = perm[mb * mb_size:(mb + 1) * mb_size]
            loss, grad, _ = surrogate_loss_and_grads(
                params, batch.observations[idx], batch.actions[idx],
                batch.log_probs[idx], adv[idx], ret[idx], cfg,
            )
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at update {update_index}, epoch {epoch}, minibatch {mb}",
                    update_index=update_index,
                )
            vec = opt.step(vec, grad)
            vec[ls_slice] = np.clip(vec[ls_slice], LOG_STD_MIN, LOG_STD_MAX)
            params = vector_to_params(vec, policy)
    return params


def train_inner(phi: Phi, spec: EnvSpec, cfg: PpoConfig, seed,
                policy_spec: PolicySpec | None = None, update_callback=None,
                backend: str | None = None) -> PolicyParams:
    """Train a fresh policy under the randomization distribution `phi`.

    Deterministic given (phi, spec, cfg, seed). `update_callback(k, stats)`
    receives per-update statistics (mean return of episodes completed in
    the batch, episode count, loss diagnostics of the last minibatch).
    """
    cfg.validate()
    base = seed_key(seed)
    pspec = policy_spec or PolicySpec(obs_dim=spec.state_dim, act_dim=spec.action_dim)
    params = init_policy(pspec, base + (TAG_POLICY_INIT,))
    optimizer = AdamState(params_to_vector(params).shape[0], cfg.learning_rate)

    for k in range(cfg.total_updates):
        batch = collect_rollouts(
            params, phi, spec, cfg, base + (TAG_ROLLOUT, k), backend=backend
        )
        advantages, returns = compute_gae(batch, cfg.gamma, cfg.gae_lambda, batch.bootstrap_value)
        params = ppo_update(
            params, batch, advantages, returns, cfg, base + (TAG_SHUFFLE, k),
            optimizer=optimizer, update_index=k,
        )
        if update_callback is not None:
            ep_returns = completed_episode_returns(batch)
            update_callback(k, {
                "update": k,
                "mean_episode_return": float(np.mean(ep_returns)) if ep_returns.size else None,
                "episodes": int(batch.episode_params.shape[0]),
            })
    return params
