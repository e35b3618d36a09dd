"""Pure-numpy rollout loops, the fallback for the compiled kernels.

Both backends consume the same pre-drawn noise arrays in the same order
(episode parameter draws, reset perturbations, action noise), so a rollout
is a deterministic function of its inputs on either path. The compiled
kernels in ``_kernels.pyx`` transcribe exactly these loops.
"""

from __future__ import annotations

import math

import numpy as np

from .envsim import ENV_IDS, step_raw

LN_2PI = math.log(2.0 * math.pi)


def _forward(weights, x):
    """MLP forward over [W0, b0, W1, b1, ...]; tanh on all but the last layer."""
    h = x
    n = len(weights) // 2
    for i in range(n):
        z = h @ weights[2 * i] + weights[2 * i + 1]
        h = z if i == n - 1 else np.tanh(z)
    return h


def collect_steps(env_idx, dt, incline, reset_scale, horizon,
                  act_low, act_high, mean_weights, log_std, value_weights,
                  phi_mean, phi_sigma, p_low, p_high,
                  param_z, reset_u, action_z,
                  obs_out, act_out, rew_out, logp_out, val_out,
                  done_out, ep_idx_out, ep_params_out, final_obs):
    """Fill one on-policy batch of exactly T transitions; see ppo.collect_rollouts."""
    env_id = ENV_IDS[env_idx]
    steps = action_z.shape[0]
    sigma = np.exp(log_std)
    log_std_sum = float(np.sum(log_std))
    act_dim = log_std.shape[0]

    e = 0
    params = np.clip(phi_mean + phi_sigma * param_z[e], p_low, p_high)
    ep_params_out[e] = params
    obs = reset_u[e] * reset_scale
    ep_steps = 0
    final_done = False

    for t in range(steps):
        obs_out[t] = obs
        mean = _forward(mean_weights, obs)
        val = _forward(value_weights, obs)
        action = mean + sigma * action_z[t]
        u_unit = (action - mean) / sigma
        act_out[t] = action
        logp_out[t] = -0.5 * np.sum(u_unit * u_unit) - log_std_sum - 0.5 * act_dim * LN_2PI
        val_out[t] = val[0]

        u = min(max(float(action[0]), float(act_low[0])), float(act_high[0]))
        obs, reward, failed = step_raw(env_id, obs, u, params, dt, incline)
        ep_steps += 1
        done = failed or ep_steps >= horizon
        rew_out[t] = reward
        done_out[t] = done
        ep_idx_out[t] = e

        if done:
            if t + 1 < steps:
                e += 1
                params = np.clip(phi_mean + phi_sigma * param_z[e], p_low, p_high)
                ep_params_out[e] = params
                obs = reset_u[e] * reset_scale
                ep_steps = 0
            else:
                final_done = True

    final_obs[:] = obs
    return e + 1, final_done


def eval_episodes(env_idx, dt, incline, reset_scale, horizon,
                  act_low, act_high, mean_weights, log_std,
                  param_values, reset_u, action_z, gamma, returns_out):
    """Roll fixed-parameter episodes and record their (discounted) returns."""
    env_id = ENV_IDS[env_idx]
    episodes = reset_u.shape[0]
    sigma = np.exp(log_std)

    for e in range(episodes):
        obs = reset_u[e] * reset_scale
        total = 0.0
        disc = 1.0
        for t in range(horizon):
            mean = _forward(mean_weights, obs)
            action = mean + sigma * action_z[e, t]
            u = min(max(float(action[0]), float(act_low[0])), float(act_high[0]))
            obs, reward, failed = step_raw(env_id, obs, u, param_values, dt, incline)
            total += disc * reward
            disc *= gamma
            if failed:
                break
        returns_out[e] = total
