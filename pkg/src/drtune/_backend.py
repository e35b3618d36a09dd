"""Backend selection: compiled rollout kernels with a pure-python fallback.

The extension is used automatically when it imported cleanly and the policy
has exactly two hidden layers (the shape the kernels are specialized for).
Set DRTUNE_BACKEND=python or DRTUNE_BACKEND=compiled to force a choice;
forcing `compiled` raises if the extension is unavailable.
"""

from __future__ import annotations

import os

import numpy as np

from . import _rollout_py
from .envsim import ENV_INDEX, EnvSpec
from .policy import PolicyParams

try:
    from . import _kernels
except ImportError:
    _kernels = None

_FORCE = os.environ.get("DRTUNE_BACKEND", "").strip().lower()
if _FORCE not in ("", "python", "compiled"):
    raise RuntimeError(f"DRTUNE_BACKEND must be 'python' or 'compiled', got {_FORCE!r}")
if _FORCE == "compiled" and _kernels is None:
    raise RuntimeError("DRTUNE_BACKEND=compiled but the _kernels extension is not importable")


def have_compiled() -> bool:
    return _kernels is not None


def active_backend() -> str:
    """Name of the backend rollouts will use for a default (64, 64) policy."""
    if _FORCE == "python" or _kernels is None:
        return "python"
    return "compiled"


def _flat_net(layers) -> list:
    out = []
    for w, b in layers:
        out.append(np.ascontiguousarray(w, dtype=np.float64))
        out.append(np.ascontiguousarray(b, dtype=np.float64))
    return out


def _impl_for(params: PolicyParams, force: str | None = None):
    choice = force or _FORCE or ("compiled" if _kernels is not None else "python")
    if choice == "compiled" and _kernels is not None and len(params.layers) == 3:
        return _kernels
    return _rollout_py


def collect_steps(spec: EnvSpec, params: PolicyParams, phi_mean, phi_sigma,
                  param_z, reset_u, action_z, backend: str | None = None):
    """Run the fused rollout loop; returns a dict of filled arrays plus counters."""
    steps = action_z.shape[0]
    episodes_cap = param_z.shape[0]
    out = {
        "observations": np.empty((steps, spec.state_dim)),
        "actions": np.empty((steps, spec.action_dim)),
        "rewards": np.empty(steps),
        "log_probs": np.empty(steps),
        "values": np.empty(steps),
        "dones": np.zeros(steps, dtype=np.uint8),
        "episode_index": np.zeros(steps, dtype=np.int32),
        "episode_params": np.zeros((episodes_cap, spec.param_dim)),
        "final_obs": np.empty(spec.state_dim),
    }
    impl = _impl_for(params, backend)
    n_episodes, final_done = impl.collect_steps(
        ENV_INDEX[spec.env_id], spec.dt, spec.incline_angle, spec.reset_noise_scale,
        spec.horizon, spec.action_low, spec.action_high,
        _flat_net(params.layers), np.ascontiguousarray(params.log_std, dtype=np.float64),
        _flat_net(params.value_layers),
        np.ascontiguousarray(phi_mean, dtype=np.float64),
        np.ascontiguousarray(phi_sigma, dtype=np.float64),
        spec.param_low, spec.param_high,
        param_z, reset_u, action_z,
        out["observations"], out["actions"], out["rewards"], out["log_probs"],
        out["values"], out["dones"], out["episode_index"], out["episode_params"],
        out["final_obs"],
    )
    out["n_episodes"] = int(n_episodes)
    out["final_done"] = bool(final_done)
    return out


def eval_episodes(spec: EnvSpec, params: PolicyParams, param_values,
                  reset_u, action_z, gamma: float, backend: str | None = None) -> np.ndarray:
    """Per-episode (discounted) returns of the policy under fixed parameters."""
    returns = np.empty(reset_u.shape[0])
    impl = _impl_for(params, backend)
    impl.eval_episodes(
        ENV_INDEX[spec.env_id], spec.dt, spec.incline_angle, spec.reset_noise_scale,
        spec.horizon, spec.action_low, spec.action_high,
        _flat_net(params.layers), np.ascontiguousarray(params.log_std, dtype=np.float64),
        np.ascontiguousarray(param_values, dtype=np.float64),
        reset_u, action_z, gamma, returns,
    )
    return returns
