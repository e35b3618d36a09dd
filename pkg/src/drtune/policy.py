"""Gaussian MLP policy and value function with hand-rolled gradients.

The policy is a tanh MLP producing the action mean, plus a state-independent
per-dimension log-std; the value function is a separate MLP of the same
architecture with scalar output. Networks are tiny, so forward and backward
passes are written directly against numpy — no framework.

Parameters are immutable values: forward passes are pure and updates build
new parameter objects, so concurrent rollouts never share mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericInputError
from .seeding import rng_from

LOG_STD_INIT = 0.0
LOG_STD_MIN = -10.0
LOG_STD_MAX = 2.0
LN_2PI = math.log(2.0 * math.pi)
FINAL_LAYER_SCALE = 0.01


@dataclass(frozen=True)
class PolicySpec:
    obs_dim: int
    act_dim: int
    hidden_sizes: tuple[int, ...] = (64, 64)
    activation: str = "tanh"

    def __post_init__(self):
        if self.obs_dim < 1 or self.act_dim < 1:
            raise NumericInputError("obs_dim and act_dim must be >= 1")
        if not self.hidden_sizes:
            raise NumericInputError("hidden_sizes must be non-empty")
        if self.activation != "tanh":
            raise NumericInputError(f"unsupported activation {self.activation!r}")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))


@dataclass(frozen=True)
class PolicyParams:
    """Weights of the mean network, the log-std vector, and the value network.

    Each network is a list of (W, b) pairs; W has shape (fan_in, fan_out).
    """

    layers: tuple
    log_std: np.ndarray
    value_layers: tuple


def _layer_dims(spec: PolicySpec, out_dim: int) -> list[tuple[int, int]]:
    sizes = [spec.obs_dim, *spec.hidden_sizes, out_dim]
    return list(zip(sizes[:-1], sizes[1:]))


def _init_net(rng, dims, final_scale=1.0):
    layers = []
    for i, (nin, nout) in enumerate(dims):
        limit = 1.0 / math.sqrt(nin)
        w = rng.uniform(-limit, limit, size=(nin, nout))
        b = rng.uniform(-limit, limit, size=nout)
        if i == len(dims) - 1 and final_scale != 1.0:
            w = w * final_scale
            b = b * final_scale
        layers.append((w, b))
    return tuple(layers)


def init_policy(spec: PolicySpec, seed) -> PolicyParams:
    """Fan-in-scaled uniform init; the final mean layer is scaled down so the
    initial action distribution is close to N(0, 1)."""
    rng = rng_from(seed)
    layers = _init_net(rng, _layer_dims(spec, spec.act_dim), final_scale=FINAL_LAYER_SCALE)
    value_layers = _init_net(rng, _layer_dims(spec, 1))
    log_std = np.full(spec.act_dim, LOG_STD_INIT)
    return PolicyParams(layers=layers, log_std=log_std, value_layers=value_layers)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def mlp_forward(layers, x: np.ndarray):
    """Forward pass; tanh on all but the last layer.

    Returns (output, activations) where activations[i] is the input to
    layer i (needed by `mlp_backward`).
    """
    h = x
    acts = [x]
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        h = z if i == last else np.tanh(z)
        acts.append(h)
    return h, acts


def mlp_backward(layers, acts, d_out: np.ndarray):
    """Gradients of sum(d_out * output) w.r.t. each (W, b), output order matching layers."""
    grads = [None] * len(layers)
    d = d_out
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        h_in = acts[i]
        grads[i] = (h_in.T @ d, d.sum(axis=0))
        if i > 0:
            d = (d @ w.T) * (1.0 - acts[i] * acts[i])  # acts[i] is tanh output of layer i-1
    return grads


def _check_obs(params: PolicyParams, obs) -> np.ndarray:
    x = np.asarray(obs, dtype=np.float64).reshape(-1)
    expected = params.layers[0][0].shape[0]
    if x.shape != (expected,):
        raise NumericInputError(f"expected observation of dim {expected}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericInputError(f"non-finite observation: {x}")
    return x


def action_mean(params: PolicyParams, obs) -> np.ndarray:
    out, _ = mlp_forward(params.layers, _check_obs(params, obs))
    return out


def value(params: PolicyParams, obs) -> float:
    out, _ = mlp_forward(params.value_layers, _check_obs(params, obs))
    return float(out[0])


def gaussian_log_prob(action: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> float:
    """Diagonal Gaussian log-density; the single formula every caller shares."""
    u = (action - mean) / np.exp(log_std)
    return float(-0.5 * np.sum(u * u) - np.sum(log_std) - 0.5 * action.shape[-1] * LN_2PI)


def act(params: PolicyParams, obs, rng):
    """Sample an (unclipped) action and its exact log-density."""
    x = _check_obs(params, obs)
    mean, _ = mlp_forward(params.layers, x)
    rng = rng_from(rng)
    action = mean + np.exp(params.log_std) * rng.standard_normal(mean.shape[0])
    return action, gaussian_log_prob(action, mean, params.log_std)


def log_prob(params: PolicyParams, obs, action) -> float:
    x = _check_obs(params, obs)
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    if a.shape != params.log_std.shape:
        raise NumericInputError(f"expected action of dim {params.log_std.shape[0]}, got {a.shape}")
    mean, _ = mlp_forward(params.layers, x)
    return gaussian_log_prob(a, mean, params.log_std)


def entropy(params: PolicyParams) -> float:
    """Closed-form entropy: sum_i (log sigma_i + 0.5*ln(2*pi*e))."""
    return float(np.sum(params.log_std) + 0.5 * params.log_std.shape[0] * (1.0 + LN_2PI))


# ---------------------------------------------------------------------------
# Flattening (optimizer state, finite-difference checks, serialization)
# ---------------------------------------------------------------------------

def _net_sizes(layers):
    return [(w.shape, b.shape) for w, b in layers]


def params_to_vector(params: PolicyParams) -> np.ndarray:
    parts = []
    for w, b in params.layers:
        parts.extend([w.ravel(), b.ravel()])
    parts.append(params.log_std.ravel())
    for w, b in params.value_layers:
        parts.extend([w.ravel(), b.ravel()])
    return np.concatenate(parts)


def vector_to_params(vec: np.ndarray, template: PolicyParams) -> PolicyParams:
    idx = 0

    def take(shape):
        nonlocal idx
        n = int(np.prod(shape))
        out = vec[idx:idx + n].reshape(shape)
        idx += n
        return out

    layers = tuple((take(w.shape), take(b.shape)) for w, b in template.layers)
    log_std = take(template.log_std.shape)
    value_layers = tuple((take(w.shape), take(b.shape)) for w, b in template.value_layers)
    if idx != vec.shape[0]:
        raise NumericInputError(f"parameter vector length {vec.shape[0]}, expected {idx}")
    return PolicyParams(layers=layers, log_std=log_std, value_layers=value_layers)


def grads_to_vector(layer_grads, d_log_std, value_grads) -> np.ndarray:
    parts = []
    for dw, db in layer_grads:
        parts.extend([dw.ravel(), db.ravel()])
    parts.append(np.asarray(d_log_std).ravel())
    for dw, db in value_grads:
        parts.extend([dw.ravel(), db.ravel()])
    return np.concatenate(parts)


def clamp_log_std(params: PolicyParams) -> PolicyParams:
    clipped = np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX)
    if clipped is params.log_std or np.array_equal(clipped, params.log_std):
        return params
    return PolicyParams(layers=params.layers, log_std=clipped, value_layers=params.value_layers)


# ---------------------------------------------------------------------------
# Serialization: flat named-array container (.npz) with a version entry
# ---------------------------------------------------------------------------

POLICY_FORMAT_VERSION = 1


def save_policy(path, spec: PolicySpec, params: PolicyParams) -> None:
    arrays = {
        "format_version": np.array(POLICY_FORMAT_VERSION),
        "obs_dim": np.array(spec.obs_dim),
        "act_dim": np.array(spec.act_dim),
        "hidden_sizes": np.array(spec.hidden_sizes, dtype=np.int64),
        "log_std": params.log_std,
    }
    for i, (w, b) in enumerate(params.layers):
        arrays[f"pi_w{i}"] = w
        arrays[f"pi_b{i}"] = b
    for i, (w, b) in enumerate(params.value_layers):
        arrays[f"v_w{i}"] = w
        arrays[f"v_b{i}"] = b
    np.savez(path, **arrays)


def load_policy(path):
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != POLICY_FORMAT_VERSION:
            raise NumericInputError(f"unsupported policy file version {version}")
        spec = PolicySpec(
            obs_dim=int(data["obs_dim"]),
            act_dim=int(data["act_dim"]),
            hidden_sizes=tuple(int(h) for h in data["hidden_sizes"]),
        )
        n_layers = len(spec.hidden_sizes) + 1
        layers = tuple((data[f"pi_w{i}"], data[f"pi_b{i}"]) for i in range(n_layers))
        value_layers = tuple((data[f"v_w{i}"], data[f"v_b{i}"]) for i in range(n_layers))
        params = PolicyParams(layers=layers, log_std=data["log_std"], value_layers=value_layers)
    return spec, params
