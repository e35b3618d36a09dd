"""The randomization distribution over environment parameters.

A diagonal Gaussian with mean in absolute parameter units and per-dimension
spread stored as log-std (so outer optimizers work in an unconstrained
space; variance = exp(2 * log_std)). Initialization puts the mean at the
nominal simulator constants with unit variance on every dimension; an
optional relative mode rescales the initial spread to one nominal unit per
dimension instead.

Draws that land outside the environment validity box are clamped to it;
`log_density` reports the density of the unclamped Gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .envsim import EnvSpec, MdpParams, clamp_params
from .errors import ProtocolError
from .seeding import rng_from

LOG_STD_MIN = -18.0
LOG_STD_MAX = 5.0
LN_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Phi:
    """Mean and log-std of the diagonal Gaussian over parameter vectors."""

    mean: np.ndarray
    log_std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        log_std = np.asarray(self.log_std, dtype=np.float64)
        if mean.shape != log_std.shape or mean.ndim != 1:
            raise ProtocolError(
                f"phi mean/log_std must be equal-length vectors, got {mean.shape} and {log_std.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(log_std))):
            raise ProtocolError("phi entries must be finite")
        if np.any(log_std < LOG_STD_MIN) or np.any(log_std > LOG_STD_MAX):
            raise ProtocolError(
                f"log_std must lie in [{LOG_STD_MIN}, {LOG_STD_MAX}], got {log_std}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_std", log_std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sigma(self) -> np.ndarray:
        return np.exp(self.log_std)


def init_phi(nominal: MdpParams, relative_scale: bool = False) -> Phi:
    """Initial distribution: mean at the nominal constants, unit variance.

    With relative_scale the spread is one *nominal unit* per dimension
    (sigma_i = |nominal_i|) instead of one absolute unit.
    """
    mean = np.array(nominal.values, dtype=np.float64)
    if relative_scale:
        with np.errstate(divide="ignore"):
            log_std = np.log(np.abs(mean))
        log_std = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    else:
        log_std = np.zeros_like(mean)
    return Phi(mean=mean, log_std=log_std)


def sample_values(phi: Phi, z: np.ndarray, low=None, high=None) -> np.ndarray:
    """Reparameterized draw mean + sigma*z, clamped into [low, high] if given.

    Shared by `sample_mdp` and the rollout backends so every path consumes
    noise identically.
    """
    values = phi.mean + phi.sigma() * z
    if low is not None:
        values = np.clip(values, low, high)
    return values


def sample_mdp(phi: Phi, rng, spec: EnvSpec | None = None) -> MdpParams:
    """Draw one parameter vector from the distribution.

    When `spec` is given the draw is clamped into its validity box, which
    keeps non-physical samples (e.g. negative masses) usable.
    """
    rng = rng_from(rng)
    z = rng.standard_normal(phi.dim)
    if spec is not None:
        values = sample_values(phi, z, spec.param_low, spec.param_high)
        return MdpParams(clamp_params(spec, values))
    return MdpParams(sample_values(phi, z))


def log_density(phi: Phi, m: MdpParams) -> float:
    """Exact log-density of the unclamped Gaussian at m."""
    x = np.asarray(m.values if isinstance(m, MdpParams) else m, dtype=np.float64)
    if x.shape != phi.mean.shape:
        raise ProtocolError(f"dimension mismatch: phi is {phi.mean.shape}, m is {x.shape}")
    u = (x - phi.mean) / phi.sigma()
    return float(-0.5 * np.sum(u * u) - np.sum(phi.log_std) - 0.5 * phi.dim * LN_2PI)


def phi_to_vector(phi: Phi) -> np.ndarray:
    """Flatten to the outer optimizer's decision vector (mean then log_std)."""
    return np.concatenate([phi.mean, phi.log_std])


def phi_from_vector(vec: np.ndarray) -> Phi:
    """Rebuild a Phi from a flat vector, clamping the log-std half into bounds."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] % 2 != 0:
        raise ProtocolError(f"phi vector must be flat with even length, got shape {vec.shape}")
    d = vec.shape[0] // 2
    return Phi(mean=vec[:d], log_std=np.clip(vec[d:], LOG_STD_MIN, LOG_STD_MAX))
