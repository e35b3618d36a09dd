"""Parameterized dynamical-system environments.

Two self-contained environments whose transition functions depend on a
vector of physical constants (masses, damping coefficients, gravity):

* ``pointmass`` — a damped point mass pushed along an inclined rail toward
  a target position. State (position, velocity), 3 parameters.
* ``cartpole`` — cart-pole balancing with viscous damping on the cart and
  on the pole joint. State (x, x_dot, theta, theta_dot), 5 parameters.

The same parameter vector type instantiates both the randomized training
simulator and the held-out "real" environment (a fixed multiplicative gap
on the nominal constants). Integration is semi-implicit Euler. `step` is a
pure value transformer: it consumes a state and returns a new one, so many
episodes can run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EpisodeFinishedError, NumericInputError, ParameterShapeError
from .seeding import rng_from

ENV_IDS = ("pointmass", "cartpole")
ENV_INDEX = {"pointmass": 0, "cartpole": 1}

# Cartpole geometry and failure thresholds (not randomized).
POLE_HALF_LENGTH = 0.5  # m, pivot to center of mass
THETA_LIMIT = 0.2  # rad
X_LIMIT = 2.4  # m

# Pointmass task constants.
POINTMASS_TARGET = 1.0  # m
ACTION_COST = 1e-3


@dataclass(frozen=True)
class MdpParams:
    """One concrete environment's physical constants.

    pointmass: (mass [kg], damping [N*s/m], gravity [m/s^2])
    cartpole:  (cart mass [kg], pole mass [kg], cart damping [N*s/m],
                pole joint damping [N*m*s/rad], gravity [m/s^2])
    """

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))


@dataclass(frozen=True)
class EnvSpec:
    env_id: str
    state_dim: int
    action_dim: int
    param_names: tuple[str, ...]
    nominal_params: MdpParams
    horizon: int
    action_low: np.ndarray
    action_high: np.ndarray
    dt: float
    param_low: np.ndarray  # validity box for sampled/derived parameters
    param_high: np.ndarray
    incline_angle: float = 0.0  # pointmass rail angle, rad
    reset_noise_scale: float = 0.05

    @property
    def param_dim(self) -> int:
        return len(self.param_names)


@dataclass(frozen=True)
class EnvState:
    observation: np.ndarray
    step_count: int = 0
    done: bool = False


def make_spec(env_id: str, *, horizon: int | None = None, incline_angle: float | None = None,
              reset_noise_scale: float = 0.05) -> EnvSpec:
    """Build the canonical spec for one of the two environments."""
    if env_id == "pointmass":
        return EnvSpec(
            env_id="pointmass",
            state_dim=2,
            action_dim=1,
            param_names=("mass[kg]", "damping[N.s/m]", "gravity[m/s^2]"),
            nominal_params=MdpParams(np.array([1.0, 0.5, 9.8])),
            horizon=200 if horizon is None else horizon,
            action_low=np.array([-2.0]),
            action_high=np.array([2.0]),
            dt=0.02,
            param_low=np.array([0.05, 0.0, 0.1]),
            param_high=np.array([np.inf, np.inf, 30.0]),
            incline_angle=0.1 if incline_angle is None else incline_angle,
            reset_noise_scale=reset_noise_scale,
        )
    if env_id == "cartpole":
        return EnvSpec(
            env_id="cartpole",
            state_dim=4,
            action_dim=1,
            param_names=(
                "cart_mass[kg]",
                "pole_mass[kg]",
                "cart_damping[N.s/m]",
                "pole_damping[N.m.s/rad]",
                "gravity[m/s^2]",
            ),
            nominal_params=MdpParams(np.array([1.0, 0.1, 0.1, 0.01, 9.8])),
            horizon=500 if horizon is None else horizon,
            action_low=np.array([-10.0]),
            action_high=np.array([10.0]),
            dt=0.02,
            param_low=np.array([0.05, 0.05, 0.0, 0.0, 0.1]),
            param_high=np.array([np.inf, np.inf, np.inf, np.inf, 30.0]),
            reset_noise_scale=reset_noise_scale,
        )
    raise ValueError(f"unknown env_id {env_id!r}, expected one of {ENV_IDS}")


def validate_params(spec: EnvSpec, params: MdpParams) -> None:
    if params.values.shape != (spec.param_dim,):
        raise ParameterShapeError(
            f"{spec.env_id} expects {spec.param_dim} parameters, got shape {params.values.shape}"
        )
    if not np.all(np.isfinite(params.values)):
        raise ParameterShapeError(f"non-finite parameter values: {params.values}")


def clamp_params(spec: EnvSpec, values: np.ndarray) -> np.ndarray:
    """Clamp raw parameter values into the environment validity box."""
    return np.clip(values, spec.param_low, spec.param_high)


def make_real_params(spec: EnvSpec, multipliers) -> MdpParams:
    """Fixed "real" parameterization: nominal constants times a gap vector."""
    mult = np.asarray(multipliers, dtype=np.float64)
    if mult.shape != (spec.param_dim,):
        raise ParameterShapeError(
            f"{spec.env_id} expects {spec.param_dim} multipliers, got shape {mult.shape}"
        )
    if not np.all(mult > 0.0):
        raise ParameterShapeError(f"multipliers must be strictly positive, got {mult}")
    return MdpParams(clamp_params(spec, spec.nominal_params.values * mult))


def initial_state_from_noise(spec: EnvSpec, unit_noise: np.ndarray) -> EnvState:
    """Initial state from unit noise in [-1, 1]^state_dim (shared with rollout kernels)."""
    obs = np.asarray(unit_noise, dtype=np.float64) * spec.reset_noise_scale
    return EnvState(observation=obs, step_count=0, done=False)


def reset(spec: EnvSpec, params: MdpParams, seed) -> EnvState:
    """Start an episode at a small uniform perturbation of the rest state."""
    validate_params(spec, params)
    rng = rng_from(seed)
    return initial_state_from_noise(spec, rng.uniform(-1.0, 1.0, spec.state_dim))


# ---------------------------------------------------------------------------
# Scalar dynamics, single source of truth for the python path.
# The compiled kernels transcribe these formulas; keep operation order stable.
# ---------------------------------------------------------------------------

def pointmass_step(x, v, u, mass, damping, gravity, dt, incline):
    """One semi-implicit Euler step of the damped point mass on an incline."""
    acc = (u - damping * v - mass * gravity * math.sin(incline)) / mass
    v2 = v + dt * acc
    x2 = x + dt * v2
    reward = -(x2 - POINTMASS_TARGET) ** 2 - ACTION_COST * u * u
    return x2, v2, reward


def cartpole_step(x, xd, th, thd, u, cart_mass, pole_mass, cart_damping,
                  pole_damping, gravity, dt):
    """One semi-implicit Euler step of the damped cart-pole.

    Standard cart-pole equations of motion with viscous damping forces
    -cart_damping*xd on the cart and -pole_damping*thd on the pole joint.
    Returns the new state plus (reward, failed); reward is granted for a
    step whose post-integration state satisfies the balance constraints.
    """
    total_mass = cart_mass + pole_mass
    pml = pole_mass * POLE_HALF_LENGTH
    sin_th = math.sin(th)
    cos_th = math.cos(th)
    temp = (u + pml * thd * thd * sin_th - cart_damping * xd) / total_mass
    th_acc = (gravity * sin_th - cos_th * temp - pole_damping * thd / pml) / (
        POLE_HALF_LENGTH * (4.0 / 3.0 - pole_mass * cos_th * cos_th / total_mass)
    )
    x_acc = temp - pml * th_acc * cos_th / total_mass
    xd2 = xd + dt * x_acc
    x2 = x + dt * xd2
    thd2 = thd + dt * th_acc
    th2 = th + dt * thd2
    failed = abs(th2) >= THETA_LIMIT or abs(x2) >= X_LIMIT
    reward = 0.0 if failed else 1.0
    return x2, xd2, th2, thd2, reward, failed


def step_raw(env_id: str, obs: np.ndarray, u: float, params: np.ndarray, dt: float,
             incline: float):
    """Dispatch one dynamics step on raw arrays; returns (new_obs, reward, failed)."""
    if env_id == "pointmass":
        x2, v2, reward = pointmass_step(
            obs[0], obs[1], u, params[0], params[1], params[2], dt, incline
        )
        return np.array([x2, v2]), reward, False
    x2, xd2, th2, thd2, reward, failed = cartpole_step(
        obs[0], obs[1], obs[2], obs[3], u,
        params[0], params[1], params[2], params[3], params[4], dt,
    )
    return np.array([x2, xd2, th2, thd2]), reward, failed


def step(spec: EnvSpec, state: EnvState, action, params: MdpParams):
    """Advance one step. Returns (new_state, reward, done).

    The action is clipped to the actuation bounds before integration; the
    episode ends on a failure condition or when the horizon is reached.
    """
    if state.done:
        raise EpisodeFinishedError(f"{spec.env_id} episode already finished")
    validate_params(spec, params)
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    if a.shape != (spec.action_dim,):
        raise NumericInputError(f"expected action of dim {spec.action_dim}, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericInputError(f"non-finite action: {a}")
    u = float(np.clip(a, spec.action_low, spec.action_high)[0])

    obs, reward, failed = step_raw(
        spec.env_id, state.observation, u, params.values, spec.dt, spec.incline_angle
    )
    step_count = state.step_count + 1
    done = failed or step_count >= spec.horizon
    return replace(state, observation=obs, step_count=step_count, done=done), reward, done
