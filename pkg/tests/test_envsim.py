import dataclasses
import math

import numpy as np
import pytest

from drtune.envsim import (
    EnvState,
    MdpParams,
    make_real_params,
    make_spec,
    reset,
    step,
)
from drtune.errors import EpisodeFinishedError, NumericInputError, ParameterShapeError


def test_reset_deterministic(cartpole_spec):
    a = reset(cartpole_spec, cartpole_spec.nominal_params, seed=7)
    b = reset(cartpole_spec, cartpole_spec.nominal_params, seed=7)
    assert np.array_equal(a.observation, b.observation)
    assert a.step_count == 0 and not a.done


def test_reset_within_initialization_box(pointmass_spec):
    for seed in range(20):
        state = reset(pointmass_spec, pointmass_spec.nominal_params, seed=seed)
        assert np.all(np.abs(state.observation) <= 0.05)


def test_reset_param_shape_error(cartpole_spec):
    with pytest.raises(ParameterShapeError):
        reset(cartpole_spec, MdpParams(np.array([1.0, 0.5, 9.8])), seed=0)


def test_pointmass_single_step_matches_hand_integration(pointmass_spec):
    # Semi-implicit Euler by hand: m=1, c=0, g=9.8, incline 0.1, u=1, dt=0.02.
    params = MdpParams(np.array([1.0, 0.0, 9.8]))
    state = EnvState(observation=np.array([0.0, 0.0]))
    acc = (1.0 - 0.0 - 1.0 * 9.8 * math.sin(0.1)) / 1.0
    v_expect = 0.02 * acc
    x_expect = 0.02 * v_expect
    new_state, reward, done = step(pointmass_spec, state, np.array([1.0]), params)
    assert new_state.observation[1] == pytest.approx(v_expect, abs=1e-15)
    assert new_state.observation[0] == pytest.approx(x_expect, abs=1e-15)
    assert v_expect == pytest.approx(4.33e-4, rel=2e-3)
    assert reward == pytest.approx(-((x_expect - 1.0) ** 2) - 1e-3, abs=1e-12)
    assert not done


def test_pointmass_rest_is_fixed_point_on_flat_rail():
    spec = make_spec("pointmass", incline_angle=0.0)
    state = EnvState(observation=np.array([0.0, 0.0]))
    new_state, _, _ = step(spec, state, np.array([0.0]), spec.nominal_params)
    assert np.array_equal(new_state.observation, np.array([0.0, 0.0]))


def test_cartpole_reward_follows_post_integration_state(cartpole_spec):
    params = cartpole_spec.nominal_params
    # Tilted fast enough that one step crosses the angle limit.
    failing = EnvState(observation=np.array([0.0, 0.0, 0.19, 2.0]))
    new_state, reward, done = step(cartpole_spec, failing, np.array([0.0]), params)
    assert abs(new_state.observation[2]) >= 0.2
    assert done and reward == 0.0

    upright = EnvState(observation=np.array([0.0, 0.0, 0.01, 0.0]))
    _, reward, done = step(cartpole_spec, upright, np.array([0.0]), params)
    assert reward == 1.0 and not done


def test_step_after_done_raises(cartpole_spec):
    state = EnvState(observation=np.zeros(4), step_count=5, done=True)
    with pytest.raises(EpisodeFinishedError):
        step(cartpole_spec, state, np.array([0.0]), cartpole_spec.nominal_params)


def test_step_rejects_nonfinite_action(cartpole_spec):
    state = reset(cartpole_spec, cartpole_spec.nominal_params, seed=0)
    with pytest.raises(NumericInputError):
        step(cartpole_spec, state, np.array([np.nan]), cartpole_spec.nominal_params)


def test_action_clipping_inside_step(pointmass_spec):
    state = EnvState(observation=np.array([0.0, 0.0]))
    big, r_big, _ = step(pointmass_spec, state, np.array([100.0]), pointmass_spec.nominal_params)
    at_limit, r_lim, _ = step(pointmass_spec, state, pointmass_spec.action_high,
                              pointmass_spec.nominal_params)
    assert np.array_equal(big.observation, at_limit.observation)
    assert r_big == r_lim  # action cost uses the clipped force


def test_make_real_params_identity(cartpole_spec):
    real = make_real_params(cartpole_spec, np.ones(5))
    assert np.array_equal(real.values, cartpole_spec.nominal_params.values)


def test_make_real_params_elementwise_product(cartpole_spec):
    mult = np.array([1.3, 1.3, 1.5, 1.5, 1.1])
    expected = cartpole_spec.nominal_params.values * mult  # independent product oracle
    real = make_real_params(cartpole_spec, mult)
    assert np.allclose(real.values, expected, rtol=0, atol=0)


def test_make_real_params_clamps_to_validity_box(cartpole_spec):
    mult = np.array([1e-9, 1.0, 1.0, 1.0, 1.0])
    real = make_real_params(cartpole_spec, mult)
    assert real.values[0] == 0.05


def test_make_real_params_rejects_bad_multipliers(cartpole_spec):
    with pytest.raises(ParameterShapeError):
        make_real_params(cartpole_spec, np.ones(3))
    with pytest.raises(ParameterShapeError):
        make_real_params(cartpole_spec, np.array([1.0, -1.0, 1.0, 1.0, 1.0]))


def test_trajectory_determinism(cartpole_spec):
    def run():
        rng = np.random.default_rng(3)
        state = reset(cartpole_spec, cartpole_spec.nominal_params, seed=11)
        trajectory = []
        for _ in range(60):
            action = rng.normal(size=1)
            state, reward, done = step(cartpole_spec, state, action, cartpole_spec.nominal_params)
            trajectory.append((state.observation.copy(), reward))
            if done:
                break
        return trajectory

    t1, t2 = run(), run()
    assert len(t1) == len(t2)
    for (o1, r1), (o2, r2) in zip(t1, t2):
        assert np.array_equal(o1, o2) and r1 == r2


@pytest.mark.parametrize("v0", [-1.0, 0.3, 2.0])
def test_pointmass_energy_conservation_flat_undamped(v0):
    # No damping, no actuation, flat rail: velocity is exactly conserved
    # under semi-implicit Euler.
    spec = make_spec("pointmass", incline_angle=0.0)
    params = MdpParams(np.array([1.3, 0.0, 9.8]))
    state = EnvState(observation=np.array([0.0, v0]))
    for _ in range(50):
        state, _, done = step(spec, state, np.array([0.0]), params)
        assert state.observation[1] == v0
        if done:
            break


def test_cartpole_gravity_monotonically_shortens_time_to_failure(cartpole_spec):
    def time_to_failure(gravity):
        params = MdpParams(np.array([1.0, 0.1, 0.1, 0.01, gravity]))
        state = reset(cartpole_spec, params, seed=5)  # same start for every gravity
        for t in range(cartpole_spec.horizon):
            state, _, done = step(cartpole_spec, state, np.array([0.0]), params)
            if done:
                return t + 1
        return cartpole_spec.horizon

    times = [time_to_failure(g) for g in (3.0, 5.0, 8.0, 9.8, 12.0, 16.0, 25.0)]
    assert times[0] < cartpole_spec.horizon  # actually falls, even at low gravity
    assert all(t1 >= t2 for t1, t2 in zip(times, times[1:]))


@pytest.mark.parametrize("env_id", ["pointmass", "cartpole"])
def test_episode_ends_within_horizon(env_id):
    spec = make_spec(env_id, horizon=40)
    rng = np.random.default_rng(0)
    state = reset(spec, spec.nominal_params, seed=1)
    steps = 0
    done = False
    while not done:
        state, _, done = step(spec, state, rng.normal(size=1) * 5.0, spec.nominal_params)
        steps += 1
        assert steps <= 40
    assert state.step_count == steps
