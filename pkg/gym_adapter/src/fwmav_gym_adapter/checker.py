"""Environment-API conformance checker.

A self-contained version of the checks the common Gym/Gymnasium
``check_env`` utilities perform for vector-observation environments:
space declarations, reset/step signatures and return types, containment
of observations, and reward/termination types. Raises AssertionError with
a descriptive message on the first violation."""

import numpy as np

from .spaces import Box


def check_env(env, n_steps=10):
    assert hasattr(env, "observation_space"), "missing observation_space"
    assert hasattr(env, "action_space"), "missing action_space"
    assert isinstance(env.observation_space, Box), \
        "observation_space must be a Box"
    assert isinstance(env.action_space, Box), "action_space must be a Box"
    assert np.all(env.action_space.low <= env.action_space.high)

    out = env.reset(seed=0)
    assert isinstance(out, tuple) and len(out) == 2, \
        "reset() must return (observation, info)"
    obs, info = out
    assert isinstance(info, dict), "reset info must be a dict"
    _check_obs(env, obs, "reset")

    env.action_space.seed(0)
    for i in range(n_steps):
        out = env.step(env.action_space.sample())
        assert isinstance(out, tuple) and len(out) == 5, \
            "step() must return (obs, reward, terminated, truncated, info)"
        obs, reward, terminated, truncated, info = out
        _check_obs(env, obs, f"step {i}")
        assert isinstance(reward, (int, float, np.floating)), \
            f"reward has type {type(reward).__name__}"
        assert np.isfinite(reward), "reward must be finite"
        assert isinstance(terminated, bool), "terminated must be a bool"
        assert isinstance(truncated, bool), "truncated must be a bool"
        assert isinstance(info, dict), "step info must be a dict"
        assert not (terminated and truncated), \
            "terminated and truncated are mutually exclusive here"
        if terminated or truncated:
            obs, info = env.reset()
            _check_obs(env, obs, "reset after episode end")

    # reset with the same seed must restart identically
    obs_a, _ = env.reset(seed=123)
    obs_b, _ = env.reset(seed=123)
    np.testing.assert_array_equal(obs_a, obs_b,
                                  "seeded reset is not reproducible")


def _check_obs(env, obs, where):
    assert isinstance(obs, np.ndarray), f"{where}: observation not an ndarray"
    assert obs.shape == env.observation_space.shape, \
        f"{where}: observation shape {obs.shape} != " \
        f"{env.observation_space.shape}"
    assert env.observation_space.contains(obs), \
        f"{where}: observation outside the declared space"
