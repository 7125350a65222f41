"""Adapter conformance, wire transparency and failure handling against a
live server subprocess."""

import math
import socket

import numpy as np
import pytest

from fwmav_gym_adapter import (AdapterError, Box, RemoteEnv, check_env,
                               make_env)


def scripted_action(i, dim):
    a = np.zeros(dim)
    a[0] = 0.1 * math.sin(0.3 * i)
    a[-1] = 0.05 * math.cos(0.2 * i)
    return a


def test_handshake_maneuver_dims(server):
    with make_env(server, task="maneuver", seed=1, horizon=50) as env:
        assert env.observation_dim == 12
        assert env.action_dim == 4
        assert env.observation_space.shape == (12,)
        assert env.action_space.shape == (4,)
        assert np.all(env.action_space.high > 0)
        assert np.array_equal(env.action_space.low, -env.action_space.high)


def test_handshake_open_loop_dims(server):
    with make_env(server, task="open_loop", seed=1, horizon=50) as env:
        assert env.action_dim == 2
        # raw per-motor voltages, bounded by the supply
        assert env.action_space.shape == (2,)
        assert np.all(env.action_space.high == env.action_space.high[0])
        assert env.action_space.high[0] > 10.0


def test_passes_env_checker(server):
    with make_env(server, task="maneuver", seed=0, horizon=30) as env:
        check_env(env)


def test_wire_transparency(server):
    """A scripted 100-step remote episode matches the server-side
    environment run in-process, bitwise."""
    fwmav_env = pytest.importorskip("fwmav.env")
    spec_kw = dict(task="maneuver", seed=11, horizon=120,
                   p_0=(0.0, 0.0, 0.35), p_f=(0.0, 0.0, 0.4))

    local = fwmav_env.FwmavEnv(fwmav_env.EpisodeSpec(**spec_kw))
    obs_l = local.reset()
    with make_env(server, **spec_kw) as env:
        obs_r, _ = env.reset()
        np.testing.assert_array_equal(obs_r, obs_l)
        for i in range(100):
            a = scripted_action(i, 4)
            obs_r, rew_r, term, trunc, info_r = env.step(a)
            obs_l, rew_l, done_l, info_l = local.step(a)
            np.testing.assert_array_equal(obs_r, obs_l)
            assert rew_r == rew_l
            assert (term or trunc) == done_l
            assert info_r == info_l
            if done_l:
                break


def test_seed_isolation(server):
    def rollout(seed, n=30):
        with make_env(server, task="maneuver", seed=seed, horizon=100,
                      randomize=True) as env:
            obs, _ = env.reset()
            out = [obs]
            for i in range(n):
                obs, _, term, trunc, _ = env.step(scripted_action(i, 4))
                out.append(obs)
                if term or trunc:
                    break
        return np.array(out)

    a, b, c = rollout(1), rollout(1), rollout(2)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_reset_reseeds(server):
    with make_env(server, task="maneuver", seed=1, horizon=50,
                  p_0=(0.0, 0.1, 0.3), randomize=True) as env:
        env.reset()
        o1, _, _, _, _ = env.step(np.zeros(4))
        env.reset(seed=2)
        o2, _, _, _, _ = env.step(np.zeros(4))
        env.reset(seed=1)
        o3, _, _, _, _ = env.step(np.zeros(4))
    np.testing.assert_array_equal(o1, o3)
    assert not np.array_equal(o1, o2)


def test_step_before_reset_raises(server):
    env = make_env(server, task="maneuver", seed=1, horizon=50)
    with pytest.raises(AdapterError):
        env.step(np.zeros(4))
    env.close()


def test_connection_refused_is_construction_error():
    # grab a port that is definitely not listening
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    with pytest.raises(AdapterError):
        RemoteEnv(("127.0.0.1", port), task="maneuver")


def test_bad_spec_rejected_by_server(server):
    with pytest.raises(AdapterError):
        make_env(server, task="walk")


def test_mid_episode_disconnect(server):
    env = make_env(server, task="maneuver", seed=1, horizon=50)
    env.reset()
    env._sock.close()
    env._sock = None
    with pytest.raises(AdapterError):
        env.step(np.zeros(4))
    # a fresh reset reconnects and the env is usable again
    obs, _ = env.reset()
    assert obs.shape == (12,)
    env.close()


# ---------------------------------------------------------------------------
# bundled space and checker
# ---------------------------------------------------------------------------

def test_box_space():
    b = Box(-1.0, 1.0, shape=(3,))
    assert b.shape == (3,)
    assert b.contains(np.zeros(3))
    assert not b.contains(np.full(3, 2.0))
    assert not b.contains(np.zeros(4))
    b.seed(0)
    x = b.sample()
    assert b.contains(x)
    b.seed(0)
    np.testing.assert_array_equal(x, b.sample())
    with pytest.raises(ValueError):
        Box(1.0, -1.0, shape=(2,))
    assert b == Box(-1.0, 1.0, shape=(3,))


def test_checker_rejects_legacy_step_api():
    class Legacy:
        observation_space = Box(-np.inf, np.inf, shape=(2,))
        action_space = Box(-1.0, 1.0, shape=(1,))

        def reset(self, seed=None, options=None):
            return np.zeros(2), {}

        def step(self, action):
            return np.zeros(2), 0.0, False, {}   # 4-tuple, old API

    with pytest.raises(AssertionError):
        check_env(Legacy())
