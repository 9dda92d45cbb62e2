from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ndp.envs import (BOUND, DAMPING, DT, RESTITUTION, SUCCESS_BONUS, SUCCESS_RADIUS, PushEnv, ReachEnv, ThrowEnv,
                      annulus_sample, make_env)
from ndp.errors import ConfigError, ContractError


def _reach_at(pos, goal, control="force"):
    env = ReachEnv(control=control)
    env.reset(0)
    env.state.agent_pos = np.array(pos, dtype=float)
    env.state.goal = np.array(goal, dtype=float)
    return env


class TestDynamics:
    def test_constant_force_matches_recurrence(self):
        env = _reach_at([0.0, 0.0], [0.9, 0.9])
        force = np.array([0.5, -0.3])
        p, v = np.zeros(2), np.zeros(2)
        for _ in range(30):
            env.step(force)
            v = v + (force - DAMPING * v) * DT
            p = p + v * DT
            np.testing.assert_allclose(env.state.agent_pos, p, rtol=1e-14, atol=1e-16)
            np.testing.assert_allclose(env.state.agent_vel, v, rtol=1e-14, atol=1e-16)

    def test_zero_force_energy_non_increasing(self):
        env = _reach_at([0.0, 0.0], [0.9, 0.9])
        env.state.agent_vel = np.array([0.4, -0.2])
        energy = [0.5 * float(env.state.agent_vel @ env.state.agent_vel)]
        for _ in range(99):
            env.step(np.zeros(2))
            energy.append(0.5 * float(env.state.agent_vel @ env.state.agent_vel))
        assert np.all(np.diff(energy) <= 0)

    def test_clamped_to_workspace(self):
        env = _reach_at([0.9, 0.0], [0.0, 0.5])
        for _ in range(50):
            env.step(np.array([100.0, 0.0]))
            assert env.state.agent_pos[0] <= BOUND
        assert env.state.agent_pos[0] == BOUND and env.state.agent_vel[0] <= 0.0

    def test_position_mode_tracks_target(self):
        env = _reach_at([0.0, 0.0], [0.9, 0.9], control="position")
        for _ in range(60):
            env.step(np.array([0.3, -0.2]))
        np.testing.assert_allclose(env.state.agent_pos, [0.3, -0.2], atol=1e-3)

    def test_push_transfers_momentum(self):
        env = PushEnv(control="force")
        env.reset(0)
        env.state.agent_pos = np.array([0.0, -0.12])
        env.state.agent_vel = np.array([0.0, 1.0])
        env.state.goal = np.array([0.9, 0.9])
        env.step(np.zeros(2))
        v = env.state.agent_vel[1] * (1 - DAMPING * DT)
        env.step(np.zeros(2))
        # head-on contact between equal masses: impulse (1 + e) v / 2, then one step of object damping
        j = (1 + RESTITUTION) * v / 2
        assert env.state.agent_vel[1] == pytest.approx(v - j)
        assert env.state.object_vel[1] == pytest.approx(j * (1 - PushEnv.object_damping * DT))

    def test_throw_release_is_ballistic(self):
        env = ThrowEnv(control="force")
        env.reset(0)
        for _ in range(3):
            env.step(np.zeros(3))
        assert env.state.held
        env.step(np.array([0.0, 0.0, 1.0]))
        assert not env.state.held
        vy = env.state.object_vel[1]
        env.step(np.zeros(3))
        assert env.state.object_vel[1] == pytest.approx(vy - 9.8 * DT)


class TestReward:
    def test_on_goal_succeeds_with_bonus(self):
        env = _reach_at([0.3, 0.3], [0.3, 0.3])
        _, r, _, info = env.step(np.zeros(2))
        assert info["success"] and r == pytest.approx(SUCCESS_BONUS - np.linalg.norm(env.state.agent_pos - env.state.goal))

    def test_just_outside_radius(self):
        env = _reach_at([0.0, 0.0], [0.0, 0.0])
        env.state.agent_pos = np.array([SUCCESS_RADIUS + 1e-3, 0.0])
        assert not env.success()
        env.state.agent_pos = np.array([SUCCESS_RADIUS - 1e-3, 0.0])
        assert env.success()

    def test_reward_is_negative_distance(self):
        env = _reach_at([0.0, 0.0], [0.6, 0.0])
        _, r, _, _ = env.step(np.zeros(2))
        assert r == pytest.approx(-0.6)


class TestEpisode:
    def test_step_after_done_raises(self):
        env = ReachEnv(horizon=5)
        env.reset(0)
        for _ in range(5):
            env.step(np.zeros(2))
        assert env.done
        with pytest.raises(ContractError):
            env.step(np.zeros(2))

    def test_step_before_reset_raises(self):
        with pytest.raises(ContractError):
            ReachEnv().step(np.zeros(2))

    def test_bad_action(self):
        env = ReachEnv()
        env.reset(0)
        with pytest.raises(ContractError):
            env.step(np.array([np.nan, 0.0]))
        with pytest.raises(ContractError):
            env.step(np.zeros(3))

    def test_config_errors(self):
        with pytest.raises(ConfigError):
            ReachEnv(horizon=100, obs_period=7)
        with pytest.raises(ConfigError):
            ReachEnv(control="velocity")
        with pytest.raises(ConfigError):
            make_env("swim")

    def test_reset_deterministic(self):
        a, b = PushEnv(), PushEnv()
        np.testing.assert_array_equal(a.reset(3), b.reset(3))
        rng = np.random.default_rng(0)
        actions = rng.uniform(-1, 1, (100, 2))
        for act in actions:
            oa, ra, _, _ = a.step(act)
            ob, rb, _, _ = b.step(act)
            assert oa.tobytes() == ob.tobytes() and ra == rb

    def test_goal_annulus(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            r = np.linalg.norm(annulus_sample(rng, 0.3, 0.8))
            assert 0.3 <= r <= 0.8
        for seed in range(50):
            env = ReachEnv()
            env.reset(seed)
            assert 0.3 <= np.linalg.norm(env.state.goal) <= 0.8

    def test_trace_csv(self, tmp_path):
        env = PushEnv(horizon=10)
        env.reset(0)
        for _ in range(10):
            env.step(np.zeros(2))
        env.write_trace(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0].startswith("t,agent_x") and len(lines) == 11


class TestStaleView:
    @pytest.mark.parametrize("k", [1, 5, 10])
    def test_object_fields_change_only_every_k(self, k):
        env = PushEnv(obs_period=k, control="force")
        env.reset(1)
        env.state.agent_pos = env.state.object_pos - np.array([0.0, 0.12])
        rng = np.random.default_rng(0)
        prev = env.observation()[4:6].copy()
        changed = []
        for t in range(1, 101):
            obs, *_ = env.step(np.array([0.0, 30.0]) + rng.normal(size=2))
            if not np.array_equal(obs[4:6], prev):
                changed.append(t)
            prev = obs[4:6].copy()
        assert changed and all(t % k == 0 for t in changed)

    def test_agent_fields_always_fresh(self):
        env = PushEnv(obs_period=5, control="force")
        env.reset(0)
        for _ in range(7):
            obs, *_ = env.step(np.array([3.0, 0.0]))
            np.testing.assert_array_equal(obs[:2], env.state.agent_pos)

    def test_stale_reward_uses_view(self):
        env = PushEnv(obs_period=5, control="force")
        env.reset(2)
        env.state.agent_pos = env.state.object_pos - np.array([0.0, 0.09])
        env.state.agent_vel = np.array([0.0, 2.0])
        _, r, _, _ = env.step(np.zeros(2))
        view_dist = np.linalg.norm(env.view.object_pos - env.state.goal)
        assert r == pytest.approx(-view_dist + env._reward_terms(env.state, env.view))


def test_random_policy_push_rarely_succeeds():
    rng = np.random.default_rng(0)
    wins = 0
    for ep in range(500):
        env = PushEnv(obs_period=5)
        env.reset(ep)
        while not env.done:
            *_, info = env.step(rng.uniform(-1, 1, 2))
        wins += info["success"]
    assert wins / 500 < 0.05


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["reach", "push", "throw"]))
def test_state_stays_in_workspace(seed, name):
    env = make_env(name)
    env.reset(seed)
    rng = np.random.default_rng(seed)
    while not env.done:
        obs, r, _, _ = env.step(rng.uniform(-2, 2, env.action_dim))
        assert np.all(np.abs(env.state.agent_pos) <= BOUND) and np.isfinite(r)
        assert np.all(np.isfinite(obs))
