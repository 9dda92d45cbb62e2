"""Planar point-mass tasks with stale world observations.

The agent is a unit-mass disk in ``[-1, 1]^2``.  In ``"position"`` control
mode an action is a target position tracked by an internal stiff PD loop; in
``"force"`` mode it is a force.  Non-agent state (the object) is observed and
rewarded through a :class:`StaleView` that is refreshed only every
``obs_period`` agent steps, so a policy emitting ``k`` actions per decision
sees the world at the decision rate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError

DT = 0.02
DAMPING = 0.1
RADIUS = 0.05
RESTITUTION = 0.5
GRAVITY = 9.8
SUCCESS_RADIUS = 0.05
SUCCESS_BONUS = 10.0
FORCE_LIMIT = 100.0
POSITION_KP = 200.0
POSITION_KD = 30.0
BOUND = 1.0


@dataclass
class EnvState:
    agent_pos: np.ndarray
    agent_vel: np.ndarray
    goal: np.ndarray
    horizon: int
    object_pos: np.ndarray | None = None
    object_vel: np.ndarray | None = None
    held: bool = False
    t: int = 0
    succeeded: bool = False

    def copy(self) -> EnvState:
        def c(a):
            return None if a is None else a.copy()
        return EnvState(self.agent_pos.copy(), self.agent_vel.copy(), self.goal.copy(), self.horizon,
                        c(self.object_pos), c(self.object_vel), self.held, self.t, self.succeeded)


@dataclass
class StaleView:
    """World (non-agent) state as of the last true observation."""

    object_pos: np.ndarray | None = None
    object_vel: np.ndarray | None = None
    held: bool = False
    refreshed_at: int = 0


def annulus_sample(rng: np.random.Generator, r_min: float, r_max: float,
                   angle_range=(-np.pi, np.pi)) -> np.ndarray:
    r = rng.uniform(r_min, r_max)
    a = rng.uniform(*angle_range)
    return np.array([r * np.cos(a), r * np.sin(a)])


class PointEnv:
    """Base class: agent dynamics, stale view bookkeeping, episode contract."""

    name = "point"
    obs_dim = 6
    action_dim = 2
    dof = 2

    def __init__(self, horizon: int = 100, obs_period: int = 1, control: str = "position",
                 terminate_on_success: bool = False, dt: float = DT, damping: float = DAMPING):
        if control not in ("position", "force"):
            raise ConfigError(f"unknown control mode {control!r}")
        if obs_period < 1 or horizon % obs_period:
            raise ConfigError(f"horizon {horizon} must be divisible by obs_period {obs_period}")
        self.horizon = horizon
        self.obs_period = obs_period
        self.control = control
        self.terminate_on_success = terminate_on_success
        self.dt = dt
        self.damping = damping
        self.state: EnvState | None = None
        self.view = StaleView()
        self.done = True
        self.trace: list[dict] = []

    # -- subclass hooks -------------------------------------------------
    def _sample(self, rng: np.random.Generator) -> EnvState:
        raise NotImplementedError

    def _world_step(self) -> None:
        """Advance non-agent bodies after the agent moved."""

    def _relevant(self, s: EnvState, view: StaleView) -> np.ndarray:
        return s.agent_pos

    def _reward_terms(self, s: EnvState, view: StaleView) -> float:
        return 0.0

    # -- public API -----------------------------------------------------
    def reset(self, seed: int | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.state = self._sample(rng)
        self.state.t = 0
        self._refresh_view()
        self.done = False
        self.trace = []
        self.state.succeeded = self.success(self.state)
        return self.observation()

    def _refresh_view(self) -> None:
        s = self.state
        self.view = StaleView(
            None if s.object_pos is None else s.object_pos.copy(),
            None if s.object_vel is None else s.object_vel.copy(),
            s.held,
            s.t,
        )

    def observation(self) -> np.ndarray:
        s = self.state
        return np.concatenate([s.agent_pos, s.agent_vel, s.goal])

    def robot_state(self, obs: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Position and velocity of the controlled coordinates, read from an observation."""
        obs = self.observation() if obs is None else obs
        return obs[..., 0:2].copy(), obs[..., 2:4].copy()

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        if self.done:
            raise ContractError("step() called on a finished episode; call reset() first")
        action = np.asarray(action, dtype=float)
        if action.shape != (self.action_dim,) or not np.all(np.isfinite(action)):
            raise ContractError(f"action must be a finite vector of length {self.action_dim}")
        s = self.state
        force = self._agent_force(action[:2])
        s.agent_vel = s.agent_vel + (force - self.damping * s.agent_vel) * self.dt
        s.agent_pos = s.agent_pos + s.agent_vel * self.dt
        _clamp(s.agent_pos, s.agent_vel)
        self._apply_extra(action)
        self._world_step()
        s.t += 1
        if s.t % self.obs_period == 0:
            self._refresh_view()
        dist = float(np.linalg.norm(self._relevant(s, self.view) - s.goal))
        reward = -dist + self._reward_terms(s, self.view)
        hit = self.success(s)
        if hit:
            reward += SUCCESS_BONUS
        s.succeeded = s.succeeded or hit
        self.done = s.t >= self.horizon or (self.terminate_on_success and hit)
        self.trace.append(self._trace_row(reward))
        return self.observation(), reward, self.done, {"success": s.succeeded, "t": s.t}

    def _agent_force(self, a: np.ndarray) -> np.ndarray:
        s = self.state
        if self.control == "position":
            target = np.clip(a, -BOUND, BOUND)
            return POSITION_KP * (target - s.agent_pos) - POSITION_KD * s.agent_vel
        return np.clip(a, -FORCE_LIMIT, FORCE_LIMIT)

    def _apply_extra(self, action: np.ndarray) -> None:
        pass

    def success(self, s: EnvState | None = None) -> bool:
        s = self.state if s is None else s
        return bool(np.linalg.norm(self._true_relevant(s) - s.goal) <= SUCCESS_RADIUS)

    def _true_relevant(self, s: EnvState) -> np.ndarray:
        return s.agent_pos

    def _trace_row(self, reward: float) -> dict:
        s = self.state
        obj = s.object_pos if s.object_pos is not None else (np.nan, np.nan)
        return {"t": s.t, "agent_x": s.agent_pos[0], "agent_y": s.agent_pos[1],
                "object_x": obj[0], "object_y": obj[1], "goal_x": s.goal[0], "goal_y": s.goal[1],
                "reward": reward}

    def write_trace(self, path) -> None:
        fields = ["t", "agent_x", "agent_y", "object_x", "object_y", "goal_x", "goal_y", "reward"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in self.trace:
                writer.writerow({k: repr(float(v)) if k != "t" else v for k, v in row.items()})


def _clamp(pos: np.ndarray, vel: np.ndarray, bound: float = BOUND) -> None:
    for i in range(len(pos)):
        if pos[i] > bound:
            pos[i] = bound
            vel[i] = min(vel[i], 0.0)
        elif pos[i] < -bound:
            pos[i] = -bound
            vel[i] = max(vel[i], 0.0)


class ReachEnv(PointEnv):
    """Move the agent onto a goal drawn from an annulus around the origin."""

    name = "reach"

    def _sample(self, rng):
        return EnvState(np.zeros(2), np.zeros(2), annulus_sample(rng, 0.3, 0.8), self.horizon)


class PushEnv(PointEnv):
    """Push a disk from the origin onto a goal drawn from an annulus.

    The agent starts just behind the object on the goal line, jittered
    sideways.  Reward is ``-|object - goal|`` using the stale object
    position, plus the success bonus.  ``reach_weight`` adds an optional
    ``-w |agent - object|`` shaping term (off by default).  The object is
    heavily damped so it only travels while pushed.
    """

    name = "push"
    obs_dim = 8
    object_damping = 20.0
    reach_weight = 0.0
    start_offset = 0.12
    lateral_jitter = 0.02

    def _sample(self, rng):
        goal = annulus_sample(rng, 0.25, 0.45)
        u = goal / np.linalg.norm(goal)
        # start behind the object as seen from the goal, offset sideways
        side = rng.uniform(-self.lateral_jitter, self.lateral_jitter)
        agent = -self.start_offset * u + side * np.array([-u[1], u[0]])
        return EnvState(agent, np.zeros(2), goal, self.horizon, np.zeros(2), np.zeros(2))

    def observation(self):
        s = self.state
        return np.concatenate([s.agent_pos, s.agent_vel, self.view.object_pos, s.goal])

    def _world_step(self):
        s = self.state
        delta = s.object_pos - s.agent_pos
        dist = float(np.linalg.norm(delta))
        if dist < 2 * RADIUS:
            normal = delta / dist if dist > 1e-12 else np.array([0.0, 1.0])
            approach = float((s.agent_vel - s.object_vel) @ normal)
            if approach > 0:
                j = (1.0 + RESTITUTION) * approach / 2.0
                s.agent_vel = s.agent_vel - j * normal
                s.object_vel = s.object_vel + j * normal
            s.object_pos = s.agent_pos + normal * 2 * RADIUS
        s.object_vel = s.object_vel * (1.0 - self.object_damping * self.dt)
        s.object_pos = s.object_pos + s.object_vel * self.dt
        _clamp(s.object_pos, s.object_vel)

    def _relevant(self, s, view):
        return view.object_pos

    def _reward_terms(self, s, view):
        return -self.reach_weight * float(np.linalg.norm(s.agent_pos - view.object_pos))

    def _true_relevant(self, s):
        return s.object_pos


class ThrowEnv(PointEnv):
    """Carry a ball from a random start and release it so it lands in a goal disk.

    The plane is vertical (gravity along ``-y``).  Action = ``[target x, target y,
    release]``; the ball is let go the first time ``release > 0.5``.
    """

    name = "throw"
    obs_dim = 9
    action_dim = 3
    dof = 3
    goal_radius = 0.1

    def _sample(self, rng):
        agent = np.array([rng.uniform(-0.8, -0.4), rng.uniform(-0.2, 0.4)])
        goal = np.array([rng.uniform(0.3, 0.8), -0.9])
        return EnvState(agent, np.zeros(2), goal, self.horizon, agent.copy(), np.zeros(2), held=True)

    def observation(self):
        s = self.state
        v = self.view
        return np.concatenate([s.agent_pos, s.agent_vel, v.object_pos, s.goal, [float(v.held)]])

    def robot_state(self, obs=None):
        obs = self.observation() if obs is None else obs
        release = 1.0 - obs[..., 8:9]
        return (np.concatenate([obs[..., 0:2], release], axis=-1),
                np.concatenate([obs[..., 2:4], np.zeros_like(release)], axis=-1))

    def _apply_extra(self, action):
        s = self.state
        if s.held and action[2] > 0.5:
            s.held = False
            s.object_vel = s.agent_vel.copy()

    def _world_step(self):
        s = self.state
        if s.held:
            s.object_pos = s.agent_pos.copy()
            s.object_vel = s.agent_vel.copy()
            return
        s.object_vel = s.object_vel + np.array([0.0, -GRAVITY]) * self.dt
        s.object_pos = s.object_pos + s.object_vel * self.dt
        if s.object_pos[1] <= -BOUND:
            s.object_pos[1] = -BOUND
            s.object_vel[:] = 0.0
        _clamp(s.object_pos, s.object_vel)

    def _relevant(self, s, view):
        return view.object_pos

    def _true_relevant(self, s):
        return s.object_pos

    def success(self, s=None):
        s = self.state if s is None else s
        return bool(not s.held and np.linalg.norm(s.object_pos - s.goal) <= self.goal_radius)


ENVS = {"reach": ReachEnv, "push": PushEnv, "throw": ThrowEnv}


def make_env(name: str, **kwargs) -> PointEnv:
    try:
        cls = ENVS[name]
    except KeyError as exc:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from exc
    return cls(**kwargs)
