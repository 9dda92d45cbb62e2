"""PPO with a k-head critic for NDP policies, and the raw-action baselines.

Three policy kinds share the collection and update code:

``ndp``
    The actor predicts DMP parameters once per decision block; the ``k``
    sub-sampled rollout positions are the action means for the next ``k`` env
    steps.
``ppo-multi``
    The actor predicts ``k`` raw action means directly.
``ppo``
    Vanilla PPO: ``k = 1`` and a single raw action per forward pass.

Exploration is a diagonal Gaussian around the per-sub-step means with a
state-independent learnable log-std.  Every sub-step is a separate transition
with its own likelihood ratio; for ``ndp`` the mean's dependence on the network
goes through the analytic DMP Jacobians.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .dmp import DmpConfig, rollout, subsample_indices
from .envs import DT, PointEnv, make_env
from .errors import ConfigError, NumericalError
from .gradients import alpha_backward, backward, trajectory_jacobians
from .nets import Adam, CriticHeads, DmpHead, Mlp, MlpSpec, PolicyParams, RunningMeanStd, TrainLog

LOG_2PI = float(np.log(2.0 * np.pi))
ALGOS = ("ndp", "ppo", "ppo-multi")


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.1
    epochs: int = 10
    minibatches: int = 32
    batch_size: int = 2048
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    lr: float = 3e-4
    adam_eps: float = 1e-5
    normalize_obs: bool = True
    normalize_returns: bool = True

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip <= 0 or self.lr <= 0 or self.max_grad_norm <= 0:
            raise ConfigError("clip, lr and max_grad_norm must be positive")
        if self.epochs < 1 or self.minibatches < 1 or self.batch_size < 1:
            raise ConfigError("epochs, minibatches and batch_size must be positive")


@dataclass(frozen=True)
class RlConfig:
    """Everything a training run needs besides the PPO hyperparameters."""

    algo: str = "ndp"
    env: str = "reach"
    total_steps: int = 200_000
    n_envs: int = 16
    horizon: int = 100
    k: int = 5
    m_steps: int = 35
    n_basis: int = 6
    basis: str = "gaussian"
    dmp_dt: float | None = None
    learn_alpha: bool = False
    zero_forcing: bool = False
    w_scale: float = 1.0
    init_log_std: float = 0.0
    hidden: tuple[int, ...] = (100, 100)
    eval_episodes: int = 20
    final_eval_episodes: int = 100
    log_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algorithm {self.algo!r}; choose from {ALGOS}")
        k = 1 if self.algo == "ppo" else self.k
        if k < 1 or self.horizon % k:
            raise ConfigError(f"horizon {self.horizon} must be divisible by k={k}")
        if self.n_envs < 1 or self.total_steps < 1:
            raise ConfigError("n_envs and total_steps must be positive")

    @property
    def block(self) -> int:
        """Env steps per actor forward pass."""
        return 1 if self.algo == "ppo" else self.k

    def dmp_config(self) -> DmpConfig:
        return DmpConfig(n_basis=self.n_basis, m_steps=self.m_steps, k_rollout=self.k, basis=self.basis,
                         dt=self.dmp_dt, learn_alpha=self.learn_alpha, zero_forcing=self.zero_forcing)


@dataclass
class Transition:
    """One env sub-step as seen by the learner."""

    s: np.ndarray
    a: np.ndarray
    logp: float
    r: float
    done: bool
    value_head: int
    v: float


@dataclass
class EpisodeBuffer:
    """Block-structured storage for ``n_envs`` synchronised environments.

    Arrays are indexed ``[block, env, ...]``; the sub-step axis (length ``k``)
    follows the env axis where present.
    """

    obs: np.ndarray         # [N, E, obs_dim], normalised, at block start
    y0: np.ndarray          # [N, E, dof]
    y0_dot: np.ndarray      # [N, E, dof], in DMP time
    actions: np.ndarray     # [N, E, k, dof]
    logp: np.ndarray        # [N, E, k]
    rewards: np.ndarray     # [N, E, k], possibly scaled
    raw_rewards: np.ndarray
    values: np.ndarray      # [N, E, k]
    dones: np.ndarray       # [N, E, k], episode ended after this sub-step
    last_values: np.ndarray  # [E], head-0 value of the state after the buffer
    forward_passes: int = 0
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.actions.shape[2]

    @property
    def env_steps(self) -> int:
        return int(np.prod(self.rewards.shape))

    def transitions(self):
        """Per-sub-step records, env-major then time order."""
        N, E, k = self.logp.shape
        for e in range(E):
            for n in range(N):
                for j in range(k):
                    yield Transition(self.obs[n, e], self.actions[n, e, j], float(self.logp[n, e, j]),
                                     float(self.rewards[n, e, j]), bool(self.dones[n, e, j]), j,
                                     float(self.values[n, e, j]))


def gae(rewards, values, dones, last_value, gamma: float, lam: float):
    """Generalised advantage estimation over a flat ``[T, ...]`` sequence.

    ``values[t]`` is the estimate used for step ``t``; ``dones[t]`` means no
    bootstrap past step ``t``; ``last_value`` bootstraps the final step.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    T = len(rewards)
    adv = np.zeros_like(rewards)
    running = np.zeros_like(np.asarray(last_value, dtype=float) * np.ones(rewards.shape[1:]))
    next_value = np.asarray(last_value, dtype=float)
    for t in range(T - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def buffer_gae(buf: EpisodeBuffer, config: PpoConfig) -> EpisodeBuffer:
    """Run :func:`gae` on the flattened sub-step sequence of each env.

    Head ``j`` scores sub-step ``j``; the last sub-step of a block bootstraps
    from head 0 of the next block, which is exactly the next element of the
    flattened sequence.
    """
    N, E, k = buf.rewards.shape
    flat = lambda a: np.swapaxes(a, 1, 2).reshape(N * k, E)  # noqa: E731
    adv, ret = gae(flat(buf.rewards), flat(buf.values), flat(buf.dones), buf.last_values,
                   config.gamma, config.gae_lambda)
    unflat = lambda a: np.swapaxes(a.reshape(N, k, E), 1, 2)  # noqa: E731
    buf.advantages = unflat(adv)
    buf.returns = unflat(ret)
    return buf


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    adv = np.asarray(adv, dtype=float)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def inverse_controller(y_target, y_prev=None, mode: str = "identity", y=None, y_dot=None,
                       y_dot_target=None, kp: float = 100.0, kd: float = 20.0) -> np.ndarray:
    """Map a desired robot state to an env action.

    ``identity`` passes the target through as a position command.  ``pd``
    returns ``kp (y_target - y) + kd (y_dot_target - y_dot)``; when
    ``y_dot_target`` is omitted it is taken as the finite difference
    ``(y_target - y_prev) / dt`` of consecutive targets.
    """
    y_target = np.asarray(y_target, dtype=float)
    if mode == "identity":
        return y_target.copy()
    if mode != "pd":
        raise ConfigError(f"unknown inverse controller mode {mode!r}")
    if y is None or y_dot is None:
        raise ConfigError("pd mode needs the current y and y_dot")
    if y_dot_target is None:
        y_dot_target = np.zeros_like(y_target) if y_prev is None else (y_target - np.asarray(y_prev)) / DT
    return kp * (y_target - np.asarray(y)) + kd * (np.asarray(y_dot_target) - np.asarray(y_dot))


class Agent:
    """Actor, log-std and k-head critic for one of the three algorithms."""

    def __init__(self, cfg: RlConfig, obs_dim: int, dof: int, rng: np.random.Generator):
        self.cfg = cfg
        self.algo = cfg.algo
        self.k = cfg.block
        self.dof = dof
        self.head = None
        self.dmp = None
        if self.algo == "ndp":
            self.dmp = cfg.dmp_config()
            self.head = DmpHead(dof, cfg.n_basis, cfg.w_scale, cfg.learn_alpha, self.dmp.alpha)
            out_dim = self.head.output_dim
            self.idx = subsample_indices(self.dmp.m_steps, self.k)
        else:
            out_dim = self.k * dof
        self.actor = PolicyParams(Mlp(MlpSpec(obs_dim, out_dim, cfg.hidden), rng, final_scale=0.01),
                                   np.full(dof, float(cfg.init_log_std)))
        self.critic = CriticHeads(Mlp(MlpSpec(obs_dim, self.k, cfg.hidden), rng))

    @property
    def arrays(self) -> list[np.ndarray]:
        return self.actor.arrays + self.critic.net.params

    def state_dict(self) -> dict[str, np.ndarray]:
        out = self.actor.net.state_dict("actor.")
        out.update(self.critic.net.state_dict("critic."))
        out["log_std"] = self.actor.log_std
        return out

    def load_state_dict(self, state) -> None:
        self.actor.net.load_state_dict(state, "actor.")
        self.critic.net.load_state_dict(state, "critic.")
        self.actor.log_std[...] = state["log_std"]

    def velocity_scale(self, env_dt: float) -> float:
        """Factor taking an env-time velocity to DMP time (k env steps span m DMP steps)."""
        if self.dmp is None:
            return 1.0
        return self.k * env_dt / (self.dmp.m_steps * self.dmp.dt)

    def means(self, obs, y0, y0_dot):
        """Action means ``[B, k, dof]`` and the cache for :meth:`mean_backward`."""
        out, acts = self.actor.net.forward(obs)
        if self.algo != "ndp":
            mu = y0[:, None, :] + out.reshape(len(obs), self.k, self.dof)
            return mu, (out, acts, None)
        params = self.head.split(out, y0)
        tape = rollout(params, y0, y0_dot, self.dmp)
        mu = np.swapaxes(tape.y[self.idx], 0, 1)
        return mu, (out, acts, tape)

    def mean_backward(self, cache, d_mu) -> list[np.ndarray]:
        out, acts, tape = cache
        if tape is None:
            return self.actor.net.backward(acts, d_mu.reshape(out.shape))
        upstream = np.swapaxes(d_mu, 0, 1)
        d_w, d_g = backward(tape, upstream, k=self.k, jacobians=trajectory_jacobians(tape))
        d_alpha = alpha_backward(tape, upstream, k=self.k) if self.head.learn_alpha else None
        return self.actor.net.backward(acts, self.head.join_grads(out, d_w, d_g, d_alpha))

    def values(self, obs):
        return self.critic.net.forward(obs)


def gaussian_logp(a, mu, log_std) -> np.ndarray:
    z = (a - mu) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


class VecEnv:
    """``n`` synchronised copies of one env; all share the horizon so they reset together."""

    def __init__(self, name: str, n: int, horizon: int, obs_period: int, seed: int):
        self.envs = [make_env(name, horizon=horizon, obs_period=obs_period) for _ in range(n)]
        self.seeds = np.random.SeedSequence(seed)
        self.episodes = 0

    @property
    def proto(self) -> PointEnv:
        return self.envs[0]

    def reset(self) -> np.ndarray:
        children = self.seeds.spawn(len(self.envs))
        self.episodes += len(self.envs)
        return np.stack([env.reset(int(c.generate_state(1)[0])) for env, c in zip(self.envs, children)])

    def step(self, actions):
        results = [env.step(a) for env, a in zip(self.envs, actions)]
        obs = np.stack([r[0] for r in results])
        rewards = np.array([r[1] for r in results])
        done = results[0][2]
        success = np.array([r[3]["success"] for r in results])
        return obs, rewards, done, success


class Trainer:
    """Owns the agent, envs, normalisers and RNG for one seeded training run."""

    def __init__(self, cfg: RlConfig, ppo: PpoConfig | None = None, seed: int = 0):
        self.cfg = cfg
        self.ppo = ppo or PpoConfig()
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.k = cfg.block
        self.vec = VecEnv(cfg.env, cfg.n_envs, cfg.horizon, self.k, seed + 1)
        env = self.vec.proto
        self.obs_dim = env.obs_dim
        self.dof = env.dof
        self.agent = Agent(cfg, env.obs_dim, env.dof, self.rng)
        self.opt = Adam(self.agent.arrays, lr=self.ppo.lr, eps=self.ppo.adam_eps,
                        max_grad_norm=self.ppo.max_grad_norm)
        self.obs_rms = RunningMeanStd((env.obs_dim,))
        self.ret_rms = RunningMeanStd(())
        self.discounted = np.zeros(cfg.n_envs)
        self.vscale = self.agent.velocity_scale(env.dt)
        self.env_steps = 0
        self.forward_passes = 0
        self.episode_returns: list[float] = []
        self.episode_success: list[bool] = []
        self._ep_return = np.zeros(cfg.n_envs)
        self.obs = self.vec.reset()
        # Steps per env per update: the batch size rounded up to whole decision blocks.
        per_env = -(-self.ppo.batch_size // cfg.n_envs)
        self.blocks_per_update = -(-per_env // self.k)

    def _norm(self, obs, update: bool) -> np.ndarray:
        if not self.ppo.normalize_obs:
            return obs
        if update:
            self.obs_rms.update(obs)
        return self.obs_rms.normalize(obs)

    def _robot(self, obs):
        y0, v0 = self.vec.proto.robot_state(obs)
        return y0, v0 * self.vscale

    def collect(self) -> EpisodeBuffer:
        N, E, k, dof = self.blocks_per_update, self.cfg.n_envs, self.k, self.dof
        buf = {name: np.zeros(shape) for name, shape in [
            ("obs", (N, E, self.obs_dim)), ("y0", (N, E, dof)), ("y0_dot", (N, E, dof)),
            ("actions", (N, E, k, dof)), ("logp", (N, E, k)), ("rewards", (N, E, k)),
            ("raw_rewards", (N, E, k)), ("values", (N, E, k)), ("dones", (N, E, k))]}
        passes = 0
        for n in range(N):
            s = self._norm(self.obs, update=True)
            y0, y0_dot = self._robot(self.obs)
            mu, _ = self.agent.means(s, y0, y0_dot)
            passes += 1
            v, _ = self.agent.values(s)
            std = np.exp(self.agent.actor.log_std)
            a = mu + std * self.rng.standard_normal(mu.shape)
            buf["obs"][n], buf["y0"][n], buf["y0_dot"][n] = s, y0, y0_dot
            buf["actions"][n] = a
            buf["logp"][n] = gaussian_logp(a, mu, self.agent.actor.log_std)
            buf["values"][n] = v
            for j in range(k):
                self.obs, r, done, success = self.vec.step(a[:, j])
                self.env_steps += E
                self._ep_return += r
                buf["raw_rewards"][n, :, j] = r
                buf["rewards"][n, :, j] = self._scale_reward(r, done)
                buf["dones"][n, :, j] = done
                if done:
                    self.episode_returns += self._ep_return.tolist()
                    self.episode_success += success.tolist()
                    self._ep_return[:] = 0.0
                    self.obs = self.vec.reset()
        self.forward_passes += passes * E
        last, _ = self.agent.values(self._norm(self.obs, update=False))
        return EpisodeBuffer(**buf, last_values=last[:, 0], forward_passes=passes * E)

    def _scale_reward(self, r, done: bool):
        if not self.ppo.normalize_returns:
            return r
        self.discounted = self.discounted * self.ppo.gamma + r
        self.ret_rms.update(self.discounted)
        if done:
            self.discounted[:] = 0.0
        return np.clip(r / np.sqrt(self.ret_rms.var + 1e-8), -10.0, 10.0)

    def update(self, buf: EpisodeBuffer) -> dict:
        return ppo_update(self.agent, self.opt, buffer_gae(buf, self.ppo), self.ppo, self.rng)

    def evaluate(self, episodes: int, seed: int) -> float:
        """Deterministic (mean-action) success rate on fresh seeded episodes."""
        hits = 0
        env = make_env(self.cfg.env, horizon=self.cfg.horizon, obs_period=self.k)
        for ep in range(episodes):
            obs = env.reset(seed * 100_003 + ep)
            done = False
            while not done:
                y0, y0_dot = self._robot(obs[None])
                mu, _ = self.agent.means(self._norm(obs[None], update=False), y0, y0_dot)
                for j in range(self.k):
                    obs, _, done, info = env.step(mu[0, j])
            hits += bool(info["success"])
        return hits / max(episodes, 1)

    def final_success(self) -> float:
        """Success rate of the mean policy on ``final_eval_episodes`` episodes unseen during training."""
        return self.evaluate(self.cfg.final_eval_episodes, seed=1_000_000 + self.seed)

    def train(self, log: TrainLog | None = None, callback=None) -> TrainLog:
        """Alternate collection and updates until ``total_steps`` env samples.

        A ``callback`` receives each logged record; returning ``True`` stops early.
        """
        log = log if log is not None else TrainLog()
        update = 0
        while self.env_steps < self.cfg.total_steps:
            buf = self.collect()
            stats = self.update(buf)
            update += 1
            if update % self.cfg.log_every == 0 or self.env_steps >= self.cfg.total_steps:
                recent = self.episode_success[-self.cfg.n_envs:]
                rec = {"env_steps": self.env_steps, "forward_passes": self.forward_passes,
                       "train_success": float(np.mean(recent)) if recent else 0.0,
                       "episode_return": float(np.mean(self.episode_returns[-self.cfg.n_envs:]))
                       if self.episode_returns else 0.0,
                       "success_rate": self.evaluate(self.cfg.eval_episodes, self.seed + update)
                       if self.cfg.eval_episodes else float("nan"), **stats}
                log.add(**rec)
                if callback is not None and callback(rec):
                    break
        return log


def ppo_update(agent: Agent, opt: Adam, buf: EpisodeBuffer, config: PpoConfig,
               rng: np.random.Generator) -> dict:
    """Clipped-surrogate PPO epochs over minibatches of decision blocks.

    Each sub-step is its own sample: its ratio, clipped surrogate and value
    loss against the head that scored it.
    """
    if buf.advantages is None:
        raise ConfigError("run buffer_gae before ppo_update")
    N, E, k, dof = buf.actions.shape
    B = N * E
    obs = buf.obs.reshape(B, -1)
    y0 = buf.y0.reshape(B, dof)
    y0_dot = buf.y0_dot.reshape(B, dof)
    act = buf.actions.reshape(B, k, dof)
    old_logp = buf.logp.reshape(B, k)
    adv = normalize_advantages(buf.advantages).reshape(B, k)
    ret = buf.returns.reshape(B, k)
    n_mb = min(config.minibatches, B)
    n_actor = len(agent.actor.net.params)
    history = {"policy_loss": [], "value_loss": [], "entropy": [], "clip_frac": [], "approx_kl": [],
               "grad_norm": []}
    for _ in range(config.epochs):
        order = rng.permutation(B)
        for mb in np.array_split(order, n_mb):
            n = len(mb) * k
            log_std = agent.actor.log_std
            mu, cache = agent.means(obs[mb], y0[mb], y0_dot[mb])
            logp = gaussian_logp(act[mb], mu, log_std)
            ratio = np.exp(logp - old_logp[mb])
            A = adv[mb]
            clipped = np.clip(ratio, 1.0 - config.clip, 1.0 + config.clip)
            surr = np.minimum(ratio * A, clipped * A)
            policy_loss = -float(surr.sum()) / n
            # d(-surr)/d(logp): the unclipped branch is active where it is the minimum.
            active = (ratio * A) <= (clipped * A)
            d_logp = -(active * ratio * A) / n
            var_inv = np.exp(-2.0 * log_std)
            diff = act[mb] - mu
            d_mu = d_logp[..., None] * diff * var_inv
            d_log_std = np.einsum("bk,bkd->d", d_logp, diff * diff * var_inv - 1.0)
            entropy = float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))
            d_log_std = d_log_std - config.entropy_coef * np.ones(dof)
            v, vacts = agent.values(obs[mb])
            value_loss = 0.5 * float(np.sum((v - ret[mb]) ** 2)) / n
            d_v = config.value_coef * (v - ret[mb]) / n
            grads = agent.mean_backward(cache, d_mu) + [d_log_std] + agent.critic.net.backward(vacts, d_v)
            if len(grads) != n_actor + 1 + len(agent.critic.net.params):
                raise ConfigError("gradient bookkeeping mismatch")
            if not np.isfinite(policy_loss + value_loss):
                raise NumericalError("non-finite PPO loss; aborting update")
            norm = opt.step(grads)
            history["policy_loss"].append(policy_loss)
            history["value_loss"].append(value_loss)
            history["entropy"].append(entropy)
            history["clip_frac"].append(float(np.mean(np.abs(ratio - 1.0) > config.clip)))
            history["approx_kl"].append(float(np.mean(old_logp[mb] - logp)))
            history["grad_norm"].append(norm)
    return {key: float(np.mean(vals)) for key, vals in history.items()}


def _train(algo: str, env: str, seed: int, ppo: PpoConfig | None, callback=None, **overrides):
    cfg = RlConfig(algo=algo, env=env, **overrides)
    trainer = Trainer(cfg, ppo, seed)
    return trainer.train(callback=callback), trainer


def train_ndp(env: str = "reach", seed: int = 0, ppo: PpoConfig | None = None, callback=None, **overrides):
    """PPO on an NDP policy; returns ``(log, trainer)``."""
    return _train("ndp", env, seed, ppo, callback, **overrides)


def baseline_ppo(env: str = "reach", seed: int = 0, ppo: PpoConfig | None = None, callback=None, **overrides):
    return _train("ppo", env, seed, ppo, callback, **overrides)


def baseline_ppo_multi(env: str = "reach", seed: int = 0, ppo: PpoConfig | None = None, callback=None,
                       **overrides):
    return _train("ppo-multi", env, seed, ppo, callback, **overrides)


def steps_to_success(log: TrainLog, threshold: float, key: str = "success_rate") -> float:
    """First logged env-step count whose success metric reaches ``threshold`` (inf if never)."""
    for rec in log.records:
        if rec.get(key, 0.0) >= threshold:
            return float(rec["env_steps"])
    return float("inf")


def config_fields(cls) -> list[str]:
    return [f.name for f in dataclasses.fields(cls)]
