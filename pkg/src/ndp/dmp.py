"""Discrete dynamic movement primitive: basis functions, forcing term and Euler rollout.

Every function accepts an optional leading batch shape on the parameters, so a
whole minibatch of primitives can be integrated with one loop over time.
Shapes used throughout::

    w      [..., dof, n_basis]
    g, y0  [..., dof]
    alpha  [...]                 (only when alpha is predicted per sample)

The phase ``x`` never depends on the parameters, so it is a plain scalar shared
by every batch element.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, IntegrationDivergedError, ShapeError, SingularBasisError

# Below this the normaliser of the forcing term is treated as singular.
DENOMINATOR_FLOOR = 1e-10


class BasisKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LINEAR = "linear"
    MULTIQUADRIC = "multiquadric"
    INVERSE_QUADRIC = "inverse_quadric"
    INVERSE_MULTIQUADRIC = "inverse_multiquadric"


@dataclass(frozen=True)
class DmpConfig:
    """Fixed scalars of the dynamical system.

    ``beta`` defaults to ``alpha / 4`` (critical damping) and ``dt`` to
    ``1 / m_steps`` so that one rollout spans unit time.
    """

    n_basis: int = 10
    alpha: float = 25.0
    beta: float | None = None
    a_x: float = 1.0
    dt: float | None = None
    m_steps: int = 35
    k_rollout: int = 5
    basis: BasisKind = BasisKind.GAUSSIAN
    epsilon: float = 1.0
    learn_alpha: bool = False
    zero_forcing: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "basis", BasisKind(self.basis))
        except ValueError as exc:
            raise ConfigError(f"unknown basis kind {self.basis!r}") from exc
        if self.beta is None:
            object.__setattr__(self, "beta", self.alpha / 4.0)
        if self.dt is None and self.m_steps > 0:
            object.__setattr__(self, "dt", 1.0 / self.m_steps)
        for name in ("n_basis", "m_steps", "k_rollout"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("alpha", "beta", "a_x", "dt", "epsilon"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"{name} must be a finite positive real, got {value!r}")
        if self.k_rollout > self.m_steps or self.m_steps % self.k_rollout:
            raise ConfigError(
                f"k_rollout={self.k_rollout} must divide m_steps={self.m_steps}"
            )

    def replace(self, **changes) -> DmpConfig:
        """Like :func:`dataclasses.replace`, but re-derives ``beta``/``dt`` that were left at their defaults."""
        if "beta" not in changes and self.beta == self.alpha / 4.0:
            changes["beta"] = None
        if "dt" not in changes and self.dt == 1.0 / self.m_steps:
            changes["dt"] = None
        return dataclasses.replace(self, **changes)

    @property
    def centers(self) -> np.ndarray:
        i = np.arange(1, self.n_basis + 1)
        return np.exp(-i * self.a_x / self.n_basis)

    @property
    def widths(self) -> np.ndarray:
        return self.n_basis / self.centers


@dataclass
class DmpParams:
    """Learnable quantities of one (or a batch of) primitive(s)."""

    w: np.ndarray
    g: np.ndarray
    alpha: np.ndarray | None = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        if self.alpha is not None:
            self.alpha = np.asarray(self.alpha, dtype=float)
        if self.w.ndim < 2 or self.w.shape[:-1] != self.g.shape:
            raise ShapeError(f"w {self.w.shape} and g {self.g.shape} disagree")

    @property
    def dof(self) -> int:
        return self.g.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.g.shape[:-1]

    def copy(self) -> DmpParams:
        return DmpParams(self.w.copy(), self.g.copy(), None if self.alpha is None else self.alpha.copy())


@dataclass
class DmpState:
    y: np.ndarray
    y_dot: np.ndarray
    y_ddot: np.ndarray
    x: float


@dataclass
class RolloutTape:
    """Everything the analytical backward pass needs from one forward integration.

    ``y``, ``y_dot`` and ``y_ddot`` have shape ``[m_steps + 1, ..., dof]``;
    ``x`` has shape ``[m_steps + 1]``; ``psi[t - 1]`` is the basis vector at ``x[t]``.
    """

    y: np.ndarray
    y_dot: np.ndarray
    y_ddot: np.ndarray
    x: np.ndarray
    psi: np.ndarray
    params: DmpParams
    config: DmpConfig
    y0: np.ndarray
    y0_dot: np.ndarray = field(default=None)

    def state(self, t: int) -> DmpState:
        return DmpState(self.y[t], self.y_dot[t], self.y_ddot[t], float(self.x[t]))

    @property
    def states(self) -> list[DmpState]:
        return [self.state(t) for t in range(len(self.x))]


def _check_phase(x):
    if not np.all(np.isfinite(x)):
        raise DomainError(f"phase must be finite, got {x!r}")


def basis_eval(x, config: DmpConfig) -> np.ndarray:
    """Basis vector psi(x), shape ``[..., n_basis]`` for phase(s) ``x``."""
    _check_phase(x)
    x = np.asarray(x, dtype=float)[..., None]
    n = config.n_basis
    kind = config.basis
    if kind is BasisKind.GAUSSIAN:
        return np.exp(-config.widths * (x - config.centers) ** 2)
    ex2 = (config.epsilon * x) ** 2
    if kind is BasisKind.LINEAR:
        psi = x
    elif kind is BasisKind.MULTIQUADRIC:
        psi = np.sqrt(1.0 + ex2)
    elif kind is BasisKind.INVERSE_QUADRIC:
        psi = 1.0 / (1.0 + ex2)
    else:
        psi = 1.0 / np.sqrt(1.0 + ex2)
    # these kernels carry no centre, so every basis function is the same curve
    return np.broadcast_to(psi, x.shape[:-1] + (n,)).copy()


def normalized_basis(x, config: DmpConfig) -> np.ndarray:
    """``psi(x) / sum(psi(x)) * x``: the factor multiplying ``w`` inside the forcing term."""
    psi = basis_eval(x, config)
    total = psi.sum(axis=-1, keepdims=True)
    if np.any(np.abs(total) < DENOMINATOR_FLOOR):
        raise SingularBasisError(f"basis sum {total.ravel()} below {DENOMINATOR_FLOOR}")
    return psi / total * np.asarray(x, dtype=float)[..., None]


def forcing(x, params: DmpParams, y0, config: DmpConfig) -> np.ndarray:
    """Forcing term f(x) for every dof, shape ``[..., dof]``."""
    y0 = np.asarray(y0, dtype=float)
    if config.zero_forcing:
        return np.zeros(np.broadcast_shapes(params.g.shape, y0.shape))
    phi = normalized_basis(x, config)
    return (params.w @ phi) * (params.g - y0)


def canonical_step(x, config: DmpConfig):
    """One explicit Euler step of the phase decay."""
    _check_phase(x)
    return x + config.dt * (-config.a_x * x)


def _gains(params: DmpParams, config: DmpConfig):
    if params.alpha is None:
        return config.alpha, config.beta
    alpha = params.alpha[..., None]
    return alpha, alpha / 4.0


def step(state: DmpState, params: DmpParams, y0, config: DmpConfig) -> DmpState:
    """Advance the system by one integration step.

    The new acceleration is evaluated from the previous position and velocity;
    velocity and position are advanced with the previous step's derivatives.
    """
    alpha, beta = _gains(params, config)
    x = canonical_step(state.x, config)
    with np.errstate(all="ignore"):
        y_ddot = alpha * (beta * (params.g - state.y) - state.y_dot) + forcing(x, params, y0, config)
        y_dot = state.y_dot + state.y_ddot * config.dt
        y = state.y + state.y_dot * config.dt
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_dot)) and np.all(np.isfinite(y_ddot))):
        raise IntegrationDivergedError("non-finite state after integration step")
    return DmpState(y, y_dot, y_ddot, x)


def phases(config: DmpConfig) -> np.ndarray:
    """Phase values ``x_0 .. x_m`` of one rollout."""
    x = np.empty(config.m_steps + 1)
    x[0] = 1.0
    for t in range(1, config.m_steps + 1):
        x[t] = canonical_step(x[t - 1], config)
    return x


def rollout(params: DmpParams, y0, y0_dot, config: DmpConfig) -> RolloutTape:
    """Unroll the integrator for ``config.m_steps`` steps from ``(y0, y0_dot)``."""
    y0 = np.asarray(y0, dtype=float)
    y0_dot = np.asarray(y0_dot, dtype=float)
    if params.w.shape[-1] != config.n_basis:
        raise ShapeError(f"w has {params.w.shape[-1]} basis columns, config expects {config.n_basis}")
    shape = np.broadcast_shapes(params.g.shape, y0.shape, y0_dot.shape)
    m = config.m_steps
    dt = config.dt
    x = phases(config)
    psi = basis_eval(x[1:], config)
    if config.zero_forcing:
        f = np.zeros((m,) + shape)
    else:
        phi = normalized_basis(x[1:], config)  # [m, n]
        f = np.einsum("...dn,tn->t...d", params.w, phi) * (params.g - y0)
    alpha, beta = _gains(params, config)
    y = np.empty((m + 1,) + shape)
    yd = np.empty_like(y)
    ydd = np.empty_like(y)
    y[0] = y0
    yd[0] = y0_dot
    ydd[0] = 0.0
    g = params.g
    with np.errstate(all="ignore"):
        for t in range(1, m + 1):
            ydd[t] = alpha * (beta * (g - y[t - 1]) - yd[t - 1]) + f[t - 1]
            yd[t] = yd[t - 1] + ydd[t - 1] * dt
            y[t] = y[t - 1] + yd[t - 1] * dt
    if not (np.isfinite(y).all() and np.isfinite(yd).all() and np.isfinite(ydd).all()):
        raise IntegrationDivergedError("rollout produced a non-finite state")
    return RolloutTape(y, yd, ydd, x, psi, params.copy(), config, y0.copy(), y0_dot.copy())


def subsample_indices(m_steps: int, k: int) -> np.ndarray:
    """Tape indices kept when sub-sampling ``k`` actions: ``m/k, 2m/k, ..., m``."""
    if k < 1 or k > m_steps or m_steps % k:
        raise ConfigError(f"k={k} must divide m_steps={m_steps}")
    stride = m_steps // k
    return np.arange(stride, m_steps + 1, stride)


def subsample(tape: RolloutTape, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Positions and velocities at the ``k`` sub-sampled indices, each ``[k, ..., dof]``."""
    idx = subsample_indices(tape.config.m_steps, k)
    return tape.y[idx], tape.y_dot[idx]
