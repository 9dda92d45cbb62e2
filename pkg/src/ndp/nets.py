"""Small numpy MLPs with manual backprop, the DMP parameter head, Adam and checkpoints."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dmp import DmpParams
from .errors import NumericalError, ShapeError

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden_dims: tuple[int, ...] = (100, 100)
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if min((self.input_dim, self.output_dim) + self.hidden_dims) < 1:
            raise ValueError("all layer sizes must be positive")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim,) + self.hidden_dims + (self.output_dim,)


class Mlp:
    """Fully connected tanh network with a linear output layer.

    Weights are stored as ``[fan_in, fan_out]`` so a batch ``[B, fan_in]``
    multiplies from the left.
    """

    def __init__(self, spec: MlpSpec, rng: np.random.Generator | None = None, final_scale: float = 1.0):
        self.spec = spec
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        sizes = spec.sizes
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            if rng is None:
                W = np.zeros((fan_in, fan_out))
                b = np.zeros(fan_out)
            else:
                W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                b = rng.uniform(-bound, bound, size=fan_out)
            if i == len(sizes) - 2:
                W *= final_scale
                b *= final_scale
            self.weights.append(W)
            self.biases.append(b)

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.spec.input_dim:
            raise ShapeError(f"input has {x.shape[-1]} features, network expects {self.spec.input_dim}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache: list[np.ndarray], grad_out: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients (ordered like :attr:`params`) for upstream ``dL/d(output)``."""
        if len(cache) != len(self.weights) + 1 or cache[-1].shape != np.shape(grad_out):
            raise ShapeError("cache does not belong to a forward pass producing this gradient's shape")
        grads: list[np.ndarray] = []
        delta = np.asarray(grad_out, dtype=float)
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = cache[i]
            dW = a_in.reshape(-1, a_in.shape[-1]).T @ delta.reshape(-1, delta.shape[-1])
            db = delta.reshape(-1, delta.shape[-1]).sum(axis=0)
            grads = [dW, db] + grads
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - a_in**2)
        return grads

    def input_grad(self, cache, grad_out) -> np.ndarray:
        delta = np.asarray(grad_out, dtype=float)
        for i in range(len(self.weights) - 1, -1, -1):
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * (1.0 - cache[i] ** 2)
        return delta

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}W{i}"] = W
            out[f"{prefix}b{i}"] = b
        return out

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        for i in range(len(self.weights)):
            W = state[f"{prefix}W{i}"]
            b = state[f"{prefix}b{i}"]
            if W.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ShapeError(f"layer {i} shape mismatch while loading")
            self.weights[i][...] = W
            self.biases[i][...] = b


@dataclass(frozen=True)
class DmpHead:
    """How a flat network output maps onto DMP parameters.

    The first ``dof * n_basis`` outputs are forcing weights (times ``w_scale``),
    the next ``dof`` are a goal offset added to the start position, and with
    ``learn_alpha`` the last output sets ``alpha = softplus(out + softplus^-1(alpha0))``.
    """

    dof: int
    n_basis: int
    w_scale: float = 1.0
    learn_alpha: bool = False
    alpha0: float = 25.0

    @property
    def output_dim(self) -> int:
        return self.dof * (self.n_basis + 1) + (1 if self.learn_alpha else 0)

    def split(self, out: np.ndarray, y0: np.ndarray) -> DmpParams:
        nw = self.dof * self.n_basis
        w = out[..., :nw].reshape(out.shape[:-1] + (self.dof, self.n_basis)) * self.w_scale
        g = np.asarray(y0) + out[..., nw:nw + self.dof]
        alpha = None
        if self.learn_alpha:
            alpha = _softplus(out[..., -1] + _softplus_inv(self.alpha0))
        return DmpParams(w, g, alpha)

    def join_grads(self, out: np.ndarray, d_w, d_g, d_alpha=None) -> np.ndarray:
        grad = np.zeros_like(out)
        nw = self.dof * self.n_basis
        grad[..., :nw] = np.asarray(d_w).reshape(out.shape[:-1] + (nw,)) * self.w_scale
        grad[..., nw:nw + self.dof] = d_g
        if self.learn_alpha and d_alpha is not None:
            grad[..., -1] = d_alpha * _sigmoid(out[..., -1] + _softplus_inv(self.alpha0))
        return grad


def _softplus(z):
    return np.logaddexp(0.0, z)


def _softplus_inv(a):
    return float(np.log(np.expm1(a)))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class PolicyParams:
    """Actor network plus the state-independent Gaussian log-std (RL only)."""

    net: Mlp
    log_std: np.ndarray | None = None

    @property
    def arrays(self) -> list[np.ndarray]:
        return self.net.params + ([] if self.log_std is None else [self.log_std])


@dataclass
class CriticHeads:
    """Value network whose ``k`` linear outputs are the per-sub-step heads."""

    net: Mlp

    @property
    def k(self) -> int:
        return self.net.spec.output_dim


def make_actor(input_dim: int, head: DmpHead, rng, hidden=(100, 100), action_dim: int | None = None) -> PolicyParams:
    spec = MlpSpec(input_dim, head.output_dim, tuple(hidden))
    log_std = None if action_dim is None else np.zeros(action_dim)
    return PolicyParams(Mlp(spec, rng, final_scale=0.01), log_std)


def make_critic(input_dim: int, k: int, rng, hidden=(100, 100)) -> CriticHeads:
    return CriticHeads(Mlp(MlpSpec(input_dim, k, tuple(hidden)), rng))


def actor_forward(s, params: PolicyParams, head: DmpHead, y0) -> tuple[DmpParams, tuple]:
    """Network outputs mapped to DMP parameters; the cache feeds :func:`actor_backward`."""
    out, acts = params.net.forward(s)
    return head.split(out, y0), (out, acts)


def actor_backward(cache, params: PolicyParams, head: DmpHead, d_w, d_g, d_alpha=None) -> list[np.ndarray]:
    out, acts = cache
    return params.net.backward(acts, head.join_grads(out, d_w, d_g, d_alpha))


def critic_forward(s, heads: CriticHeads) -> tuple[np.ndarray, list]:
    return heads.net.forward(s)


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_grads(grads, max_norm: float | None):
    norm = global_norm(grads)
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        grads = [g * scale for g in grads]
    return grads, norm


class Adam:
    """Adam over a fixed list of arrays, updated in place, with global-norm clipping."""

    def __init__(self, params: list[np.ndarray], lr: float = 3e-4, betas=(0.9, 0.999),
                 eps: float = 1e-5, max_grad_norm: float | None = 0.5):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> float:
        """Apply one update; returns the pre-clipping gradient norm."""
        if len(grads) != len(self.params) or any(g.shape != p.shape for g, p in zip(grads, self.params)):
            raise ShapeError("gradient list does not match parameter list")
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise NumericalError("non-finite gradient; aborting update")
        grads, norm = clip_grads(grads, self.max_grad_norm)
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm


class RunningMeanStd:
    """Streaming mean/variance (parallel-merge form) used to normalise observations."""

    def __init__(self, shape=(), epsilon: float = 1e-4):
        self.mean = np.zeros(shape)
        self.var = np.ones(shape)
        self.count = epsilon

    def update(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=float).reshape((-1,) + self.mean.shape)
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        b_count = batch.shape[0]
        delta = b_mean - self.mean
        total = self.count + b_count
        self.mean = self.mean + delta * b_count / total
        m2 = self.var * self.count + b_var * b_count + delta**2 * self.count * b_count / total
        self.var = m2 / total
        self.count = total

    def normalize(self, x, clip: float = 10.0) -> np.ndarray:
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8), -clip, clip)


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> Path:
    """Write named tensors (shape and dtype preserved) with a format version tag."""
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    payload = {k: np.asarray(v) for k, v in tensors.items()}
    payload["__version__"] = np.array(CHECKPOINT_VERSION)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    return path


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["__version__"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        return {k: data[k].copy() for k in data.files if k != "__version__"}


@dataclass
class TrainLog:
    """Append-only list of metric dicts, one per logging event."""

    records: list[dict] = field(default_factory=list)

    def add(self, **fields) -> None:
        self.records.append(fields)

    def series(self, key: str) -> list:
        return [r[key] for r in self.records if key in r]
