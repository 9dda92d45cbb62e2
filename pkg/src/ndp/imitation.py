"""Behaviour cloning through the DMP layer, plus a synthetic planar digit-stroke task.

Each digit class is a fixed smooth curve (a cubic B-spline through hand-placed
control points); samples apply a small random affine jitter.  The condition
vector given to a policy is the one-hot class, optionally followed by an 8x8
raster of the sample.  The start point is not part of it: an NDP receives the
start as its initial state, while the direct baseline has to predict the
absolute trajectory from the condition alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import interpolate

from .dmp import DmpConfig, rollout, subsample_indices
from .errors import ConfigError, NumericalError, ShapeError
from .gradients import alpha_backward, backward, trajectory_jacobians
from .nets import Adam, DmpHead, Mlp, MlpSpec, PolicyParams, TrainLog

N_CLASSES = 10
RASTER = 8

# Open strokes in [-1, 1]^2.  Every stroke moves at least 0.4 along each axis
# between its start and end, so the goal displacement that scales the
# forcing term stays well away from zero under jitter.
DIGIT_CONTROL_POINTS: dict[int, list[tuple[float, float]]] = {
    0: [(-0.1, 0.65), (-0.4, 0.3), (-0.4, -0.25), (0.0, -0.6), (0.4, -0.25), (0.4, 0.1)],
    1: [(-0.3, 0.35), (0.0, 0.6), (0.05, 0.0), (0.15, -0.6)],
    2: [(-0.4, 0.3), (-0.1, 0.6), (0.3, 0.5), (0.35, 0.1), (-0.4, -0.6), (0.45, -0.6)],
    3: [(-0.45, 0.5), (0.3, 0.55), (0.05, 0.05), (0.4, -0.3), (0.1, -0.6)],
    4: [(0.1, -0.6), (0.2, 0.6), (-0.45, -0.15), (0.5, -0.15)],
    5: [(0.4, 0.6), (-0.3, 0.6), (-0.35, 0.05), (0.3, 0.05), (0.35, -0.45), (-0.4, -0.55)],
    6: [(0.3, 0.6), (-0.3, 0.2), (-0.35, -0.4), (0.1, -0.6), (0.35, -0.25), (0.0, 0.0), (-0.35, -0.25)],
    7: [(-0.45, 0.6), (0.4, 0.6), (0.25, 0.0), (0.05, -0.6)],
    8: [(0.35, 0.45), (0.0, 0.62), (-0.35, 0.4), (0.0, 0.0), (0.35, -0.35), (0.0, -0.62), (-0.4, -0.4)],
    9: [(0.4, 0.4), (0.0, 0.6), (-0.35, 0.3), (0.0, 0.05), (0.35, 0.3), (-0.05, -0.6)],
}


@dataclass
class StrokeSpec:
    digit: int
    control_points: np.ndarray
    T: int = 300
    noise: float = 0.05

    def curve(self) -> np.ndarray:
        """The noiseless class curve at ``T`` time samples.

        The pen moves along the spline at constant speed.
        """
        pts = np.asarray(self.control_points, dtype=float)
        degree = min(3, len(pts) - 1)
        tck, _ = interpolate.splprep(pts.T, k=degree, s=0.0)
        dense = np.stack(interpolate.splev(np.linspace(0.0, 1.0, 4000), tck), axis=-1)
        arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(dense, axis=0), axis=-1))])
        tau = np.linspace(0.0, 1.0, self.T)
        progress = tau * arc[-1]
        return np.stack([np.interp(progress, arc, dense[:, i]) for i in range(2)], axis=-1)


@dataclass
class Demonstration:
    condition: np.ndarray
    target: np.ndarray
    digit: int = -1

    @property
    def start(self) -> np.ndarray:
        return self.target[0]

    @property
    def T(self) -> int:
        return len(self.target)


def stroke_spec(digit: int, T: int = 300, noise: float = 0.05) -> StrokeSpec:
    return StrokeSpec(digit, np.asarray(DIGIT_CONTROL_POINTS[digit]), T, noise)


def rasterize(stroke: np.ndarray, size: int = RASTER) -> np.ndarray:
    hist, _, _ = np.histogram2d(stroke[:, 0], stroke[:, 1], bins=size, range=[[-1, 1], [-1, 1]])
    return (hist > 0).astype(float).ravel()


def make_condition(digit: int, stroke: np.ndarray, raster: bool = False) -> np.ndarray:
    onehot = np.zeros(N_CLASSES)
    onehot[digit] = 1.0
    parts = [onehot]
    if raster:
        parts.append(rasterize(stroke))
    return np.concatenate(parts)


def _jitter(curve: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    angle = 2.0 * noise * rng.standard_normal()
    scale = 1.0 + noise * rng.standard_normal(2)
    shift = 2.0 * noise * rng.standard_normal(2)
    c, s = np.cos(angle), np.sin(angle)
    A = np.array([[c, -s], [s, c]]) @ np.diag(scale)
    return curve @ A.T + shift


def generate_digit_dataset(num_per_class: int, T: int = 300, seed: int = 0, noise: float = 0.05,
                           classes=range(N_CLASSES), raster: bool = False) -> list[Demonstration]:
    """Jittered copies of each class curve; identical output for identical arguments."""
    if T < 2:
        raise ConfigError("T must be at least 2")
    rng = np.random.default_rng(seed)
    data = []
    for digit in classes:
        base = stroke_spec(digit, T, noise).curve()
        for _ in range(num_per_class):
            target = _jitter(base, noise, rng)
            data.append(Demonstration(make_condition(digit, target, raster), target, digit))
    return data


def split_dataset(data: list[Demonstration], held_out: float = 0.2, seed: int = 0):
    """Seeded per-class split into (train, held-out)."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    for digit in sorted({d.digit for d in data}):
        members = [d for d in data if d.digit == digit]
        order = rng.permutation(len(members))
        n_test = int(round(held_out * len(members)))
        test += [members[i] for i in order[:n_test]]
        train += [members[i] for i in order[n_test:]]
    return train, test


def arc_length(curve: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(curve, axis=0), axis=-1).sum())


def bc_loss(predicted, target) -> float:
    """Sum over timesteps of squared Euclidean distance."""
    predicted = np.asarray(predicted, dtype=float)
    target = np.asarray(target, dtype=float)
    if predicted.shape != target.shape:
        raise ShapeError(f"predicted {predicted.shape} and target {target.shape} differ")
    return float(np.sum((predicted - target) ** 2))


def per_point_loss(predicted, target) -> float:
    predicted = np.asarray(predicted, dtype=float)
    n_points = int(np.prod(predicted.shape[:-1])) if predicted.ndim > 1 else 1
    return bc_loss(predicted, target) / n_points


def max_second_difference(traj: np.ndarray) -> float:
    """``max_t ||y[t+1] - 2 y[t] + y[t-1]||`` over a ``[T, dim]`` trajectory."""
    d2 = traj[2:] - 2.0 * traj[1:-1] + traj[:-2]
    return float(np.linalg.norm(d2, axis=-1).max()) if len(d2) else 0.0


def _stack(data: list[Demonstration]):
    cond = np.stack([d.condition for d in data])
    target = np.stack([d.target for d in data])
    return cond, target


@dataclass
class ImitationModel:
    """A trained imitation policy of either kind (``"ndp"`` or ``"direct"``)."""

    kind: str
    params: PolicyParams
    T: int
    head: DmpHead | None = None
    config: DmpConfig | None = None

    def predict(self, cond: np.ndarray, start: np.ndarray) -> np.ndarray:
        """Trajectories ``[B, T, 2]`` for conditions ``[B, C]`` and start points ``[B, 2]``."""
        out = self.params.net(cond)
        if self.kind == "direct":
            return out.reshape(len(cond), self.T, 2)
        dmp = self.head.split(out, start)
        tape = rollout(dmp, start, np.zeros_like(start), self.config)
        idx = subsample_indices(self.config.m_steps, self.T)
        return np.swapaxes(tape.y[idx], 0, 1)

    def evaluate(self, data: list[Demonstration]) -> float:
        if not data:
            return float("nan")
        cond, target = _stack(data)
        return per_point_loss(self.predict(cond, target[:, 0]), target)


def ndp_loss_and_grads(model: ImitationModel, cond: np.ndarray, target: np.ndarray):
    """Mean-over-batch of the summed loss, and its gradients for every actor array."""
    net = model.params.net
    head = model.head
    cfg = model.config
    out, acts = net.forward(cond)
    start = target[:, 0]
    dmp = head.split(out, start)
    tape = rollout(dmp, start, np.zeros_like(start), cfg)
    idx = subsample_indices(cfg.m_steps, model.T)
    pred = tape.y[idx]  # [T, B, 2]
    tgt = np.swapaxes(target, 0, 1)
    B = len(cond)
    loss = float(np.sum((pred - tgt) ** 2)) / B
    upstream = 2.0 * (pred - tgt) / B
    d_w, d_g = backward(tape, upstream, k=model.T, jacobians=trajectory_jacobians(tape))
    d_alpha = alpha_backward(tape, upstream, k=model.T) if head.learn_alpha else None
    grads = net.backward(acts, head.join_grads(out, d_w, d_g, d_alpha))
    return loss, grads


def direct_loss_and_grads(model: ImitationModel, cond: np.ndarray, target: np.ndarray):
    net = model.params.net
    out, acts = net.forward(cond)
    B = len(cond)
    diff = out - target.reshape(B, -1)
    loss = float(np.sum(diff**2)) / B
    return loss, net.backward(acts, 2.0 * diff / B)


def _fit(model: ImitationModel, loss_fn, train, held_out, epochs, batch_size, lr, seed, log_every):
    log = TrainLog()
    rng = np.random.default_rng(seed + 1)
    opt = Adam(model.params.net.params, lr=lr)
    cond, target = _stack(train)
    log.add(epoch=0, train_loss=model.evaluate(train), held_out_loss=model.evaluate(held_out))
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train))
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            loss, grads = loss_fn(model, cond[batch], target[batch])
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite imitation loss at epoch {epoch}")
            opt.step(grads)
        if epoch % log_every == 0 or epoch == epochs:
            log.add(epoch=epoch, train_loss=model.evaluate(train), held_out_loss=model.evaluate(held_out))
    return model, log


def train_imitation(train: list[Demonstration], held_out: list[Demonstration] | None = None,
                    hidden=(100, 100), config: DmpConfig | None = None, epochs: int = 150,
                    batch_size: int = 16, lr: float = 3e-3, w_scale: float = 1000.0, seed: int = 0,
                    log_every: int = 10) -> tuple[ImitationModel, TrainLog]:
    """Fit an NDP (network -> (w, g) -> rollout -> sub-sample) to demonstrations.

    The loss is the summed squared distance over the trajectory, averaged over
    the minibatch.  ``w_scale`` multiplies the raw weight outputs: the stroke
    shapes need forcing weights in the hundreds to thousands.
    """
    held_out = held_out or []
    T = train[0].T
    if config is None:
        config = DmpConfig(n_basis=15, m_steps=T, k_rollout=T)
    if config.k_rollout != T:
        raise ConfigError(f"imitation needs k_rollout == T ({config.k_rollout} != {T})")
    rng = np.random.default_rng(seed)
    head = DmpHead(dof=2, n_basis=config.n_basis, w_scale=w_scale,
                   learn_alpha=config.learn_alpha, alpha0=config.alpha)
    net = Mlp(MlpSpec(len(train[0].condition), head.output_dim, tuple(hidden)), rng, final_scale=0.01)
    model = ImitationModel("ndp", PolicyParams(net), T, head, config)
    return _fit(model, ndp_loss_and_grads, train, held_out, epochs, batch_size, lr, seed, log_every)


def matched_width(input_dim: int, output_dim: int, target_params: int, depth: int = 2) -> int:
    """Hidden width (equal across ``depth`` layers) whose MLP has the closest parameter count."""
    return min(range(1, 1000),
               key=lambda h: abs(_count((input_dim,) + (h,) * depth + (output_dim,)) - target_params))


def _count(sizes) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def baseline_train_direct(train: list[Demonstration], held_out: list[Demonstration] | None = None,
                          hidden=None, match_params: int | None = None, epochs: int = 150,
                          batch_size: int = 16, lr: float = 3e-3, seed: int = 0,
                          log_every: int = 10) -> tuple[ImitationModel, TrainLog]:
    """Regress the raw ``T x 2`` trajectory directly from the condition.

    With ``match_params`` the two hidden layers are sized so the total
    parameter count matches the NDP actor.
    """
    held_out = held_out or []
    T = train[0].T
    C = len(train[0].condition)
    if hidden is None:
        width = matched_width(C, 2 * T, match_params) if match_params else 100
        hidden = (width, width)
    rng = np.random.default_rng(seed)
    net = Mlp(MlpSpec(C, 2 * T, tuple(hidden)), rng)
    model = ImitationModel("direct", PolicyParams(net), T)
    return _fit(model, direct_loss_and_grads, train, held_out, epochs, batch_size, lr, seed, log_every)


def save_dataset(path, data: list[Demonstration]) -> None:
    """Line-delimited JSON, one record per demonstration."""
    with open(path, "w") as fh:
        for d in data:
            rec = {"digit": d.digit, "condition": d.condition.tolist(), "T": d.T,
                   "target": d.target.ravel().tolist()}
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> list[Demonstration]:
    data = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        target = np.asarray(rec["target"], dtype=float).reshape(rec["T"], -1)
        data.append(Demonstration(np.asarray(rec["condition"], dtype=float), target, rec.get("digit", -1)))
    return data


def write_trajectory_csv(path, traj: np.ndarray) -> None:
    lines = ["t,x,y"] + [f"{t},{float(p[0])!r},{float(p[1])!r}" for t, p in enumerate(np.asarray(traj, dtype=float))]
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path) -> np.ndarray:
    rows = Path(path).read_text().splitlines()[1:]
    return np.array([[float(v) for v in r.split(",")[1:3]] for r in rows if r]).reshape(-1, 2)
