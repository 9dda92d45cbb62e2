"""Analytical derivatives of a rolled-out primitive with respect to ``w`` and ``g``.

The sensitivities ``W_t = dy_t/dw`` and ``G_t = dy_t/dg`` obey the same
delayed Euler recursion as the states themselves, so they are propagated
forward alongside the tape rather than by a reverse sweep.  Each dof is an
independent system, which keeps ``G_t`` diagonal: it is stored as ``[..., dof]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dmp import DmpConfig, DmpParams, RolloutTape, normalized_basis, rollout, subsample_indices
from .errors import ShapeError

FD_STEP = 1e-5
REL_FLOOR = 1e-8


@dataclass
class DmpGradients:
    """Trajectory Jacobians, shapes ``[m+1, ..., dof, n_basis]`` and ``[m+1, ..., dof]``."""

    d_y_d_w: np.ndarray
    d_y_d_g: np.ndarray
    d_ydot_d_w: np.ndarray
    d_ydot_d_g: np.ndarray
    d_loss_d_w: np.ndarray | None = None
    d_loss_d_g: np.ndarray | None = None


def forcing_partials(x, params: DmpParams, y0, config: DmpConfig) -> tuple[np.ndarray, np.ndarray]:
    """Partials of the forcing term at phase ``x``.

    Returns ``df/dw`` with shape ``[..., dof, n_basis]`` and ``df/dg`` with
    shape ``[..., dof]`` (the forcing of dof ``d`` only depends on ``g[d]``).
    """
    y0 = np.asarray(y0, dtype=float)
    shape = np.broadcast_shapes(params.g.shape, y0.shape)
    if config.zero_forcing:
        return np.zeros(shape + (config.n_basis,)), np.zeros(shape)
    phi = normalized_basis(x, config)
    df_dw = (params.g - y0)[..., None] * phi
    df_dg = params.w @ phi
    return np.broadcast_to(df_dw, shape + (config.n_basis,)).copy(), np.broadcast_to(df_dg, shape).copy()


def trajectory_jacobians(tape: RolloutTape) -> DmpGradients:
    """Forward sensitivity recursion over the whole tape.

    Seeds are zero at ``t = 0``; ``W_1``, ``G_1`` and ``W_2``, ``G_2`` then come
    out as exactly zero because positions lag accelerations by two steps.
    """
    cfg = tape.config
    params = tape.params
    m = cfg.m_steps
    if tape.y.shape[0] != m + 1 or tape.psi.shape[0] != m:
        raise ShapeError(f"tape of length {tape.y.shape[0]} does not match m_steps={m}")
    if params.w.shape[-1] != cfg.n_basis:
        raise ShapeError("tape parameters do not match the basis count")
    dt = cfg.dt
    shape = tape.y.shape[1:]
    n = cfg.n_basis
    if params.alpha is None:
        alpha, beta = cfg.alpha, cfg.beta
    else:
        alpha, beta = params.alpha[..., None], params.alpha[..., None] / 4.0

    if cfg.zero_forcing:
        dfw = np.zeros((m,) + shape + (n,))
        dfg = np.zeros((m,) + shape)
    else:
        phi = normalized_basis(tape.x[1:], cfg)  # [m, n]
        diff = np.broadcast_to(params.g - tape.y0, shape)
        dfw = diff[None, ..., None] * phi.reshape((m,) + (1,) * len(shape) + (n,))
        dfg = np.einsum("...dn,tn->t...d", np.broadcast_to(params.w, shape + (n,)), phi)

    W = np.zeros((m + 1,) + shape + (n,))
    Wd = np.zeros_like(W)
    Wdd = np.zeros_like(W)
    G = np.zeros((m + 1,) + shape)
    Gd = np.zeros_like(G)
    Gdd = np.zeros_like(G)
    a_w = alpha if np.ndim(alpha) == 0 else alpha[..., None]
    b_w = beta if np.ndim(beta) == 0 else beta[..., None]
    for t in range(1, m + 1):
        Wdd[t] = a_w * (-b_w * W[t - 1] - Wd[t - 1]) + dfw[t - 1]
        Wd[t] = Wd[t - 1] + Wdd[t - 1] * dt
        W[t] = W[t - 1] + Wd[t - 1] * dt
        Gdd[t] = alpha * (beta * (1.0 - G[t - 1]) - Gd[t - 1]) + dfg[t - 1]
        Gd[t] = Gd[t - 1] + Gdd[t - 1] * dt
        G[t] = G[t - 1] + Gd[t - 1] * dt
    return DmpGradients(W, G, Wd, Gd)


def _upstream_indices(tape: RolloutTape, upstream: np.ndarray, k: int | None) -> np.ndarray:
    m = tape.config.m_steps
    idx = np.arange(m + 1) if k is None else subsample_indices(m, k)
    if upstream.shape != (len(idx),) + tape.y.shape[1:]:
        raise ShapeError(
            f"upstream shape {upstream.shape} does not match {(len(idx),) + tape.y.shape[1:]}"
        )
    return idx


def backward(tape: RolloutTape, upstream, k: int | None = None,
             jacobians: DmpGradients | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Chain ``dL/dy_t`` through the Jacobians into ``(dL/dw, dL/dg)``.

    ``upstream`` covers every tape state (``k=None``, shape ``[m+1, ..., dof]``)
    or only the ``k`` sub-sampled states (shape ``[k, ..., dof]``).
    """
    upstream = np.asarray(upstream, dtype=float)
    idx = _upstream_indices(tape, upstream, k)
    jac = jacobians if jacobians is not None else trajectory_jacobians(tape)
    d_w = np.einsum("t...d,t...dn->...dn", upstream, jac.d_y_d_w[idx])
    d_g = np.einsum("t...d,t...d->...d", upstream, jac.d_y_d_g[idx])
    return d_w, d_g


def alpha_sensitivity(tape: RolloutTape, h: float = FD_STEP) -> np.ndarray:
    """``dy_t/dalpha`` (with ``beta = alpha/4`` tied) by central differences, ``[m+1, ..., dof]``."""
    params = tape.params
    base = params.alpha if params.alpha is not None else np.full(params.batch_shape, tape.config.alpha)
    plus = DmpParams(params.w, params.g, base + h)
    minus = DmpParams(params.w, params.g, base - h)
    y_plus = rollout(plus, tape.y0, tape.y0_dot, tape.config).y
    y_minus = rollout(minus, tape.y0, tape.y0_dot, tape.config).y
    return (y_plus - y_minus) / (2.0 * h)


def alpha_backward(tape: RolloutTape, upstream, k: int | None = None, h: float = FD_STEP) -> np.ndarray:
    """``dL/dalpha`` per batch element, from the finite-difference sensitivity."""
    upstream = np.asarray(upstream, dtype=float)
    idx = _upstream_indices(tape, upstream, k)
    return np.einsum("t...d,t...d->...", upstream, alpha_sensitivity(tape, h)[idx])


@dataclass
class FdReport:
    max_rel_error: float
    parameter: str
    index: tuple
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= 1e-4


def relative_error(analytic, numeric, floor: float = REL_FLOOR) -> np.ndarray:
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def fd_jacobians(params: DmpParams, y0, y0_dot, config: DmpConfig, h: float = FD_STEP,
                 dtype=np.longdouble) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference Jacobians of the position trajectory for a single (unbatched) primitive.

    The perturbed rollouts run in ``dtype`` (extended precision by default) so
    that round-off stays far below the tolerance for tiny Jacobian entries.
    Returns arrays shaped like :class:`DmpGradients` ``d_y_d_w`` and the full
    ``[m+1, dof, dof]`` goal Jacobian.
    """
    if params.alpha is not None:
        config = config.replace(alpha=float(params.alpha), beta=float(params.alpha) / 4.0)
    w = np.asarray(params.w, dtype=dtype)
    g = np.asarray(params.g, dtype=dtype)
    y0 = np.asarray(y0, dtype=dtype)
    y0_dot = np.asarray(y0_dot, dtype=dtype)
    dof, n = w.shape
    m = config.m_steps

    def run(w_, g_):
        return _reference_positions(w_, g_, y0, y0_dot, config, dtype)

    d_w = np.zeros((m + 1, dof, n), dtype=dtype)
    for d in range(dof):
        for i in range(n):
            wp = w.copy()
            wm = w.copy()
            wp[d, i] += h
            wm[d, i] -= h
            d_w[:, d, i] = ((run(wp, g) - run(wm, g)) / (2 * h))[:, d]
    d_g = np.zeros((m + 1, dof, dof), dtype=dtype)
    for d in range(dof):
        gp = g.copy()
        gm = g.copy()
        gp[d] += h
        gm[d] -= h
        d_g[:, :, d] = (run(w, gp) - run(w, gm)) / (2 * h)
    return d_w.astype(float), d_g.astype(float)


def _reference_positions(w, g, y0, y0_dot, config: DmpConfig, dtype=float) -> np.ndarray:
    """Straight-line integrator written independently of :func:`ndp.dmp.rollout`."""
    n = config.n_basis
    one = dtype(1)
    dt = dtype(config.dt)
    alpha = dtype(config.alpha)
    beta = dtype(config.beta)
    centers = np.array([np.exp(-dtype(i) * dtype(config.a_x) / dtype(n)) for i in range(1, n + 1)], dtype=dtype)
    widths = dtype(n) / centers
    y, yd, ydd, x = y0.copy(), y0_dot.copy(), np.zeros_like(y0), one
    out = [y.copy()]
    for _ in range(config.m_steps):
        x = x - dtype(config.a_x) * x * dt
        if config.zero_forcing:
            f = np.zeros_like(y0)
        else:
            psi = _reference_basis(x, centers, widths, config, dtype)
            f = (w @ psi) / psi.sum() * x * (g - y0)
        new_ydd = alpha * (beta * (g - y) - yd) + f
        new_yd = yd + ydd * dt
        new_y = y + yd * dt
        y, yd, ydd = new_y, new_yd, new_ydd
        out.append(y.copy())
    return np.array(out, dtype=dtype)


def _reference_basis(x, centers, widths, config: DmpConfig, dtype):
    kind = config.basis.value
    if kind == "gaussian":
        return np.exp(-widths * (x - centers) ** 2)
    e = dtype(config.epsilon)
    r = np.full(config.n_basis, (e * x) ** 2, dtype=dtype)
    return {
        "linear": np.full(config.n_basis, x, dtype=dtype),
        "multiquadric": np.sqrt(1 + r),
        "inverse_quadric": 1 / (1 + r),
        "inverse_multiquadric": 1 / np.sqrt(1 + r),
    }[kind]


def fd_check(params: DmpParams, y0, y0_dot, config: DmpConfig, h: float = FD_STEP,
             jacobian_fn=trajectory_jacobians) -> FdReport:
    """Compare analytic trajectory Jacobians against central differences.

    ``jacobian_fn`` is injectable so a deliberately broken recursion can be
    shown to fail the check.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"finite-difference step {h} outside [1e-7, 1e-3]")
    tape = rollout(params, y0, y0_dot, config)
    jac = jacobian_fn(tape)
    fd_w, fd_g = fd_jacobians(params, y0, y0_dot, config, h)
    dof = params.dof
    analytic_g = np.zeros_like(fd_g)
    for d in range(dof):
        analytic_g[:, d, d] = jac.d_y_d_g[:, d]
    err_w = relative_error(jac.d_y_d_w, fd_w)
    err_g = relative_error(analytic_g, fd_g)
    iw = np.unravel_index(np.argmax(err_w), err_w.shape)
    ig = np.unravel_index(np.argmax(err_g), err_g.shape)
    n_checked = err_w.size + err_g.size
    if err_w[iw] >= err_g[ig]:
        return FdReport(float(err_w[iw]), "w", tuple(int(i) for i in iw), n_checked)
    return FdReport(float(err_g[ig]), "g", tuple(int(i) for i in ig), n_checked)


def random_instance(rng: np.random.Generator, max_dof: int = 3, max_basis: int = 10, max_steps: int = 50,
                    basis: str = "gaussian"):
    """A random ``(params, y0, y0_dot, config)`` problem for gradient checking."""
    dof = int(rng.integers(1, max_dof + 1))
    n = int(rng.integers(1, max_basis + 1))
    m = int(rng.integers(min(10, max_steps), max_steps + 1))
    config = DmpConfig(n_basis=n, m_steps=m, k_rollout=1, basis=basis)
    params = DmpParams(rng.normal(0.0, 20.0, (dof, n)), rng.uniform(-1.0, 1.0, dof))
    return params, rng.uniform(-1.0, 1.0, dof), rng.normal(0.0, 1.0, dof), config


def gradient_sweep(instances: int = 50, seed: int = 0, max_dof: int = 3, max_basis: int = 10,
                   max_steps: int = 50, h: float = FD_STEP, jacobian_fn=trajectory_jacobians) -> list[FdReport]:
    """:func:`fd_check` over a seeded batch of random problems."""
    rng = np.random.default_rng(seed)
    return [fd_check(*random_instance(rng, max_dof, max_basis, max_steps), h=h, jacobian_fn=jacobian_fn)
            for _ in range(instances)]
