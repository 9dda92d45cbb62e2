from __future__ import annotations

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ndp.dmp import (BasisKind, DmpConfig, DmpParams, DmpState, basis_eval, canonical_step, forcing,
                     normalized_basis, phases, rollout, step, subsample, subsample_indices)
from ndp.errors import ConfigError, DomainError, IntegrationDivergedError, ShapeError, SingularBasisError

mpmath.mp.dps = 40


def _mp_gaussian(n, a_x, x):
    out = []
    for i in range(1, n + 1):
        c = mpmath.e ** (-mpmath.mpf(i) * a_x / n)
        h = n / c
        out.append(mpmath.e ** (-h * (mpmath.mpf(x) - c) ** 2))
    return out


def _scalar_reference(w, g, y0, yd0, cfg):
    """Per-dof scalar integrator written from the update equations, for cross-checking."""
    dof, n = w.shape
    rows = []
    for d in range(dof):
        y, yd, ydd, x = y0[d], yd0[d], 0.0, 1.0
        traj = [y]
        for _ in range(cfg.m_steps):
            x = x - cfg.a_x * x * cfg.dt
            psi = [np.exp(-cfg.widths[i] * (x - cfg.centers[i]) ** 2) for i in range(n)]
            f = sum(psi[i] * w[d, i] for i in range(n)) / sum(psi) * x * (g[d] - y0[d])
            y, yd, ydd = y + yd * cfg.dt, yd + ydd * cfg.dt, cfg.alpha * (cfg.beta * (g[d] - y) - yd) + f
            traj.append(y)
        rows.append(traj)
    return np.array(rows).T


class TestConfig:
    def test_defaults_critically_damped(self):
        cfg = DmpConfig()
        assert cfg.beta == cfg.alpha / 4
        assert cfg.dt * cfg.m_steps == pytest.approx(1.0)

    def test_explicit_beta_kept(self):
        assert DmpConfig(beta=3.0).beta == 3.0

    @pytest.mark.parametrize("kw", [dict(n_basis=0), dict(alpha=-1.0), dict(dt=0.0), dict(m_steps=35, k_rollout=4),
                                    dict(m_steps=5, k_rollout=10), dict(basis="cubic"), dict(epsilon=float("nan"))])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ConfigError):
            DmpConfig(**kw)

    def test_replace_rederives_defaults(self):
        cfg = DmpConfig(m_steps=35).replace(m_steps=70, k_rollout=7, alpha=40.0)
        assert cfg.dt == 1 / 70 and cfg.beta == 10.0

    def test_centres_one_based(self):
        cfg = DmpConfig(n_basis=4, a_x=2.0)
        np.testing.assert_allclose(cfg.centers, np.exp(-np.arange(1, 5) * 2.0 / 4))
        assert cfg.centers[-1] == pytest.approx(np.exp(-2.0))
        np.testing.assert_allclose(cfg.widths, 4 / cfg.centers)


class TestBasis:
    def test_gaussian_is_one_at_its_centre(self):
        cfg = DmpConfig(n_basis=7)
        assert basis_eval(cfg.centers[0], cfg)[0] == 1.0

    def test_linear_index_independent(self):
        cfg = DmpConfig(n_basis=5, basis="linear")
        np.testing.assert_array_equal(basis_eval(0.37, cfg), np.full(5, 0.37))

    def test_gaussian_high_precision_oracle(self):
        cfg = DmpConfig(n_basis=3, a_x=1.0)
        expected = np.array([float(v) for v in _mp_gaussian(3, 1, "0.5")])
        np.testing.assert_allclose(basis_eval(0.5, cfg), expected, rtol=1e-14)

    @pytest.mark.parametrize("kind,fn", [
        ("multiquadric", lambda x: np.sqrt(1 + (2 * x) ** 2)),
        ("inverse_quadric", lambda x: 1 / (1 + (2 * x) ** 2)),
        ("inverse_multiquadric", lambda x: 1 / np.sqrt(1 + (2 * x) ** 2)),
    ])
    def test_quadric_kernels(self, kind, fn):
        cfg = DmpConfig(n_basis=3, basis=kind, epsilon=2.0)
        np.testing.assert_allclose(basis_eval(0.3, cfg), np.full(3, fn(0.3)), rtol=1e-15)

    @pytest.mark.parametrize("x", [np.nan, np.inf])
    def test_non_finite_phase(self, x):
        with pytest.raises(DomainError):
            basis_eval(x, DmpConfig())

    @given(st.floats(0.0, 1.0), st.integers(1, 30), st.floats(0.1, 5.0))
    def test_gaussian_range(self, x, n, a_x):
        psi = basis_eval(x, DmpConfig(n_basis=n, a_x=a_x))
        assert np.all(np.isfinite(psi)) and np.all(psi <= 1.0) and np.all(psi >= 0.0)

    def test_singular_denominator(self):
        # Linear kernel at x = 0 sums to zero
        with pytest.raises(SingularBasisError):
            normalized_basis(0.0, DmpConfig(basis="linear"))


class TestForcing:
    def test_zero_weights(self):
        cfg = DmpConfig(n_basis=4)
        f = forcing(0.6, DmpParams(np.zeros((2, 4)), np.array([1.0, -1.0])), np.zeros(2), cfg)
        np.testing.assert_array_equal(f, 0.0)

    def test_goal_equals_start(self):
        cfg = DmpConfig(n_basis=4)
        y0 = np.array([0.3, -0.2])
        f = forcing(0.6, DmpParams(np.ones((2, 4)) * 7, y0.copy()), y0, cfg)
        np.testing.assert_array_equal(f, 0.0)

    def test_brute_force_oracle(self):
        cfg = DmpConfig(n_basis=2, a_x=1.0)
        psi = _mp_gaussian(2, 1, "0.5")
        expected = (psi[0] * 1 + psi[1] * 2) / (psi[0] + psi[1]) * mpmath.mpf("0.5") * 2
        f = forcing(0.5, DmpParams(np.array([[1.0, 2.0]]), np.array([2.0])), np.array([0.0]), cfg)
        assert f[0] == pytest.approx(float(expected), rel=1e-14)

    def test_zero_forcing_flag(self):
        cfg = DmpConfig(n_basis=3, zero_forcing=True)
        f = forcing(0.5, DmpParams(np.ones((1, 3)), np.array([2.0])), np.array([0.0]), cfg)
        np.testing.assert_array_equal(f, 0.0)

    @given(st.floats(-5, 5), st.floats(0.05, 1.0), st.integers(0, 10_000))
    def test_linear_in_w(self, lam, x, seed):
        rng = np.random.default_rng(seed)
        cfg = DmpConfig(n_basis=5)
        w, g, y0 = rng.normal(size=(2, 5)), rng.normal(size=2), rng.normal(size=2)
        base = forcing(x, DmpParams(w, g), y0, cfg)
        np.testing.assert_allclose(forcing(x, DmpParams(lam * w, g), y0, cfg), lam * base, rtol=1e-12, atol=1e-12)


class TestCanonical:
    def test_zero_decay(self):
        assert canonical_step(0.7, DmpConfig(a_x=1e-300)) == 0.7

    def test_single_step(self):
        assert canonical_step(1.0, DmpConfig(m_steps=100, k_rollout=1, dt=0.01)) == pytest.approx(0.99, abs=1e-15)

    def test_euler_error_bound(self):
        cfg = DmpConfig(m_steps=100, k_rollout=1, dt=0.01)
        x = phases(cfg)
        assert x[-1] == pytest.approx(0.99 ** 100, rel=1e-12)
        n = np.arange(101)
        assert np.all(np.abs(x - np.exp(-n * 0.01)) <= n * 0.01**2 + 1e-15)

    def test_monotone(self):
        x = phases(DmpConfig())
        assert x[0] == 1.0 and np.all(np.diff(x) < 0) and np.all(x > 0)


class TestStepAndRollout:
    def test_fixed_point_step(self):
        cfg = DmpConfig(n_basis=3)
        g = np.array([0.4, -0.1])
        s = DmpState(g.copy(), np.zeros(2), np.zeros(2), 1.0)
        nxt = step(s, DmpParams(np.zeros((2, 3)), g), g, cfg)
        np.testing.assert_array_equal(nxt.y, g)
        np.testing.assert_array_equal(nxt.y_dot, 0.0)

    def test_position_update_uses_previous_velocity(self):
        rng = np.random.default_rng(3)
        cfg = DmpConfig(n_basis=4)
        s = DmpState(rng.normal(size=2), rng.normal(size=2), rng.normal(size=2), 0.8)
        nxt = step(s, DmpParams(rng.normal(size=(2, 4)) * 50, rng.normal(size=2)), np.zeros(2), cfg)
        np.testing.assert_allclose(nxt.y - s.y, s.y_dot * cfg.dt, rtol=1e-12)
        np.testing.assert_allclose(nxt.y_dot - s.y_dot, s.y_ddot * cfg.dt, rtol=1e-12)

    def test_step_matches_rollout(self):
        rng = np.random.default_rng(4)
        cfg = DmpConfig(n_basis=5, m_steps=20, k_rollout=4)
        p = DmpParams(rng.normal(size=(3, 5)) * 30, rng.normal(size=3))
        y0, yd0 = rng.normal(size=3), rng.normal(size=3)
        tape = rollout(p, y0, yd0, cfg)
        s = DmpState(y0, yd0, np.zeros(3), 1.0)
        for t in range(1, 21):
            s = step(s, p, y0, cfg)
            np.testing.assert_allclose(s.y, tape.y[t], rtol=1e-13, atol=1e-13)

    def test_reference_integrator(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(1, 8))
            cfg = DmpConfig(n_basis=n, m_steps=int(rng.integers(35, 60)), k_rollout=1)
            w, g = rng.normal(size=(2, n)) * 40, rng.uniform(-1, 1, 2)
            y0, yd0 = rng.uniform(-1, 1, 2), rng.normal(size=2)
            ours = rollout(DmpParams(w, g), y0, yd0, cfg).y
            ref = _scalar_reference(w, g, y0, yd0, cfg)
            scale = np.maximum(np.abs(ref), 1.0)
            assert np.max(np.abs(ours - ref) / scale) <= 1e-12

    def test_fixed_point_rollout(self):
        g = np.array([0.2, 0.9, -0.5])
        tape = rollout(DmpParams(np.zeros((3, 10)), g), g, np.zeros(3), DmpConfig())
        np.testing.assert_array_equal(tape.y, np.broadcast_to(g, tape.y.shape))

    def test_attractor_long_horizon(self):
        rng = np.random.default_rng(6)
        cfg = DmpConfig(n_basis=5, m_steps=100, k_rollout=1, dt=0.01)
        for _ in range(50):
            y0 = rng.uniform(-10, 10, 2)
            g = y0 + rng.uniform(-10, 10, 2)
            if np.linalg.norm(g - y0) > 10:
                continue
            tape = rollout(DmpParams(np.zeros((2, 5)), g), y0, np.zeros(2), cfg)
            assert np.linalg.norm(tape.y[-1] - g) < 0.01 * np.linalg.norm(y0 - g)

    def test_tape_structure(self):
        cfg = DmpConfig(n_basis=4, m_steps=35, k_rollout=5)
        tape = rollout(DmpParams(np.ones((2, 4)), np.ones(2)), np.zeros(2), np.zeros(2), cfg)
        assert tape.y.shape == (36, 2) and tape.psi.shape == (35, 4) and len(tape.states) == 36
        first = tape.state(0)
        assert first.x == 1.0 and np.all(first.y_ddot == 0.0)

    def test_batched_equals_loop(self):
        rng = np.random.default_rng(7)
        cfg = DmpConfig(n_basis=3)
        w, g = rng.normal(size=(4, 2, 3)), rng.normal(size=(4, 2))
        y0, yd0 = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
        batched = rollout(DmpParams(w, g), y0, yd0, cfg).y
        for b in range(4):
            np.testing.assert_array_equal(batched[:, b], rollout(DmpParams(w[b], g[b]), y0[b], yd0[b], cfg).y)

    def test_deterministic(self):
        p = DmpParams(np.arange(6.0).reshape(2, 3), np.ones(2))
        a = rollout(p, np.zeros(2), np.zeros(2), DmpConfig(n_basis=3))
        b = rollout(p, np.zeros(2), np.zeros(2), DmpConfig(n_basis=3))
        assert a.y.tobytes() == b.y.tobytes()

    def test_divergence_detected(self):
        cfg = DmpConfig(n_basis=2, m_steps=2000, k_rollout=1, dt=0.5)
        with pytest.raises(IntegrationDivergedError):
            rollout(DmpParams(np.zeros((1, 2)), np.array([1.0])), np.zeros(1), np.zeros(1), cfg)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            rollout(DmpParams(np.zeros((1, 3)), np.zeros(1)), np.zeros(1), np.zeros(1), DmpConfig(n_basis=4))
        with pytest.raises(ShapeError):
            DmpParams(np.zeros((2, 3)), np.zeros(3))


class TestSubsample:
    def test_indices(self):
        np.testing.assert_array_equal(subsample_indices(35, 5), [7, 14, 21, 28, 35])
        np.testing.assert_array_equal(subsample_indices(10, 1), [10])
        np.testing.assert_array_equal(subsample_indices(6, 6), np.arange(1, 7))

    def test_rejects_non_divisor(self):
        with pytest.raises(ConfigError):
            subsample_indices(35, 4)

    def test_values(self):
        cfg = DmpConfig(n_basis=2, m_steps=10, k_rollout=10)
        tape = rollout(DmpParams(np.ones((1, 2)), np.ones(1)), np.zeros(1), np.zeros(1), cfg)
        y, yd = subsample(tape, 10)
        np.testing.assert_array_equal(y, tape.y[1:])
        y, _ = subsample(tape, 1)
        np.testing.assert_array_equal(y, tape.y[-1:])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.sampled_from(list(BasisKind)))
def test_rollout_finite_for_moderate_inputs(seed, dof, kind):
    rng = np.random.default_rng(seed)
    cfg = DmpConfig(n_basis=5, basis=kind)
    tape = rollout(DmpParams(rng.normal(size=(dof, 5)) * 10, rng.uniform(-1, 1, dof)),
                   rng.uniform(-1, 1, dof), rng.normal(size=dof), cfg)
    assert np.all(np.isfinite(tape.y)) and np.all(np.diff(tape.x) < 0)
