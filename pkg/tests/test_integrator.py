import logging
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from hmflab.integrator import HookError, IntegratorConfig, advance, run, step
from hmflab.model import (ModelParams, ParticleEnsemble, compute_mean_fields, total_energy,
                          total_momentum)


def random_state(n, seed, s=1):
    r = np.random.default_rng(seed)
    params = ModelParams(n, s=s, V=tuple(r.uniform(0.5, 1.5, s)))
    ens = ParticleEnsemble(r.vonmises(0, 1.5, n) % (2 * np.pi), r.normal(0, 0.6, n))
    return params, ens


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(dt=0.0), dict(sample_every=0), dict(t_end=-1.0),
                                    dict(scheme="rk4")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            IntegratorConfig(**kw)

    def test_stability_guard_warns_only(self, caplog):
        cfg = IntegratorConfig(dt=0.6)
        with caplog.at_level(logging.WARNING):
            assert cfg.check_stability(ModelParams(4)) is False
        assert "stability guard" in caplog.text
        assert IntegratorConfig(dt=0.05).check_stability(ModelParams(4))


class TestStep:
    def test_zero_field_is_pure_drift(self):
        params = ModelParams(2)
        ens = ParticleEnsemble(np.array([0.0, np.pi]), np.array([0.3, 0.3]))
        out = step(ens, params, IntegratorConfig(dt=0.1))
        np.testing.assert_allclose(out.q, (ens.q + 0.03) % (2 * np.pi), atol=1e-15)
        np.testing.assert_array_equal(out.p, ens.p)
        assert out.t == pytest.approx(0.1)

    def test_step_does_not_mutate_input(self):
        params, ens = random_state(50, 1)
        q0 = ens.q.copy()
        step(ens, params, IntegratorConfig())
        np.testing.assert_array_equal(ens.q, q0)

    @pytest.mark.parametrize("scheme", ["leapfrog2", "yoshida4"])
    def test_positions_stay_wrapped(self, scheme):
        params, ens = random_state(300, 2)
        ens.p *= 20
        out = advance(ens.copy(), params, 0.05, 200, scheme)
        assert np.all((out.q >= 0) & (out.q < params.L))

    @given(st.integers(2, 200), st.integers(0, 10**6), st.sampled_from(["leapfrog2", "yoshida4"]))
    def test_reversibility(self, n, seed, scheme):
        params, ens = random_state(n, seed)
        fwd = advance(ens.copy(), params, 0.05, 1, scheme)
        back = advance(fwd, params, -0.05, 1, scheme)
        dq = np.angle(np.exp(1j * (back.q - ens.q)))
        assert np.max(np.abs(dq)) < 1e-12
        assert np.max(np.abs(back.p - ens.p)) < 1e-12

    @given(st.integers(2, 300), st.integers(0, 10**6), st.integers(1, 3))
    def test_momentum_per_step(self, n, seed, s):
        params, ens = random_state(n, seed, s)
        p0 = total_momentum(ens)
        out = advance(ens.copy(), params, 0.05, 1)
        assert abs(total_momentum(out) - p0) <= 1e-12 * n

    def test_pendulum_frequency(self):
        # cold cluster at the trough plus one particle displaced by eps
        n, eps, dt = 20001, 1e-4, 0.05
        q = np.zeros(n)
        q[0] = eps
        ens = ParticleEnsemble(q, np.zeros(n))
        params = ModelParams(n)
        M = compute_mean_fields(ens, params).M[0]
        omega = math.sqrt(M)
        # leapfrog on a harmonic oscillator: cos(w_h dt) = 1 - (w dt)^2 / 2
        omega_h = math.acos(1 - 0.5 * (omega * dt) ** 2) / dt
        assert abs(omega_h - omega) / omega < (omega * dt) ** 2 / 20
        n_steps = 4000
        xs = np.empty(n_steps)
        for i in range(n_steps):
            advance(ens, params, dt, 1)
            xs[i] = np.angle(np.exp(1j * ens.q[0]))
        # zero crossings give the period
        t = dt * np.arange(1, n_steps + 1)
        idx = np.nonzero(np.diff(np.sign(xs)) != 0)[0]
        tc = t[idx] - xs[idx] * dt / (xs[idx + 1] - xs[idx])
        period = 2 * np.mean(np.diff(tc))
        assert 2 * np.pi / period == pytest.approx(omega_h, rel=1e-5)

    def test_matches_runge_kutta_reference(self):
        params, ens = random_state(16, 7, s=2)
        k, V = params.k, params.V_array

        def rhs(_, y):
            q, p = y[:16], y[16:]
            a = np.zeros(16)
            for kn, vn in zip(k, V):
                cx, cy = np.mean(np.cos(kn * q)), np.mean(np.sin(kn * q))
                a -= kn * vn * (cx * np.sin(kn * q) - cy * np.cos(kn * q))
            return np.concatenate([p, a])

        ref = solve_ivp(rhs, (0, 5.0), np.concatenate([ens.q, ens.p]), method="DOP853",
                        rtol=1e-12, atol=1e-12).y[:, -1]
        out = advance(ens.copy(), params, 0.001, 5000, "yoshida4")
        np.testing.assert_allclose(np.angle(np.exp(1j * (out.q - ref[:16]))), 0, atol=1e-9)
        np.testing.assert_allclose(out.p, ref[16:], atol=1e-9)


def energy_error(params, ens, dt, t_end, scheme):
    E0 = total_energy(ens, params)
    e = ens.copy()
    n = int(round(t_end / dt))
    errs = []
    for _ in range(10):
        advance(e, params, dt, n // 10, scheme)
        errs.append(abs(total_energy(e, params) - E0))
    return max(errs)


class TestOrder:
    def test_leapfrog_second_order(self):
        params, ens = random_state(400, 11)
        errs = [energy_error(params, ens, dt, 20.0, "leapfrog2") for dt in (0.1, 0.05, 0.025)]
        r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
        assert r1 == pytest.approx(4, abs=0.5) and r2 == pytest.approx(4, abs=0.5)

    def test_yoshida_fourth_order(self):
        params, ens = random_state(400, 11)
        errs = [energy_error(params, ens, dt, 20.0, "yoshida4") for dt in (0.2, 0.1, 0.05)]
        r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
        assert r1 == pytest.approx(16, abs=3) and r2 == pytest.approx(16, abs=3)


class Counter:
    def __init__(self):
        self.t = []

    def __call__(self, ens, mf):
        self.t.append(ens.t)

    def result(self):
        return list(self.t)


class TestRun:
    def test_zero_steps_identity(self):
        params, ens = random_state(20, 3)
        res = run(ens, params, IntegratorConfig(t_end=0.0), [Counter()])
        assert res.n_steps == 0
        np.testing.assert_array_equal(res.final.q, ens.q)
        np.testing.assert_array_equal(res.final.p, ens.p)
        assert res.outputs == [[0.0]]

    def test_sampling_stride(self):
        params, ens = random_state(20, 3)
        res = run(ens, params, IntegratorConfig(dt=0.05, t_end=10.0, sample_every=10), [Counter()])
        times = res.outputs[0]
        np.testing.assert_allclose(times, 0.5 * np.arange(21), atol=1e-12)
        assert res.n_steps == 200

    def test_run_equals_repeated_steps(self):
        params, ens = random_state(100, 4)
        cfg = IntegratorConfig(dt=0.05, t_end=1.0, sample_every=3)
        res = run(ens, params, cfg)
        e = ens
        for _ in range(20):
            e = step(e, params, cfg)
        np.testing.assert_array_equal(res.final.q, e.q)
        np.testing.assert_array_equal(res.final.p, e.p)

    def test_deterministic(self):
        params, ens = random_state(500, 5)
        cfg = IntegratorConfig(dt=0.05, t_end=20.0)
        a, b = run(ens, params, cfg).final, run(ens, params, cfg).final
        assert a.q.tobytes() == b.q.tobytes() and a.p.tobytes() == b.p.tobytes()

    def test_hooks_cannot_mutate(self):
        params, ens = random_state(10, 6)

        def bad(e, mf):
            e.p[0] = 100.0

        with pytest.raises(HookError) as info:
            run(ens, params, IntegratorConfig(t_end=1.0), [bad])
        assert info.value.step == 0

    def test_hook_failure_context(self):
        params, ens = random_state(10, 6)

        def fail_late(e, mf):
            if e.t > 2.0:
                raise KeyError("boom")

        with pytest.raises(HookError) as info:
            run(ens, params, IntegratorConfig(dt=0.05, t_end=5.0, sample_every=10), [fail_late])
        assert info.value.step == 50 and info.value.t == pytest.approx(2.5)
        assert "step 50" in str(info.value)

    def test_nonfinite_names_particle(self):
        params = ModelParams(3)
        ens = ParticleEnsemble(np.array([0.1, 0.2, 0.3]), np.array([0.0, np.inf, 0.0]))
        with pytest.raises(FloatingPointError, match="particle 1 at step 0"):
            run(ens, params, IntegratorConfig(t_end=0.5))
