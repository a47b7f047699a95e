import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hmflab.model import (ModelParams, ParticleEnsemble, compute_forces, compute_mean_fields,
                          kinetic_temperature, pairwise_energy, potential_energy, total_energy,
                          total_momentum)


def ens_of(q, p=None):
    q = np.asarray(q, dtype=float)
    return ParticleEnsemble(q, np.zeros_like(q) if p is None else np.asarray(p, float))


@st.composite
def ensembles(draw, max_n=128, max_s=3):
    n = draw(st.integers(2, max_n))
    s = draw(st.integers(1, max_s))
    seed = draw(st.integers(0, 2**32 - 1))
    r = np.random.default_rng(seed)
    V = tuple(r.uniform(0.2, 2.0, s))
    params = ModelParams(n, 2 * np.pi, s, V)
    ens = ParticleEnsemble(r.uniform(0, 2 * np.pi, n), r.normal(0, 1, n))
    return params, ens


class TestParams:
    def test_wavenumbers_derived(self):
        p = ModelParams(10, L=4.0, s=3, V=(1, 2, 3))
        np.testing.assert_allclose(p.k, 2 * np.pi * np.arange(1, 4) / 4.0)

    @pytest.mark.parametrize("kw", [dict(N=0), dict(N=4, s=0, V=()), dict(N=4, L=0.0),
                                    dict(N=4, s=2, V=(1.0,))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ModelParams(**kw)

    def test_ensemble_shape_mismatch(self):
        with pytest.raises(ValueError):
            ParticleEnsemble(np.zeros(3), np.zeros(4))

    def test_wrap_into_interval(self):
        e = ens_of([-1e-18, -0.5, 2 * np.pi, 7.0]).wrap(2 * np.pi)
        assert np.all((e.q >= 0) & (e.q < 2 * np.pi))


class TestMeanFields:
    @pytest.mark.parametrize("s", [1, 2, 4])
    def test_all_at_origin(self, s):
        mf = compute_mean_fields(ens_of(np.zeros(7)), ModelParams(7, s=s, V=(1.0,) * s))
        np.testing.assert_allclose(mf.M, 1.0)
        np.testing.assert_array_equal(mf.phi, 0.0)
        assert not mf.undefined.any()

    def test_antipodal_pair_undefined(self):
        mf = compute_mean_fields(ens_of([0.0, np.pi]), ModelParams(2))
        assert mf.M[0] < 1e-12
        assert mf.undefined[0] and mf.phi[0] == 0.0

    def test_four_particle_hand_value(self):
        mf = compute_mean_fields(ens_of([0, np.pi / 2, np.pi / 2, np.pi / 2]), ModelParams(4))
        assert mf.M[0] == pytest.approx(math.sqrt(10) / 4, abs=1e-15)
        assert mf.phi[0] == pytest.approx(math.atan2(3, 1), abs=1e-15)

    def test_phase_at_pi_is_pi(self):
        mf = compute_mean_fields(ens_of([np.pi, np.pi]), ModelParams(2))
        assert mf.phi[0] == np.pi

    @given(ensembles())
    def test_components_match_direct_average(self, pe):
        params, ens = pe
        mf = compute_mean_fields(ens, params)
        cx, cy = mf.components
        for n, k in enumerate(params.k):
            assert abs(cx[n] - np.mean(np.cos(k * ens.q))) < 1e-12
            assert abs(cy[n] - np.mean(np.sin(k * ens.q))) < 1e-12
        assert np.all((mf.M >= 0) & (mf.M <= 1))
        assert np.all((mf.phi > -np.pi) & (mf.phi <= np.pi))

    @given(ensembles(), st.floats(-10, 10))
    def test_translation_covariance(self, pe, shift):
        params, ens = pe
        mf = compute_mean_fields(ens, params)
        moved = ParticleEnsemble(ens.q + shift, ens.p).wrap(params.L)
        mf2 = compute_mean_fields(moved, params)
        np.testing.assert_allclose(mf2.M, mf.M, atol=1e-12)
        ok = mf.M > 1e-6
        dphi = np.angle(np.exp(1j * (mf2.phi - mf.phi - params.k * shift)))
        assert np.all(np.abs(dphi[ok]) < 1e-9 / np.maximum(mf.M[ok], 1e-3))
        assert total_energy(moved, params) == pytest.approx(total_energy(ens, params), rel=1e-12, abs=1e-12)
        f1 = np.sort(np.abs(compute_forces(ens, mf, params)))
        f2 = np.sort(np.abs(compute_forces(moved, mf2, params)))
        np.testing.assert_allclose(f2, f1, atol=1e-12)

    def test_deterministic(self, rng):
        params = ModelParams(1000)
        ens = ParticleEnsemble(rng.uniform(0, 2 * np.pi, 1000), np.zeros(1000))
        a = compute_mean_fields(ens, params)
        b = compute_mean_fields(ens.copy(), params)
        assert a.M.tobytes() == b.M.tobytes() and a.phi.tobytes() == b.phi.tobytes()


class TestForces:
    def test_zero_field(self):
        params = ModelParams(2)
        ens = ens_of([0.0, np.pi])
        a = compute_forces(ens, compute_mean_fields(ens, params), params)
        np.testing.assert_allclose(a, 0.0, atol=1e-15)

    def test_direct_substitution(self):
        from hmflab.model import MeanFieldSample
        params = ModelParams(1)
        a = compute_forces(ens_of([np.pi / 2]), MeanFieldSample(0.0, np.array([0.5]), np.array([0.0])), params)
        assert a[0] == pytest.approx(-0.5, abs=1e-15)

    def test_trough_is_fixed_point(self, rng):
        params = ModelParams(200)
        ens = ParticleEnsemble(rng.vonmises(1.0, 2.0, 200) % (2 * np.pi), np.zeros(200))
        mf = compute_mean_fields(ens, params)
        probe = ParticleEnsemble(np.full(200, mf.phi[0] % (2 * np.pi)), np.zeros(200))
        assert np.max(np.abs(compute_forces(probe, mf, params))) < 1e-15

    @given(ensembles())
    def test_forces_sum_to_zero(self, pe):
        params, ens = pe
        a = compute_forces(ens, compute_mean_fields(ens, params), params)
        assert abs(a.sum()) < 1e-10 * params.N

    @given(ensembles())
    def test_forces_match_direct_formula(self, pe):
        params, ens = pe
        mf = compute_mean_fields(ens, params)
        ref = -sum(k * v * m * np.sin(k * ens.q - ph)
                   for k, v, m, ph in zip(params.k, params.V, mf.M, mf.phi))
        np.testing.assert_allclose(compute_forces(ens, mf, params), ref, atol=1e-13)

    def test_forces_are_minus_gradient(self, rng):
        params = ModelParams(50, s=2, V=(1.0, 0.5))
        ens = ParticleEnsemble(rng.uniform(0, 2 * np.pi, 50), np.zeros(50))
        a = compute_forces(ens, compute_mean_fields(ens, params), params)
        h = 1e-6
        for i in (0, 17, 49):
            qp, qm = ens.copy(), ens.copy()
            qp.q[i] += h
            qm.q[i] -= h
            grad = (potential_energy(qp, params) - potential_energy(qm, params)) / (2 * h)
            assert a[i] == pytest.approx(-grad, abs=1e-8)


class TestEnergy:
    # conserved energy of the attractive dynamics: sum p^2/2 - sum_n (N V_n / 2) M_n^2
    def test_single_particle(self):
        assert total_energy(ens_of([1.3]), ModelParams(1)) == pytest.approx(-0.5, abs=1e-15)

    @pytest.mark.parametrize("n", [2, 5, 64])
    def test_cold_cluster(self, n):
        assert total_energy(ens_of(np.full(n, 2.0)), ModelParams(n)) == pytest.approx(-n / 2, rel=1e-14)

    @given(ensembles(max_n=128))
    def test_matches_pairwise(self, pe):
        params, ens = pe
        assert total_energy(ens, params) == pytest.approx(pairwise_energy(ens, params), rel=1e-12)

    def test_random_64(self, rng):
        params = ModelParams(64)
        ens = ParticleEnsemble(rng.uniform(0, 2 * np.pi, 64), rng.normal(0, 1, 64))
        assert total_energy(ens, params) == pytest.approx(pairwise_energy(ens, params), rel=1e-12)


class TestMomentumTemperature:
    def test_momentum(self):
        assert total_momentum(ens_of([0, 0], [1, -1])) == 0.0
        assert total_momentum(ens_of([0, 0, 0], [0.5, 0.5, 0.5])) == 1.5

    def test_temperature(self):
        assert kinetic_temperature(ens_of(np.zeros(5))) == 0.0
        assert kinetic_temperature(ens_of([0, 0], [1, -1])) == 1.0

    def test_gaussian_temperature(self, rng):
        p = rng.normal(0, 0.5, 100_000)
        assert kinetic_temperature(ens_of(np.zeros_like(p), p)) == pytest.approx(0.25, abs=0.01)
