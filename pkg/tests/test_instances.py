import json
import math

import numpy as np
import pytest
from scipy.sparse.linalg import eigsh

from hardquad.errors import (
    DegenerateInstanceError,
    DomainError,
    InvalidDimensionError,
)
from hardquad.instances import (
    Instance,
    InstanceParams,
    build_instance,
    cond_target,
    dump_instance,
    gamma,
    lambda_for_kappa,
    load_instance,
    objective,
    sample_goe,
    sample_plant,
    trial_rng,
)


class TestParams:
    def test_valid(self):
        p = InstanceParams(d=10, lam=1.25, tau0=0.0625, seed=7)
        assert p.gamma == pytest.approx(2.1)

    @pytest.mark.parametrize("kwargs", [
        dict(d=1, lam=1.25, tau0=0.1, seed=0),
        dict(d=10, lam=1.0, tau0=0.1, seed=0),
        dict(d=10, lam=2.5, tau0=0.1, seed=0),
        dict(d=10, lam=1.25, tau0=-0.1, seed=0),
        dict(d=10, lam=1.25, tau0=0.1, seed=0, paper_regime=True),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises((DomainError, InvalidDimensionError)):
            InstanceParams(**kwargs)

    def test_paper_regime_allows_gap_squared(self):
        InstanceParams(d=10, lam=1.25, tau0=0.0625, seed=0, paper_regime=True)


class TestScalarMaps:
    def test_gamma_at_two(self):
        assert gamma(2.0) == pytest.approx(3.0, abs=1e-15)

    def test_gamma_near_one(self):
        assert gamma(1.0 + 1e-9) == pytest.approx(2.0, abs=1e-8)

    def test_gamma_range(self):
        for lam in np.linspace(1.01, 2.0, 50):
            assert 2.0 < gamma(lam) <= 3.0

    def test_gamma_domain(self):
        with pytest.raises(DomainError):
            gamma(1.0)

    def test_cond_values(self):
        assert cond_target(1.5) == pytest.approx(26.0, abs=1e-12)
        assert 2 * cond_target(1.5) == pytest.approx(52.0, abs=1e-12)
        assert cond_target(1.25) == pytest.approx(82.0, abs=1e-12)

    @pytest.mark.parametrize("kappa", [52.0, 100.0, 1e4])
    def test_lambda_for_kappa_fixed_point(self, kappa):
        lam = lambda_for_kappa(kappa)
        assert 2 * cond_target(lam) == pytest.approx(kappa, rel=1e-6)

    def test_lambda_for_kappa_endpoint(self):
        assert lambda_for_kappa(52.0) == pytest.approx(1.5, abs=1e-9)

    def test_lambda_for_kappa_asymptote(self):
        # 2*cond_target(lam) ~ 8/(lam-1)^2 as lam -> 1, so lam-1 -> sqrt(8/kappa)
        lam = lambda_for_kappa(1e6)
        assert lam - 1 == pytest.approx(math.sqrt(8 / 1e6), rel=0.1)

    def test_lambda_for_kappa_range_error(self):
        with pytest.raises(DomainError):
            lambda_for_kappa(51.9)


class TestSampling:
    def test_goe_symmetric(self):
        W = sample_goe(2, trial_rng(0, 0))
        assert W.shape == (2, 2)
        assert W[0, 1] == W[1, 0]

    def test_goe_dimension_error(self):
        with pytest.raises(InvalidDimensionError):
            sample_goe(1, trial_rng(0, 0))

    def test_goe_entry_variances(self):
        # one draw supplies ~4.5e6 off-diagonal entries; moments within 5%
        d = 3000
        W = sample_goe(d, trial_rng(42, 0))
        off = W[np.triu_indices(d, k=1)]
        diag = np.diag(W)
        assert np.var(off) == pytest.approx(1.0 / d, rel=0.05)
        assert np.var(diag) == pytest.approx(2.0 / d, rel=0.05)
        assert abs(np.mean(off)) < 5 / d

    def test_plant_norm_concentration(self):
        d = 10_000
        hits = sum(
            0.9 <= float(np.sum(sample_plant(d, trial_rng(7, t)) ** 2)) <= 1.1
            for t in range(100)
        )
        assert hits >= 99

    def test_plant_d1(self):
        u = sample_plant(1, trial_rng(3, 0))
        assert u.shape == (1,)
        again = sample_plant(1, trial_rng(3, 0))
        assert u[0] == again[0]
        draws = np.array([sample_plant(1, trial_rng(3, t))[0] for t in range(2000)])
        assert np.var(draws) == pytest.approx(1.0, rel=0.2)

    def test_plant_coordinate_second_moment(self):
        d = 5000
        firsts = np.array([sample_plant(d, trial_rng(11, t))[0] for t in range(1000)])
        mean_sq = float(np.mean(firsts**2))
        assert mean_sq <= 1.5 / d and mean_sq >= 1.0 / (1.5 * d)

    def test_plant_dimension_error(self):
        with pytest.raises(InvalidDimensionError):
            sample_plant(0, trial_rng(0, 0))


class TestBuildInstance:
    @pytest.fixture(scope="class")
    def inst(self):
        params = InstanceParams(d=500, lam=1.25, tau0=0.0625, seed=7)
        return build_instance(params)

    def test_deformation_identity(self, inst):
        target = inst.W + inst.params.lam * np.outer(inst.u, inst.u)
        scale = np.max(np.abs(target))
        assert np.max(np.abs(inst.M - target)) <= 1e-12 * scale

    def test_shift_identity_exact(self, inst):
        assert np.array_equal(inst.A, inst.gamma * np.eye(inst.d) - inst.M)

    def test_linear_term_exact(self, inst):
        assert np.array_equal(inst.b, np.sqrt(inst.params.tau0) * inst.u + inst.z)

    def test_symmetry(self, inst):
        for mat in (inst.W, inst.M, inst.A):
            assert np.max(np.abs(mat - mat.T)) <= 1e-12

    def test_solve_residual(self, inst):
        resid = np.linalg.norm(inst.A @ inst.x_star - inst.b)
        assert resid / np.linalg.norm(inst.b) <= 1e-8

    def test_determinism_bitwise(self, inst):
        other = build_instance(inst.params)
        for name in ("W", "u", "z", "b", "M", "A"):
            assert np.array_equal(getattr(inst, name), getattr(other, name))
        assert np.array_equal(inst.x_star, other.x_star)

    def test_objective_at_minimizer(self, inst):
        f_star = objective(inst, inst.x_star)
        f_near = objective(inst, inst.x_star + 1e-3 * np.ones(inst.d) / inst.d**0.5)
        assert f_near >= f_star

    def test_degenerate_singular(self):
        params = InstanceParams(d=4, lam=1.3, tau0=0.0, seed=99)
        inst = build_instance(params)
        broken = Instance(params=params, W=inst.W, u=inst.u, z=inst.z,
                          b=inst.b, M=inst.M, A=np.zeros((4, 4)))
        with pytest.raises(DegenerateInstanceError) as err:
            _ = broken.x_star
        assert err.value.seed == 99


class TestSpectralSanity:
    def test_edge_and_spike_locations(self):
        # lam1(M) within 10% of lam + 1/lam and |W| under the edge allowance,
        # each in at least 95 of 100 trials at d = 2000
        d, lam = 2000, 1.25
        edge_cap = 2.0 + 23.0 * d ** (-1 / 3) * math.log(d) ** (2 / 3)
        spike = lam + 1 / lam
        ok_spike = ok_norm = 0
        for t in range(100):
            rng = trial_rng(314, t)
            W = sample_goe(d, rng)
            u = sample_plant(d, rng)
            M = W + lam * np.outer(u, u)
            lam1 = eigsh(M, k=1, which="LA", return_eigenvectors=False,
                         tol=1e-5, maxiter=5000)[0]
            top = eigsh(W, k=1, which="LA", return_eigenvectors=False,
                        tol=1e-4, maxiter=5000)[0]
            bot = eigsh(W, k=1, which="SA", return_eigenvectors=False,
                        tol=1e-4, maxiter=5000)[0]
            ok_spike += 0.9 * spike <= lam1 <= 1.1 * spike
            ok_norm += max(abs(top), abs(bot)) <= edge_cap
        assert ok_spike >= 95
        assert ok_norm >= 95


class TestSerialization:
    def test_seed_roundtrip(self, tmp_path):
        params = InstanceParams(d=40, lam=1.4, tau0=0.16, seed=5)
        inst = build_instance(params)
        path = tmp_path / "inst.json"
        dump_instance(inst, path)
        loaded = load_instance(path)
        assert np.array_equal(loaded.A, inst.A)
        assert np.array_equal(loaded.b, inst.b)

    def test_full_matrix_roundtrip(self, tmp_path):
        params = InstanceParams(d=25, lam=1.2, tau0=0.04, seed=8)
        inst = build_instance(params)
        path = tmp_path / "inst_full.json"
        dump_instance(inst, path, full_matrices=True)
        payload = json.loads(path.read_text())
        assert len(payload["W_rowmajor"]) == 25 * 25
        loaded = load_instance(path)
        assert np.allclose(loaded.W, inst.W, atol=0, rtol=0)

    def test_tampered_dump_rejected(self, tmp_path):
        params = InstanceParams(d=10, lam=1.2, tau0=0.04, seed=8)
        inst = build_instance(params)
        path = tmp_path / "inst.json"
        dump_instance(inst, path)
        payload = json.loads(path.read_text())
        payload["u"][0] += 1.0
        path.write_text(json.dumps(payload))
        with pytest.raises(ValueError):
            load_instance(path)
