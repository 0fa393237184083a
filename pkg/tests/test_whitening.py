import numpy as np
import pytest

from barpdmp import whitening
from barpdmp.bar_problem import QuadraticPotential, make_bar_potential
from conftest import central_diff_grad, central_diff_jacobian, rel_err


def gaussian_potential(rng, d=3):
    a = rng.normal(size=(d, d))
    cov = a @ a.T + d * np.eye(d)
    mu = rng.normal(size=d)
    return QuadraticPotential(np.linalg.inv(cov), mean=mu), mu, cov


class TestFindMap:
    def test_gaussian_returns_mean(self, rng):
        pot, mu, _ = gaussian_potential(rng)
        x = whitening.find_map(pot, np.zeros(3), tol=1e-9)
        assert np.allclose(x, mu, atol=1e-8)

    def test_bar_posterior_gradient_norm(self):
        pot, _ = make_bar_potential(2, 3)
        x = whitening.find_map(pot, pot.prior.mean, tol=1e-8)
        assert np.linalg.norm(pot.grad(x)) < 1e-8

    def test_restart_self_consistency(self):
        pot, _ = make_bar_potential(2, 3)
        x = whitening.find_map(pot, pot.prior.mean, tol=1e-8)
        before = pot.eval_count
        x2 = whitening.find_map(pot, x, tol=1e-8)
        assert np.allclose(x, x2, atol=1e-8)
        # converging from the optimum costs only a couple of evaluations
        assert pot.eval_count - before <= 5

    def test_invalid_tol(self):
        pot, _ = make_bar_potential(2, 3)
        with pytest.raises(ValueError):
            whitening.find_map(pot, pot.prior.mean, tol=0.0)


class TestBuildMap:
    def test_gaussian_factor_reproduces_precision(self, rng):
        pot, _, cov = gaussian_potential(rng)
        amap = whitening.build_map(pot, np.zeros(3))
        prec = np.linalg.inv(cov)
        assert np.allclose(amap.chol_factor @ amap.chol_factor.T, prec, atol=1e-10)

    def test_transformed_hessian_is_identity(self, rng):
        pot, _ = make_bar_potential(3, 1)
        amap = whitening.build_map(pot, pot.prior.mean)
        tp = whitening.TransformedPotential(pot, amap)
        assert np.allclose(tp.hessian(np.zeros(3)), np.eye(3), atol=1e-10)

    def test_whitened_hessian_by_finite_differences(self):
        pot, _ = make_bar_potential(2, 3)
        amap = whitening.build_map(pot, pot.prior.mean)
        tp = whitening.TransformedPotential(pot, amap)
        fd = central_diff_jacobian(tp.grad, np.zeros(2), step=1e-5)
        assert np.max(np.abs(fd - np.eye(2))) < 1e-6

    def test_non_spd_hessian_raises(self):
        pot = QuadraticPotential(np.diag([1.0, -1.0]))
        with pytest.raises(whitening.NonSpdHessianError):
            whitening.AffineMap.from_hessian(np.zeros(2), pot.hessian(np.zeros(2)))

    def test_round_trip(self, rng):
        pot, _ = make_bar_potential(4, 2)
        amap = whitening.build_map(pot, pot.prior.mean)
        xi = rng.normal(size=4)
        assert np.allclose(amap.to_whitened(amap.from_whitened(xi)), xi, atol=1e-12)

    def test_pushforward_covariance(self, rng):
        pot, _, cov = gaussian_potential(rng, d=2)
        amap = whitening.build_map(pot, np.zeros(2))
        z = rng.standard_normal((100_000, 2))
        pushed = amap.map_point[None, :] + z @ amap.inverse_transpose.T
        emp = np.cov(pushed.T)
        h_inv = cov  # for a Gaussian the inverse Hessian is the covariance
        assert np.linalg.norm(emp - h_inv, "fro") / np.linalg.norm(h_inv, "fro") <= 0.1


class TestTransformedPotential:
    def test_gradient_zero_at_origin(self):
        pot, _ = make_bar_potential(3, 9)
        amap = whitening.build_map(pot, pot.prior.mean, tol=1e-9)
        tp = whitening.TransformedPotential(pot, amap)
        assert np.linalg.norm(tp.grad(np.zeros(3))) <= 1e-8

    def test_gaussian_base_becomes_standard_quadratic(self, rng):
        pot, mu, cov = gaussian_potential(rng)
        amap = whitening.build_map(pot, np.zeros(3))
        tp = whitening.TransformedPotential(pot, amap)
        xi = rng.normal(size=3)
        assert tp.value(xi) == pytest.approx(0.5 * xi @ xi, abs=1e-9)

    def test_gradient_matches_finite_differences(self, rng):
        pot, _ = make_bar_potential(2, 3)
        amap = whitening.build_map(pot, pot.prior.mean)
        tp = whitening.TransformedPotential(pot, amap)
        for _ in range(10):
            xi = rng.normal(size=2)
            fd = central_diff_grad(tp.value, xi)
            assert rel_err(tp.grad(xi), fd) < 1e-6

    def test_counter_shared_with_base(self):
        pot, _ = make_bar_potential(2, 3)
        amap = whitening.build_map(pot, pot.prior.mean)
        tp = whitening.TransformedPotential(pot, amap)
        before = pot.eval_count
        tp.value_grad(np.array([0.3, -0.2]))
        assert tp.eval_count == pot.eval_count == before + 1
