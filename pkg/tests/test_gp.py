import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barpdmp import gp
from conftest import central_diff_grad, rel_err


def hyper(d=1, mean=0.0, sig=1.0, ls=None, noise=1e-4):
    ls = np.full(d, 1.0) if ls is None else np.asarray(ls, dtype=float)
    return gp.GpHyperparams(mean_const=mean, signal_var=sig, length_scales=ls, noise_var=noise)


class TestKernel:
    def test_zero_distance_returns_signal_var(self):
        h = hyper(d=3, sig=2.0)
        a = np.array([0.3, -1.2, 4.0])
        assert gp.kernel_eval(a, a, h) == pytest.approx(2.0)

    def test_unit_scaled_distance(self):
        h = hyper(d=1, ls=[0.7])
        assert gp.kernel_eval([0.0], [0.7], h) == pytest.approx(np.exp(-0.5))

    def test_hand_evaluated_two_dimensional_case(self):
        # sum of squared scaled distances: (1/1)^2 + (2/2)^2 = 2
        h = hyper(d=2, ls=[1.0, 2.0])
        val = gp.kernel_eval([0.0, 0.0], [1.0, 2.0], h)
        assert val == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(gp.GpError):
            gp.kernel_eval([0.0, 1.0], [0.0], hyper(d=2))

    @given(
        a=st.lists(st.floats(-5, 5), min_size=2, max_size=2),
        b=st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    )
    @settings(max_examples=50, deadline=None)
    def test_symmetry(self, a, b):
        h = hyper(d=2, ls=[0.8, 1.7], sig=1.3)
        assert gp.kernel_eval(a, b, h) == gp.kernel_eval(b, a, h)

    def test_psd_via_cholesky(self, rng):
        h = hyper(d=3, ls=[0.5, 1.0, 2.0], sig=1.7)
        x = rng.normal(size=(50, 3))
        k = gp._kernel_matrix(x, x, h)
        np.linalg.cholesky(k + 1e-8 * h.signal_var * np.eye(50))


class TestKernelGradients:
    def test_grad_zero_at_coincident_points(self):
        h = hyper(d=4)
        a = np.array([1.0, 2.0, 3.0, 4.0])
        assert np.allclose(gp.kernel_grad_x(a, a, h), 0.0)

    def test_grad_matches_one_dimensional_value(self):
        h = hyper(d=1)
        g = gp.kernel_grad_x([0.0], [1.0], h)
        assert g[0] == pytest.approx(np.exp(-0.5), rel=1e-9)

    def test_grad_matches_finite_differences(self, rng):
        h = hyper(d=3, ls=[0.5, 1.3, 2.0], sig=1.4)
        for _ in range(10):
            a = rng.normal(size=3)
            b = rng.normal(size=3)
            fd = central_diff_grad(lambda x: gp.kernel_eval(x, b, h), a)
            assert rel_err(gp.kernel_grad_x(a, b, h), fd) < 1e-6

    def test_cross_derivative_diagonal_at_zero_distance(self):
        h = hyper(d=2, ls=[1.0, 3.0])
        a = np.array([0.5, -0.5])
        assert gp.kernel_cross_derivative(a, a, 0, 0, h) == pytest.approx(1.0)
        assert gp.kernel_cross_derivative(a, a, 0, 1, h) == 0.0

    def test_cross_derivative_cancellation_case(self):
        h = hyper(d=2)
        val = gp.kernel_cross_derivative([0.0, 0.0], [1.0, 0.0], 0, 0, h)
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_cross_derivative_against_second_differences(self, rng):
        h = hyper(d=2, ls=[0.9, 1.4])
        step = 1e-4
        for _ in range(5):
            a = rng.normal(size=2)
            b = rng.normal(size=2)
            for p in range(2):
                for q in range(2):
                    ep = np.eye(2)[p] * step
                    eq = np.eye(2)[q] * step
                    fd = (
                        gp.kernel_eval(a + ep, b + eq, h)
                        - gp.kernel_eval(a + ep, b - eq, h)
                        - gp.kernel_eval(a - ep, b + eq, h)
                        + gp.kernel_eval(a - ep, b - eq, h)
                    ) / (4 * step * step)
                    got = gp.kernel_cross_derivative(a, b, p, q, h)
                    assert abs(got - fd) < 1e-4

    def test_index_out_of_range(self):
        with pytest.raises(gp.GpError):
            gp.kernel_cross_derivative([0.0], [1.0], 0, 1, hyper(d=1))


class TestDataset:
    def test_duplicate_inputs_rejected(self):
        with pytest.raises(gp.GpError):
            gp.GpDataset(inputs=[[0.0], [0.0]], values=[1.0, 2.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(gp.GpError):
            gp.GpDataset(inputs=[[0.0], [1.0]], values=[1.0])

    def test_csv_round_trip(self, tmp_path, rng):
        ds = gp.GpDataset(
            inputs=rng.normal(size=(5, 2)),
            values=rng.normal(size=5),
            gradients=rng.normal(size=(5, 2)),
        )
        path = tmp_path / "ds.csv"
        gp.dataset_to_csv(ds, path)
        back = gp.dataset_from_csv(path)
        assert np.allclose(back.inputs, ds.inputs)
        assert np.allclose(back.values, ds.values)
        assert np.allclose(back.gradients, ds.gradients)


class TestLml:
    def test_gradient_matches_finite_differences_value_only(self, rng):
        x = rng.normal(size=(12, 2))
        y = np.sin(x[:, 0]) + 0.1 * rng.normal(size=12)
        ds = gp.GpDataset(inputs=x, values=y)
        h = hyper(d=2, mean=0.3, sig=1.5, ls=[0.8, 1.2], noise=1e-2)
        _, grad = gp.lml_and_gradient(ds, h)

        def lml_of(theta):
            return gp.log_marginal_likelihood(ds, gp._unpack(theta, 2))

        fd = central_diff_grad(lml_of, gp._pack(h), step=1e-6)
        assert rel_err(grad, fd) < 1e-5

    def test_gradient_matches_finite_differences_with_gradients(self, rng):
        x = rng.normal(size=(6, 2))
        y = (x**2).sum(axis=1)
        g = 2.0 * x
        ds = gp.GpDataset(inputs=x, values=y, gradients=g)
        h = hyper(d=2, mean=0.1, sig=2.0, ls=[1.1, 0.9], noise=1e-2)
        _, grad = gp.lml_and_gradient(ds, h, include_gradients=True)

        def lml_of(theta):
            return gp.log_marginal_likelihood(ds, gp._unpack(theta, 2), include_gradients=True)

        fd = central_diff_grad(lml_of, gp._pack(h), step=1e-6)
        assert rel_err(grad, fd) < 1e-5


class TestFitAndPredict:
    def test_constant_zero_data_fits_zero_mean(self):
        ds = gp.GpDataset(inputs=[[0.0], [0.5], [1.0]], values=[0.0, 0.0, 0.0])
        model = gp.fit(ds, hyper(d=1, mean=0.5, noise=1e-2))
        assert abs(model.hyperparams.mean_const) < 1e-6

    def test_interpolation_at_noise_floor(self, rng):
        x = rng.normal(size=(8, 2))
        y = np.cos(x[:, 0]) * x[:, 1]
        h = hyper(d=2, sig=1.0, noise=1e-8)
        model = gp.build_model(gp.GpDataset(inputs=x, values=y), h)
        for i in range(8):
            assert model.predict_mean(x[i]) == pytest.approx(y[i], abs=1e-6)

    def test_constant_data_predicts_constant_in_long_lengthscale_limit(self):
        ds = gp.GpDataset(inputs=[[0.0], [1.0], [2.0]], values=[3.0, 3.0, 3.0])
        h = gp.GpHyperparams(
            mean_const=3.0, signal_var=1.0, length_scales=np.array([1e6]), noise_var=1e-8
        )
        model = gp.build_model(ds, h)
        assert model.predict_mean([7.5]) == pytest.approx(3.0, abs=1e-6)

    def test_symmetric_points_against_dense_solve_oracle(self):
        x = np.array([[-1.0], [1.0]])
        y = np.array([1.0, 1.0])
        h = hyper(d=1, mean=0.0, sig=1.2, ls=[0.9], noise=1e-6)
        model = gp.build_model(gp.GpDataset(inputs=x, values=y), h)
        ky = gp._kernel_matrix(x, x, h) + (h.noise_var + h.noise_floor) * np.eye(2)
        ks = gp._kernel_matrix(np.array([[0.0]]), x, h)
        oracle = (ks @ np.linalg.solve(ky, y)).item()
        assert model.predict_mean([0.0]) == pytest.approx(oracle, abs=1e-10)

    def test_posterior_consistency_on_quadratic_residual(self):
        hits = 0
        total = 0
        for trial_seed in range(20):
            trial_rng = np.random.default_rng(100 + trial_seed)
            x = trial_rng.normal(size=(25, 2))
            y = 0.3 * (x**2).sum(axis=1) - 0.2 * x[:, 0] * x[:, 1]
            model = gp.fit(
                gp.GpDataset(inputs=x, values=y), hyper(d=2, noise=1e-4), restarts=1
            )
            queries = trial_rng.normal(size=(10, 2))
            for q in queries:
                truth = 0.3 * (q**2).sum() - 0.2 * q[0] * q[1]
                mean = model.predict_mean(q)
                sd = np.sqrt(max(model.predict_var(q), 1e-12))
                total += 1
                if abs(mean - truth) <= 3.0 * sd + 1e-6:
                    hits += 1
        assert hits / total >= 0.9

    def test_predictive_gradient_constant_dataset(self, rng):
        x = rng.normal(size=(6, 3))
        model = gp.fit(
            gp.GpDataset(inputs=x, values=np.full(6, 2.5)), hyper(d=3, noise=1e-4),
            restarts=1,
        )
        g = model.predict_mean_grad(rng.normal(size=3))
        assert np.linalg.norm(g) <= 1e-8

    def test_predictive_gradient_matches_finite_differences(self, rng):
        x = rng.normal(size=(15, 2))
        y = np.sin(x[:, 0]) * np.cos(x[:, 1])
        model = gp.build_model(
            gp.GpDataset(inputs=x, values=y), hyper(d=2, sig=1.3, ls=[0.9, 1.1])
        )
        for _ in range(20):
            q = rng.normal(size=2)
            fd = central_diff_grad(lambda z: model.predict_mean(z), q, step=1e-5)
            assert rel_err(model.predict_mean_grad(q), fd) < 1e-5

    def test_predictive_gradient_with_gradient_observations(self, rng):
        # plane residual: values zero on a grid, unit gradients observed
        grid = np.stack(
            np.meshgrid(np.linspace(-1, 1, 5), np.linspace(-1, 1, 5)), axis=-1
        ).reshape(-1, 2)
        values = grid.sum(axis=1)
        grads = np.ones_like(grid)
        model = gp.fit(
            gp.GpDataset(inputs=grid, values=values, gradients=grads),
            hyper(d=2, noise=1e-6),
            include_gradients=True,
            restarts=1,
        )
        g = model.predict_mean_grad([0.0, 0.0])
        assert np.allclose(g, [1.0, 1.0], atol=1e-2)

    def test_joint_gradient_matches_finite_differences(self, rng):
        x = rng.normal(size=(7, 2))
        y = (x**2).sum(axis=1)
        model = gp.build_model(
            gp.GpDataset(inputs=x, values=y, gradients=2 * x),
            hyper(d=2, sig=1.5, ls=[1.2, 0.7], noise=1e-6),
            include_gradients=True,
        )
        for _ in range(10):
            q = rng.normal(size=2)
            fd = central_diff_grad(lambda z: model.predict_mean(z), q, step=1e-5)
            assert rel_err(model.predict_mean_grad(q), fd) < 1e-5

    def test_variance_never_increases_with_data(self, rng):
        h = hyper(d=2, sig=1.4, ls=[1.0, 1.5], noise=1e-6)
        x = rng.normal(size=(10, 2))
        y = rng.normal(size=10)
        queries = rng.normal(size=(15, 2))
        small = gp.build_model(gp.GpDataset(inputs=x[:9], values=y[:9]), h)
        big = gp.build_model(gp.GpDataset(inputs=x, values=y), h)
        for q in queries:
            assert big.predict_var(q) <= small.predict_var(q) + 1e-10

    def test_variance_clamped_non_negative(self, rng):
        x = rng.normal(size=(20, 1))
        model = gp.build_model(
            gp.GpDataset(inputs=x, values=np.sin(x[:, 0])), hyper(d=1, noise=1e-8)
        )
        for q in x[:5]:
            assert model.predict_var(q) >= 0.0

    def test_fit_failure_on_non_finite_inputs(self):
        # a NaN input poisons the kernel matrix; jitter escalation cannot
        # rescue it, so the factorisation must fail loudly
        ds = gp.GpDataset(inputs=[[np.nan]], values=[0.0])
        with pytest.raises(gp.GpFitError):
            gp.build_model(
                ds,
                gp.GpHyperparams(
                    mean_const=0.0,
                    signal_var=1.0,
                    length_scales=np.array([1.0]),
                    noise_var=0.0,
                ),
            )
