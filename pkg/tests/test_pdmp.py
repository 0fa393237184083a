import numpy as np
import pytest

from barpdmp import pdmp
from barpdmp.bar_problem import QuadraticPotential, make_bar_potential
from barpdmp.surrogates import (
    ConstantSurrogate,
    build_gp_surrogate,
    build_laplace,
)
from barpdmp.whitening import TransformedPotential, build_map


def gaussian_tp(d=2):
    amap = build_map(QuadraticPotential.standard(d), np.zeros(d))
    return TransformedPotential(QuadraticPotential.standard(d), amap)


def bar_tp(d=2, seed=3):
    pot, _ = make_bar_potential(d, seed)
    amap = build_map(pot, pot.prior.mean)
    fresh, _ = make_bar_potential(d, seed)
    return TransformedPotential(fresh, amap)


def random_skeleton(rng, d=2, n_events=40):
    """Synthetic zig-zag-like skeleton used as a moment-oracle target."""
    times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 1.0, size=n_events))])
    velocities = np.empty((n_events + 1, d))
    positions = np.empty((n_events + 1, d))
    velocities[0] = rng.choice([-1.0, 1.0], size=d)
    positions[0] = rng.normal(size=d)
    kinds = ["initial"]
    for k in range(1, n_events + 1):
        dt = times[k] - times[k - 1]
        positions[k] = positions[k - 1] + velocities[k - 1] * dt
        flip = int(rng.integers(0, d))
        velocities[k] = velocities[k - 1]
        velocities[k, flip] = -velocities[k, flip]
        kinds.append(f"flip:{flip}")
    return pdmp.Skeleton(
        times=times,
        positions=positions,
        velocities=velocities,
        kinds=kinds,
        final_time=float(times[-1]) + 0.5,
        eval_counts=np.arange(n_events + 1),
        eval_times=times.copy(),
    )


class TestSkeletonMoments:
    def test_single_segment_exact(self):
        sk = pdmp.Skeleton(
            times=np.array([0.0]),
            positions=np.array([[0.0]]),
            velocities=np.array([[1.0]]),
            kinds=["initial"],
            final_time=1.0,
            eval_counts=np.array([0]),
            eval_times=np.array([0.0]),
        )
        mean, var = pdmp.skeleton_moments(sk)
        assert mean[0] == pytest.approx(0.5, abs=1e-14)
        assert var[0] == pytest.approx(1.0 / 3.0 - 0.25, abs=1e-14)

    def test_constant_trajectory(self):
        sk = pdmp.Skeleton(
            times=np.array([0.0]),
            positions=np.array([[2.0, -1.0]]),
            velocities=np.array([[0.0, 0.0]]),
            kinds=["initial"],
            final_time=5.0,
            eval_counts=np.array([0]),
            eval_times=np.array([0.0]),
        )
        mean, var = pdmp.skeleton_moments(sk)
        assert np.allclose(mean, [2.0, -1.0])
        assert np.allclose(var, 0.0, atol=1e-14)

    def test_against_fine_discretization(self, rng):
        for trial in range(10):
            sk = random_skeleton(np.random.default_rng(trial), d=2)
            burn = 0.3
            mean, var = pdmp.skeleton_moments(sk, burn)
            samples = pdmp.discretize(sk, 1_000_000, burn)
            assert np.allclose(mean, samples.mean(axis=0), rtol=1e-5, atol=1e-5)
            assert np.allclose(var, samples.var(axis=0), rtol=1e-4, atol=1e-5)

    def test_empty_window_rejected(self):
        sk = random_skeleton(np.random.default_rng(0))
        with pytest.raises(ValueError):
            pdmp.skeleton_moments(sk, burn_in=sk.final_time)


class TestDiscretize:
    def test_single_point_is_final_position(self):
        sk = random_skeleton(np.random.default_rng(1))
        out = pdmp.discretize(sk, 1)
        expected = sk.positions_at(np.array([sk.final_time]))
        assert np.allclose(out, expected)

    def test_event_time_queries_match_stored_positions(self):
        sk = random_skeleton(np.random.default_rng(2))
        got = sk.positions_at(sk.times)
        assert np.allclose(got, sk.positions, atol=1e-12)

    def test_invalid_n(self):
        sk = random_skeleton(np.random.default_rng(3))
        with pytest.raises(ValueError):
            pdmp.discretize(sk, 0)


def check_skeleton_invariants(sk, method):
    dts = np.diff(sk.times)
    assert np.all(dts > 0)
    # position continuity along straight segments
    recon = sk.positions[:-1] + sk.velocities[:-1] * dts[:, None]
    assert np.max(np.abs(recon - sk.positions[1:])) < 1e-10
    if method == "zigzag":
        assert np.all(np.isin(sk.velocities, (-1.0, 1.0)))
        flips = np.sum(sk.velocities[1:] != sk.velocities[:-1], axis=1)
        assert np.all(flips == 1)
    else:
        for k, kind in enumerate(sk.kinds):
            if kind == "bounce":
                v_prev = sk.velocities[k - 1]
                v_new = sk.velocities[k]
                assert np.linalg.norm(v_new) == pytest.approx(
                    np.linalg.norm(v_prev), abs=1e-10
                )


class TestZigZag:
    def test_exact_surrogate_no_corrections_full_acceptance(self):
        tp = gaussian_tp(2)
        surrogate = build_laplace(tp)
        sk = pdmp.zigzag_run(tp, surrogate, beta=2e-2, t_end=200.0, seed=0)
        assert sk.diagnostics["corrections"] == 0
        assert sk.diagnostics["acceptance_ratio"] == 1.0
        check_skeleton_invariants(sk, "zigzag")

    def test_constant_surrogate_triggers_corrections(self):
        tp = gaussian_tp(2)
        sk = pdmp.zigzag_run(tp, ConstantSurrogate(), beta=2e-2, t_end=50.0, seed=0)
        assert sk.diagnostics["corrections"] > 0
        check_skeleton_invariants(sk, "zigzag")

    def test_flat_surrogate_without_offset_aborts(self):
        tp = gaussian_tp(2)
        with pytest.raises(pdmp.PdmpAbort):
            pdmp.zigzag_run(
                tp, ConstantSurrogate(), beta=0.0, t_end=10.0, seed=0, gamma0=0.0
            )

    def test_gaussian_moments_long_run(self):
        tp = gaussian_tp(1)
        surrogate = build_laplace(tp)
        sk = pdmp.zigzag_run(tp, surrogate, beta=2e-2, t_end=1e4, seed=7)
        mean, var = pdmp.skeleton_moments(sk, burn_in=10.0)
        assert abs(mean[0]) < 0.05
        assert abs(var[0] + mean[0] ** 2 - 1.0) < 0.1

    def test_determinism(self):
        def run():
            tp = bar_tp()
            surrogate = build_gp_surrogate(tp, n0=10, seed=3)
            return pdmp.zigzag_run(
                tp, surrogate, beta=2e-2, t_end=30.0, seed=11, xi0=np.array([0.1, -0.2])
            )

        a, b = run(), run()
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.velocities, b.velocities)

    def test_model_evaluation_accounting(self):
        tp = gaussian_tp(2)
        surrogate = build_laplace(tp)
        start = tp.eval_count
        sk = pdmp.zigzag_run(tp, surrogate, beta=2e-2, t_end=50.0, seed=1)
        # exact surrogate: one evaluation per tested candidate, none elsewhere
        assert tp.eval_count - start == sk.diagnostics["tested"]

    def test_budget_stop(self):
        tp = bar_tp()
        surrogate = build_laplace(tp)
        pdmp.zigzag_run(tp, surrogate, beta=2e-2, t_end=1e9, seed=2, max_evals=100)
        assert tp.eval_count <= 102

    def test_gp_surrogate_runs_on_bar_posterior(self):
        tp = bar_tp()
        surrogate = build_gp_surrogate(tp, n0=20, seed=0)
        sk = pdmp.zigzag_run(tp, surrogate, beta=2e-2, t_end=50.0, seed=5)
        check_skeleton_invariants(sk, "zigzag")
        assert sk.diagnostics["events"] > 5


class TestBps:
    def test_exact_surrogate_no_corrections_full_acceptance(self):
        tp = gaussian_tp(2)
        surrogate = build_laplace(tp)
        sk = pdmp.bps_run(
            tp, surrogate, beta=2e-2, lambda_ref=0.1, t_end=200.0, seed=0
        )
        assert sk.diagnostics["corrections"] == 0
        assert sk.diagnostics["acceptance_ratio"] == 1.0
        check_skeleton_invariants(sk, "bps")

    def test_reflection_flips_gradient_component(self):
        tp = gaussian_tp(2)
        surrogate = build_laplace(tp)
        sk = pdmp.bps_run(
            tp, surrogate, beta=2e-2, lambda_ref=0.1, t_end=300.0, seed=3
        )
        found = 0
        for k, kind in enumerate(sk.kinds):
            if kind != "bounce":
                continue
            grad = sk.positions[k]  # standard Gaussian gradient is the position
            v_prev, v_new = sk.velocities[k - 1], sk.velocities[k]
            lhs = float(v_new @ grad)
            rhs = -float(v_prev @ grad)
            assert lhs == pytest.approx(rhs, abs=1e-8)
            found += 1
        assert found > 10

    def test_rate_definition(self, rng):
        tp = gaussian_tp(3)
        for _ in range(5):
            xi = rng.normal(size=3)
            v = rng.normal(size=3)
            assert max(0.0, float(v @ tp.grad(xi))) == max(0.0, float(v @ xi))

    def test_gaussian_covariance_long_run(self):
        tp = gaussian_tp(2)
        surrogate = build_laplace(tp)
        sk = pdmp.bps_run(
            tp, surrogate, beta=2e-2, lambda_ref=0.1, t_end=1e4, seed=9
        )
        mean, var = pdmp.skeleton_moments(sk, burn_in=10.0)
        samples = pdmp.discretize(sk, 200_000, burn_in=10.0)
        cov = np.cov(samples.T)
        assert np.linalg.norm(cov - np.eye(2), "fro") < 0.1
        assert np.all(np.abs(mean) < 0.08)

    def test_refreshes_recorded(self):
        tp = gaussian_tp(2)
        surrogate = build_laplace(tp)
        sk = pdmp.bps_run(
            tp, surrogate, beta=2e-2, lambda_ref=1.0, t_end=100.0, seed=4
        )
        assert sk.diagnostics["refreshes"] > 50
        assert any(k == "refresh" for k in sk.kinds)

    def test_determinism(self):
        def run():
            tp = bar_tp()
            surrogate = build_laplace(tp)
            return pdmp.bps_run(
                tp, surrogate, beta=2e-2, lambda_ref=0.1, t_end=50.0, seed=21
            )

        a, b = run(), run()
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.positions, b.positions)

    def test_invalid_lambda_ref(self):
        tp = gaussian_tp(2)
        with pytest.raises(ValueError):
            pdmp.bps_run(tp, build_laplace(tp), 0.0, 0.0, 10.0, 0)


class TestSkeletonIo:
    def test_csv_round_trip(self, tmp_path):
        sk = random_skeleton(np.random.default_rng(5))
        path = tmp_path / "sk.csv"
        pdmp.skeleton_to_csv(sk, path)
        back = pdmp.skeleton_from_csv(path)
        assert np.array_equal(back.times, sk.times)
        assert np.array_equal(back.positions, sk.positions)
        assert np.array_equal(back.velocities, sk.velocities)
        assert back.kinds == sk.kinds

    def test_truncate_at_time(self):
        sk = random_skeleton(np.random.default_rng(6))
        t_cut = float(sk.times[len(sk.times) // 2]) + 0.01
        trunc = pdmp.truncate_at_time(sk, t_cut)
        assert trunc.final_time == t_cut
        assert np.all(trunc.times <= t_cut + 1e-12)
        q = np.linspace(0.01, t_cut, 7)
        assert np.allclose(trunc.positions_at(q), sk.positions_at(q))
