import json

import numpy as np
import pytest

from barpdmp import experiment as xp
from barpdmp import metrics
from barpdmp.pdmp import Skeleton


@pytest.fixture(scope="module")
def small_setting():
    cfg = xp.RunConfig(
        problem={"d": 2, "data_seed": 1},
        method="zigzag",
        surrogate={"kind": "laplace"},
        budget=400,
        seeds=[0, 1],
        reference={"n": 110_000, "seed": 7},
        wasserstein={"enabled": False},
    )
    amap = xp.shared_affine_map(cfg)
    reference = xp.shared_reference(cfg, amap)
    return cfg, amap, reference


class TestRunConfig:
    def test_round_trip(self):
        cfg = xp.RunConfig(problem={"d": 2}, method="bps", budget=800, seeds=[0])
        back = xp.RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back.hash() == cfg.hash()

    def test_checkpoints_default_log_spaced(self):
        cfg = xp.RunConfig(problem={"d": 2}, method="rwm", budget=2000)
        assert cfg.checkpoints[0] == 50
        assert cfg.checkpoints[-1] == 2000
        assert cfg.checkpoints == sorted(set(cfg.checkpoints))

    def test_invalid_checkpoints_rejected(self):
        with pytest.raises(ValueError):
            xp.RunConfig(
                problem={"d": 2}, method="rwm", budget=100, checkpoints=[50, 200]
            )

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            xp.RunConfig(problem={"d": 2}, method="gibbs")

    def test_gp_default_design_size(self):
        cfg = xp.RunConfig(problem={"d": 5}, method="zigzag", surrogate={"kind": "gp"})
        assert cfg.surrogate["n0"] == 125


class TestRunExperiment:
    def test_produces_traces_and_aggregate(self, small_setting):
        cfg, amap, reference = small_setting
        rec = xp.run_experiment(cfg, amap=amap, reference=reference)
        assert len(rec.traces) == 2
        assert all(len(t.n_evals) > 0 for t in rec.traces)
        last = sorted(rec.aggregate)[-1]
        assert rec.aggregate[last]["n_seeds"] == 2
        expect = np.mean(
            [t.rmse_mean[t.n_evals.index(last)] for t in rec.traces if last in t.n_evals]
        )
        assert rec.aggregate[last]["rmse_mean"] == pytest.approx(expect)

    def test_budget_includes_surrogate_training(self, small_setting):
        cfg, amap, reference = small_setting
        gp_cfg = xp.RunConfig(
            problem=dict(cfg.problem),
            method="zigzag",
            surrogate={"kind": "gp", "n0": 50},
            budget=400,
            seeds=[0],
            reference=dict(cfg.reference),
            wasserstein={"enabled": False},
        )
        rec = xp.run_experiment(gp_cfg, amap=amap, reference=reference)
        assert rec.diagnostics[0]["n_evals"] <= 400

    def test_determinism(self, small_setting):
        cfg, amap, reference = small_setting
        rec1 = xp.run_experiment(cfg, amap=amap, reference=reference)
        rec2 = xp.run_experiment(cfg, amap=amap, reference=reference)
        for t1, t2 in zip(rec1.traces, rec2.traces):
            assert t1.n_evals == t2.n_evals
            assert t1.rmse_mean == t2.rmse_mean
            assert t1.ess_per_eval == t2.ess_per_eval

    def test_baseline_methods_run(self, small_setting):
        cfg, amap, reference = small_setting
        for method in ("rwm", "nuts"):
            mcfg = xp.RunConfig(
                problem=dict(cfg.problem),
                method=method,
                budget=300,
                seeds=[0],
                reference=dict(cfg.reference),
                wasserstein={"enabled": False},
            )
            rec = xp.run_experiment(mcfg, amap=amap, reference=reference)
            assert len(rec.traces[0].n_evals) > 0
            assert rec.diagnostics[0]["n_evals"] <= 300 + 1100

    def test_write_outputs_layout(self, small_setting, tmp_path):
        cfg, amap, reference = small_setting
        rec = xp.run_experiment(
            cfg, amap=amap, reference=reference, keep_first_skeleton=True
        )
        manifest = xp.write_outputs(
            str(tmp_path), "smoke", [rec], settings=[xp.setting_record(cfg, amap)]
        )
        out = tmp_path / "smoke"
        assert (out / "manifest.json").exists()
        cell = manifest["cells"][0]
        assert (out / cell["csv"]).exists()
        assert (out / cell["skeleton"]).exists()
        header = (out / cell["csv"]).read_text().splitlines()[0]
        assert header == ",".join(metrics.TRACE_CSV_HEADER)
        # persisted manifest must be valid JSON with per-run summaries and
        # the shared problem/affine-map artifact
        persisted = json.loads((out / "manifest.json").read_text())
        runs = persisted["cells"][0]["runs"]
        assert set(runs) == {"0", "1"}
        assert runs["0"]["n_evals"] <= cfg.budget
        assert "acceptance_ratio" in runs["0"]
        setting = persisted["settings"][0]
        assert np.allclose(setting["affine_map"]["map_point"], amap.map_point)
        assert setting["problem"]["d"] == cfg.d

    def test_trace_checkpoints_respect_budget_counter(self, small_setting):
        cfg, amap, reference = small_setting
        rec = xp.run_experiment(cfg, amap=amap, reference=reference)
        for trace in rec.traces:
            assert all(n <= cfg.budget for n in trace.n_evals)
            assert trace.n_evals == sorted(trace.n_evals)


class TestPresets:
    def test_expected_presets_exist(self):
        presets = xp.preset_sweeps()
        for name in (
            "fig-when-converge",
            "fig-surrogates",
            "fig-adaptive",
            "fig-pdmp-vs-nuts",
            "appendix-a",
            "appendix-b",
        ):
            assert name in presets
            assert len(presets[name]) > 0

    def test_when_converge_scenarios(self):
        cells = xp.preset_sweeps(dims=(2,))["fig-when-converge"]
        kinds = {(c.method, c.surrogate["kind"], c.beta) for c in cells}
        assert ("zigzag", "constant", 2e-2) in kinds
        assert ("zigzag", "constant", 0.0) in kinds
        assert ("zigzag", "random_gradient", 2e-2) in kinds

    def test_surrogate_preset_uses_shared_shrinkage(self):
        cells = xp.preset_sweeps(dims=(2,))["fig-surrogates"]
        zig = [c for c in cells if c.method == "zigzag"]
        assert {c.surrogate["kind"] for c in zig} == {
            "constant",
            "laplace",
            "gp",
            "grad_gp",
        }
        assert all(c.beta == 2e-2 for c in zig)

    def test_appendix_b_rate_grid(self):
        cells = xp.preset_sweeps(dims=(2,))["appendix-b"]
        assert sorted(c.lambda_ref for c in cells) == [1e-3, 1e-2, 1e-1, 1e0]

    def test_budgets_scale_with_dimension(self):
        presets = xp.preset_sweeps()
        by_d = {c.d: c.budget for c in presets["fig-surrogates"] if c.method == "zigzag"}
        assert by_d == {2: 2000, 5: 5000, 10: 10000}
