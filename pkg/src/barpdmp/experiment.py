"""Config-driven experiment runner: seed sweeps over method x surrogate x
dimension grids with budget-indexed metric traces and preset definitions
mirroring the benchmark figure families."""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import metrics, pdmp
from .bar_problem import BarPotential, PriorSpec, generate_synthetic, problem_to_json, project_prior
from .baselines import nuts_run, rwm_run
from .pdmp import PdmpAbort, bps_run, discretize, skeleton_moments, truncate_at_time, zigzag_run
from .surrogates import make_surrogate
from .whitening import AffineMap, TransformedPotential, build_map

PDMP_METHODS = ("zigzag", "bps")
BASELINE_METHODS = ("rwm", "nuts")
DEFAULT_BUDGETS = {2: 2000, 5: 5000, 10: 10000}
BURN_IN_FRACTION = 0.05
T_UNBOUNDED = 1e12


@dataclass
class RunConfig:
    problem: dict
    method: str
    surrogate: dict = field(default_factory=lambda: {"kind": "laplace"})
    beta: float = 2e-2
    lambda_ref: float = 0.1
    budget: int = 2000
    checkpoints: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: list(range(10)))
    reference: dict = field(default_factory=dict)
    wasserstein: dict = field(
        default_factory=lambda: {"enabled": True, "max_points": 256, "draws": 2}
    )
    label: str = ""

    def __post_init__(self):
        if self.method not in PDMP_METHODS + BASELINE_METHODS:
            raise ValueError(f"unknown method: {self.method}")
        self.problem.setdefault("data_seed", 1)
        self.problem.setdefault("sigma_obs", 0.025)
        self.problem.setdefault(
            "prior", {"mean_field": 1.0, "signal_std": 1.0, "length_scale": 0.3}
        )
        kind = self.surrogate.setdefault("kind", "laplace")
        if kind in ("gp", "grad_gp", "adaptive_gp"):
            self.surrogate.setdefault("n0", 25 * self.problem["d"])
        if not self.checkpoints:
            self.checkpoints = default_checkpoints(self.budget)
        if list(self.checkpoints) != sorted(set(self.checkpoints)):
            raise ValueError("checkpoints must be strictly increasing")
        if self.checkpoints[-1] > self.budget:
            raise ValueError("checkpoints must not exceed the budget")
        self.reference = dict(self.reference) or {}
        self.reference.setdefault("n", 200_000)
        self.reference.setdefault("seed", 90_210)
        if not self.label:
            self.label = f"{self.method}_{self.surrogate['kind']}_d{self.problem['d']}"

    @property
    def d(self) -> int:
        return self.problem["d"]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, rec: dict) -> "RunConfig":
        return cls(**rec)

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def default_checkpoints(budget: int, n_points: int = 20, start: int = 50) -> list:
    start = min(start, budget)
    grid = np.geomspace(start, budget, n_points)
    return sorted(set(int(round(x)) for x in grid))


@dataclass
class RunRecord:
    config: RunConfig
    config_hash: str
    traces: list
    aggregate: dict
    diagnostics: dict

    @property
    def any_aborted(self) -> bool:
        return any(d.get("aborted") for d in self.diagnostics.values())


def _problem_pieces(config: RunConfig):
    prior_cfg = config.problem["prior"]
    spec = PriorSpec(
        dimension=config.d,
        mean_field=prior_cfg.get("mean_field", 1.0),
        signal_std=prior_cfg.get("signal_std", 1.0),
        length_scale=prior_cfg.get("length_scale", 0.3),
    )
    theta_star, obs = generate_synthetic(spec, config.problem["data_seed"])
    prior = project_prior(spec)
    return spec, prior, obs, theta_star


def fresh_potential(config: RunConfig) -> BarPotential:
    _, prior, obs, _ = _problem_pieces(config)
    return BarPotential(prior, obs)


def shared_affine_map(config: RunConfig) -> AffineMap:
    pot = fresh_potential(config)
    return build_map(pot, np.asarray(pot.prior.mean))


def shared_reference(config: RunConfig, amap: AffineMap) -> metrics.ReferencePosterior:
    if "path" in config.reference:
        return metrics.load_reference(config.reference["path"])
    tp = TransformedPotential(fresh_potential(config), amap)
    rng = np.random.default_rng(config.reference["seed"])
    x0 = rng.standard_normal(config.d)
    return metrics.build_reference(
        tp, config.reference["n"], config.reference["seed"], x0=x0
    )


def _pdmp_trace(config, sk, reference, w2_seed):
    trace = metrics.MetricTrace(
        method=config.method,
        surrogate=config.surrogate["kind"],
        d=config.d,
        seed=-1,
    )
    w_cfg = config.wasserstein
    for n_chk in config.checkpoints:
        t_chk = sk.time_at_evals(n_chk)
        burn_t = sk.time_at_evals(max(int(math.ceil(BURN_IN_FRACTION * n_chk)), 1))
        if t_chk <= burn_t or t_chk <= 0.0:
            continue
        trunc = truncate_at_time(sk, t_chk)
        mean, var = skeleton_moments(trunc, burn_t)
        samples = discretize(trunc, n_chk, burn_t)
        ess_value = metrics.ess(samples).value if len(samples) >= 10 else 1.0
        wass = 0.0
        if w_cfg.get("enabled", True):
            wass = metrics.wasserstein_checkpoint(
                samples,
                reference,
                n_draws=w_cfg.get("draws", 2),
                seed=w2_seed,
                max_points=w_cfg.get("max_points", 256),
            )
        trace.append(
            n_chk,
            metrics.rmse_mean(mean, reference.mean),
            metrics.rmse_var(var, reference.variances),
            wass,
            ess_value / n_chk,
        )
    return trace


def _chain_trace(config, res, reference, w2_seed):
    trace = metrics.MetricTrace(
        method=config.method, surrogate="none", d=config.d, seed=-1
    )
    w_cfg = config.wasserstein
    for n_chk in config.checkpoints:
        keep = res.eval_counts <= n_chk
        if keep.sum() < 20:
            continue
        burn_cut = BURN_IN_FRACTION * n_chk
        post = res.chain[keep & (res.eval_counts > burn_cut)]
        if post.shape[0] < 10:
            continue
        mean = post.mean(axis=0)
        var = post.var(axis=0)
        ess_value = metrics.ess(post).value
        wass = 0.0
        if w_cfg.get("enabled", True):
            wass = metrics.wasserstein_checkpoint(
                post,
                reference,
                n_draws=w_cfg.get("draws", 2),
                seed=w2_seed,
                max_points=w_cfg.get("max_points", 256),
            )
        trace.append(
            n_chk,
            metrics.rmse_mean(mean, reference.mean),
            metrics.rmse_var(var, reference.variances),
            wass,
            ess_value / n_chk,
        )
    return trace


def run_single_seed(config: RunConfig, seed: int, amap: AffineMap, reference):
    """One (config, seed) cell: fresh potential, surrogate, sampler, metrics."""
    tp = TransformedPotential(fresh_potential(config), amap)
    ss = np.random.SeedSequence([config.problem["data_seed"], config.budget, seed])
    s_init, s_surr, s_run, s_w2 = ss.spawn(4)
    xi0 = np.random.default_rng(s_init).standard_normal(config.d)
    w2_seed = int(s_w2.generate_state(1)[0])
    diag = {"seed": seed, "aborted": None}
    skeleton = None

    if config.method in PDMP_METHODS:
        surrogate = make_surrogate(
            tp,
            config.surrogate["kind"],
            n0=config.surrogate.get("n0", 0),
            seed=s_surr,
        )
        # surrogate training already consumed part of the evaluation budget
        sampling_budget = max(config.budget - tp.eval_count, 0)
        try:
            if config.method == "zigzag":
                skeleton = zigzag_run(
                    tp, surrogate, config.beta, T_UNBOUNDED, s_run,
                    xi0=xi0, max_evals=sampling_budget,
                )
            else:
                skeleton = bps_run(
                    tp, surrogate, config.beta, config.lambda_ref, T_UNBOUNDED, s_run,
                    xi0=xi0, max_evals=sampling_budget,
                )
        except PdmpAbort as exc:
            skeleton = exc.skeleton
            diag["aborted"] = exc.reason
        diag.update(
            {
                k: skeleton.diagnostics.get(k)
                for k in ("events", "corrections", "acceptance_ratio", "refreshes")
            }
        )
        trace = _pdmp_trace(config, skeleton, reference, w2_seed)
    else:
        runner = rwm_run if config.method == "rwm" else nuts_run
        res = runner(tp, config.budget, seed=np.random.default_rng(s_run).integers(2**31), x0=xi0, max_evals=config.budget)
        diag["acceptance"] = res.diagnostics.get("acceptance")
        diag["divergences"] = res.diagnostics.get("divergences")
        trace = _chain_trace(config, res, reference, w2_seed)
    trace.seed = seed
    diag["n_evals"] = tp.eval_count
    return trace, diag, skeleton


def _aggregate(traces, checkpoints) -> dict:
    agg = {}
    for n_chk in checkpoints:
        rows = {
            "rmse_mean": [],
            "rmse_var": [],
            "wasserstein": [],
            "ess_per_eval": [],
        }
        for tr in traces:
            if n_chk in tr.n_evals:
                i = tr.n_evals.index(n_chk)
                rows["rmse_mean"].append(tr.rmse_mean[i])
                rows["rmse_var"].append(tr.rmse_var[i])
                rows["wasserstein"].append(tr.wasserstein[i])
                rows["ess_per_eval"].append(tr.ess_per_eval[i])
        if rows["rmse_mean"]:
            agg[n_chk] = {k: float(np.mean(v)) for k, v in rows.items()}
            agg[n_chk]["n_seeds"] = len(rows["rmse_mean"])
    return agg


def run_experiment(
    config: RunConfig,
    *,
    amap: AffineMap | None = None,
    reference: metrics.ReferencePosterior | None = None,
    workers: int = 1,
    keep_first_skeleton: bool = False,
) -> RunRecord:
    """Run every seed of one grid cell and aggregate the metric traces.

    The affine map and reference can be passed in so that all cells of a
    comparison provably share them; otherwise they are built once here.
    """
    amap = amap if amap is not None else shared_affine_map(config)
    reference = reference if reference is not None else shared_reference(config, amap)
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(run_single_seed, config, s, amap, reference)
                for s in config.seeds
            ]
            results = [f.result() for f in futures]
    else:
        results = [run_single_seed(config, s, amap, reference) for s in config.seeds]

    traces = [r[0] for r in results]
    diagnostics = {r[1]["seed"]: r[1] for r in results}
    record = RunRecord(
        config=config,
        config_hash=config.hash(),
        traces=traces,
        aggregate=_aggregate(traces, config.checkpoints),
        diagnostics=diagnostics,
    )
    if keep_first_skeleton and results and results[0][2] is not None:
        record.first_skeleton = results[0][2]
    return record


def final_rmse_mean(record: RunRecord) -> float:
    """Seed-averaged RMSE of the mean at the last populated checkpoint."""
    keys = sorted(record.aggregate)
    if not keys:
        return float("nan")
    return record.aggregate[keys[-1]]["rmse_mean"]


def final_rmse_var(record: RunRecord) -> float:
    keys = sorted(record.aggregate)
    if not keys:
        return float("nan")
    return record.aggregate[keys[-1]]["rmse_var"]


def preset_sweeps(
    dims=(2, 5, 10), seeds=None, budgets=None, wasserstein=None
) -> dict:
    """The benchmark experiment grid at desk scale, keyed by preset name."""
    seeds = list(seeds) if seeds is not None else list(range(10))
    budgets = budgets or DEFAULT_BUDGETS
    w_cfg = wasserstein or {"enabled": True, "max_points": 256, "draws": 2}

    def cfg(method, d, surrogate, beta=2e-2, lambda_ref=0.1, label=""):
        return RunConfig(
            problem={"d": d},
            method=method,
            surrogate=dict(surrogate),
            beta=beta,
            lambda_ref=lambda_ref,
            budget=budgets.get(d, 2000),
            seeds=list(seeds),
            wasserstein=dict(w_cfg),
            label=label,
        )

    presets: dict[str, list[RunConfig]] = {}

    presets["fig-when-converge"] = [
        cfg("zigzag", d, s, beta=b, label=f"zigzag_{name}_d{d}")
        for d in dims
        for name, s, b in [
            ("const-shrinkage", {"kind": "constant"}, 2e-2),
            ("const-no-shrinkage", {"kind": "constant"}, 0.0),
            ("random-shrinkage", {"kind": "random_gradient"}, 2e-2),
        ]
    ] + [cfg("rwm", d, {"kind": "none"}) for d in dims]

    presets["fig-surrogates"] = [
        cfg("zigzag", d, s)
        for d in dims
        for s in (
            {"kind": "constant"},
            {"kind": "laplace"},
            {"kind": "gp"},
            {"kind": "grad_gp"},
        )
    ] + [cfg("rwm", d, {"kind": "none"}) for d in dims]

    presets["fig-adaptive"] = [
        cfg("zigzag", d, s)
        for d in dims
        for s in ({"kind": "gp"}, {"kind": "adaptive_gp"})
    ]

    presets["fig-pdmp-vs-nuts"] = [
        cfg(m, d, s, lambda_ref=0.1)
        for d in dims
        for m, s in (
            ("zigzag", {"kind": "gp"}),
            ("bps", {"kind": "gp"}),
            ("nuts", {"kind": "none"}),
            ("rwm", {"kind": "none"}),
        )
    ]

    presets["appendix-a"] = [
        cfg(
            "zigzag",
            d,
            s,
            beta=beta,
            label=f"zigzag_{s['kind']}{tag}_d{d}_beta{beta:g}",
        )
        for d in dims
        for s, tag in (
            ({"kind": "constant"}, ""),
            ({"kind": "laplace"}, ""),
            ({"kind": "gp"}, "25"),
        )
        for beta in (2e-3, 2e-2, 2e-1, 2e0)
    ]

    presets["appendix-b"] = [
        cfg("bps", d, {"kind": "gp"}, lambda_ref=lr, label=f"bps_gp_d{d}_lref{lr:g}")
        for d in dims
        for lr in (1e-3, 1e-2, 1e-1, 1e0)
    ]

    return presets


def _json_safe(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def run_summary(rec: RunRecord) -> dict:
    """Per-seed run summary: event counts, corrections, acceptance, N_eval."""
    return {
        str(seed): {
            key: _json_safe(diag.get(key))
            for key in (
                "events",
                "corrections",
                "acceptance_ratio",
                "refreshes",
                "n_evals",
                "aborted",
                "acceptance",
                "divergences",
            )
            if diag.get(key) is not None
        }
        for seed, diag in sorted(rec.diagnostics.items())
    }


def write_outputs(
    out_dir: str,
    preset_name: str,
    records: list,
    *,
    settings: list | None = None,
) -> dict:
    """One CSV per grid cell plus a manifest of config hashes, per-seed run
    summaries, and (optionally) the shared affine map and problem record of
    each setting so all methods provably consume identical inputs."""
    target = os.path.join(out_dir, preset_name)
    os.makedirs(target, exist_ok=True)
    manifest = {"preset": preset_name, "cells": []}
    if settings:
        manifest["settings"] = settings
    for rec in records:
        stem = rec.config.label
        csv_path = os.path.join(target, f"{stem}.csv")
        metrics.traces_to_csv(rec.traces, csv_path)
        entry = {
            "label": stem,
            "hash": rec.config_hash,
            "csv": os.path.basename(csv_path),
            "aborted_seeds": [
                s for s, d in rec.diagnostics.items() if d.get("aborted")
            ],
            "runs": run_summary(rec),
            "config": rec.config.to_dict(),
        }
        skeleton = getattr(rec, "first_skeleton", None)
        if skeleton is not None:
            sk_path = os.path.join(target, f"skeleton_{stem}.csv")
            pdmp.skeleton_to_csv(skeleton, sk_path)
            entry["skeleton"] = os.path.basename(sk_path)
        manifest["cells"].append(entry)
    with open(os.path.join(target, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def setting_record(config: RunConfig, amap: AffineMap) -> dict:
    """Shared-setting artifact: problem data plus the whitening map."""
    return {
        "problem": json.loads(describe_problem(config)),
        "reference": dict(config.reference),
        "affine_map": {
            "map_point": amap.map_point.tolist(),
            "chol_factor": amap.chol_factor.tolist(),
        },
    }


def describe_problem(config: RunConfig) -> str:
    spec, _, obs, theta_star = _problem_pieces(config)
    return problem_to_json(spec, config.problem["data_seed"], theta_star, obs)
