"""Command-line entry points: preset/config sweeps and reference generation."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import metrics
from .bar_problem import BarPotential, PriorSpec, generate_synthetic, project_prior
from .experiment import (
    DEFAULT_BUDGETS,
    RunConfig,
    preset_sweeps,
    run_experiment,
    setting_record as xp_setting_record,
    shared_affine_map,
    shared_reference,
    write_outputs,
)
from .whitening import TransformedPotential, build_map


def _load_configs(target: str, args) -> tuple[str, list[RunConfig]]:
    dims = tuple(args.d) if args.d else (2, 5, 10)
    seeds = list(range(args.seeds)) if args.seeds else None
    budgets = dict(DEFAULT_BUDGETS)
    if args.budget:
        budgets = {d: args.budget for d in (2, 5, 10, *dims)}
    wasserstein = None
    if args.no_wasserstein:
        wasserstein = {"enabled": False, "max_points": 256, "draws": 2}
    presets = preset_sweeps(dims=dims, seeds=seeds, budgets=budgets, wasserstein=wasserstein)
    if target in presets:
        return target, presets[target]
    with open(target) as fh:
        rec = json.load(fh)
    records = rec if isinstance(rec, list) else [rec]
    configs = [RunConfig.from_dict(r) for r in records]
    if args.seeds:
        for c in configs:
            c.seeds = list(range(args.seeds))
    if args.budget:
        for c in configs:
            c.budget = args.budget
            c.checkpoints = []
            c.__post_init__()
    return "custom", configs


def _cmd_run(args) -> int:
    name, configs = _load_configs(args.target, args)
    # group by problem setting so the map and reference are shared per setting
    by_setting: dict[str, list[RunConfig]] = {}
    for c in configs:
        key = json.dumps(c.problem, sort_keys=True) + json.dumps(c.reference, sort_keys=True)
        by_setting.setdefault(key, []).append(c)
    records = []
    settings = []
    exit_code = 0
    for group in by_setting.values():
        amap = shared_affine_map(group[0])
        reference = shared_reference(group[0], amap)
        settings.append(xp_setting_record(group[0], amap))
        for config in group:
            print(f"[run] {config.label} (budget {config.budget}, {len(config.seeds)} seeds)")
            rec = run_experiment(
                config,
                amap=amap,
                reference=reference,
                workers=args.threads,
                keep_first_skeleton=config.method in ("zigzag", "bps"),
            )
            aborted = [s for s, d in rec.diagnostics.items() if d.get("aborted")]
            if aborted:
                print(f"  aborted seeds: {aborted}")
                exit_code = 2
            records.append(rec)
    write_outputs(args.out, name, records, settings=settings)
    print(f"[done] wrote {len(records)} cells to {args.out}/{name}")
    return exit_code


def _cmd_reference(args) -> int:
    with open(args.problem) as fh:
        rec = json.load(fh)
    problem = rec.get("problem", rec)
    spec = PriorSpec(
        dimension=problem["d"],
        mean_field=problem.get("prior", {}).get("mean_field", 1.0),
        signal_std=problem.get("prior", {}).get("signal_std", 1.0),
        length_scale=problem.get("prior", {}).get("length_scale", 0.3),
    )
    _, obs = generate_synthetic(spec, problem.get("data_seed", 1))
    pot = BarPotential(project_prior(spec), obs)
    amap = build_map(pot, np.asarray(pot.prior.mean))
    tp = TransformedPotential(BarPotential(project_prior(spec), obs), amap)
    x0 = np.random.default_rng(args.seed).standard_normal(spec.dimension)
    ref = metrics.build_reference(tp, args.n, args.seed, x0=x0)
    metrics.save_reference(ref, args.out)
    print(f"[done] reference with {ref.provenance['n_samples']} samples -> {args.out}")
    return 0


def _cmd_presets(_args) -> int:
    for name, configs in preset_sweeps().items():
        print(f"{name}: {len(configs)} cells")
        for c in configs:
            print(f"  - {c.label}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="barpdmp")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a preset or a JSON config file")
    p_run.add_argument("target", help="preset name or config file path")
    p_run.add_argument("--seeds", type=int, default=0, help="override seed count")
    p_run.add_argument("--budget", type=int, default=0, help="override eval budget")
    p_run.add_argument("--out", default="results", help="output directory")
    p_run.add_argument("--threads", type=int, default=1, help="worker processes")
    p_run.add_argument("--d", type=int, action="append", help="restrict dimensions")
    p_run.add_argument("--no-wasserstein", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_ref = sub.add_parser("reference", help="build a reference posterior")
    p_ref.add_argument("problem", help="problem config JSON")
    p_ref.add_argument("--n", type=int, default=200_000)
    p_ref.add_argument("--seed", type=int, required=True)
    p_ref.add_argument("--out", required=True)
    p_ref.set_defaults(func=_cmd_reference)

    p_presets = sub.add_parser("presets", help="list preset sweeps")
    p_presets.set_defaults(func=_cmd_presets)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
