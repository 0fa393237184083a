"""Surrogate-assisted piecewise-deterministic Markov process samplers with a
1D elastic-bar Bayesian inverse problem and MCMC baselines."""

from .bar_problem import (
    BarPotential,
    Observations,
    PriorSpec,
    ProjectedPrior,
    QuadraticPotential,
    forward_displacement,
    generate_synthetic,
    make_bar_potential,
    project_prior,
)
from .baselines import ChainResult, nuts_run, rwm_run
from .events import invert_linear_rate, invert_rate_along_ray
from .experiment import RunConfig, RunRecord, preset_sweeps, run_experiment
from .gp import GpDataset, GpHyperparams, GpModel, fit, kernel_eval
from .metrics import (
    ReferencePosterior,
    build_reference,
    ess,
    rmse_mean,
    rmse_var,
    sinkhorn_divergence,
)
from .pdmp import (
    PdmpAbort,
    Skeleton,
    bps_run,
    discretize,
    skeleton_moments,
    zigzag_run,
)
from .surrogates import (
    build_gp_surrogate,
    build_laplace,
    make_surrogate,
)
from .whitening import AffineMap, TransformedPotential, build_map, find_map

__all__ = [
    "AffineMap",
    "BarPotential",
    "ChainResult",
    "GpDataset",
    "GpHyperparams",
    "GpModel",
    "Observations",
    "PdmpAbort",
    "PriorSpec",
    "ProjectedPrior",
    "QuadraticPotential",
    "ReferencePosterior",
    "RunConfig",
    "RunRecord",
    "Skeleton",
    "TransformedPotential",
    "bps_run",
    "build_gp_surrogate",
    "build_laplace",
    "build_map",
    "build_reference",
    "discretize",
    "ess",
    "find_map",
    "fit",
    "forward_displacement",
    "generate_synthetic",
    "invert_linear_rate",
    "invert_rate_along_ray",
    "kernel_eval",
    "make_bar_potential",
    "make_surrogate",
    "nuts_run",
    "preset_sweeps",
    "project_prior",
    "rmse_mean",
    "rmse_var",
    "run_experiment",
    "rwm_run",
    "sinkhorn_divergence",
    "skeleton_moments",
    "zigzag_run",
]
