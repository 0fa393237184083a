"""1D linear-elastic bar inverse problem.

Piecewise-constant log-stiffness field, Gaussian-process prior projected onto
the cell basis, analytic forward displacement, Gaussian likelihood, and the
posterior potential with analytic gradient and Hessian.  Potential objects
carry the forward-model evaluation counter used for all cost accounting.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import erf

OBS_NOISE_STD = 0.025
SATURATION_EXPONENT = 700.0
SATURATION_VALUE = 1e120


@dataclass(frozen=True)
class PriorSpec:
    """Underlying log-stiffness GP: constant mean, signal std, length scale."""

    dimension: int
    mean_field: float = 1.0
    signal_std: float = 1.0
    length_scale: float = 0.3

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.signal_std <= 0 or self.length_scale <= 0:
            raise ValueError("signal_std and length_scale must be positive")


@dataclass
class ProjectedPrior:
    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray


@dataclass
class Observations:
    sensor_locations: np.ndarray
    values: np.ndarray
    noise_std: float = OBS_NOISE_STD

    def __post_init__(self):
        self.sensor_locations = np.asarray(self.sensor_locations, dtype=float).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.sensor_locations.size != self.values.size:
            raise ValueError("sensor_locations and values must match")
        if self.noise_std <= 0:
            raise ValueError("noise_std must be positive")


def _gauss_double_antiderivative(z: np.ndarray, ell: float) -> np.ndarray:
    """G with G'' (z) = exp(-z^2 / (2 l^2)); used for cell-cell SE integrals."""
    s = np.sqrt(2.0) * ell
    return ell * np.sqrt(np.pi / 2.0) * (
        z * erf(z / s) + (s / np.sqrt(np.pi)) * (np.exp(-(z / s) ** 2) - 1.0)
    )


def project_prior(spec: PriorSpec) -> ProjectedPrior:
    """Project the squared-exponential field prior onto the cell basis.

    Cov_ij = d^2 * sig^2 * double integral of exp(-(x-x')^2/(2 l^2)) over
    cell_i x cell_j, evaluated in closed form via erf antiderivatives.
    """
    d = spec.dimension
    edges = np.arange(d + 1) / d
    a, b = edges[:-1], edges[1:]
    g = lambda z: _gauss_double_antiderivative(z, spec.length_scale)
    cov = (
        g(b[:, None] - a[None, :])
        - g(a[:, None] - a[None, :])
        - g(b[:, None] - b[None, :])
        + g(a[:, None] - b[None, :])
    )
    cov *= d * d * spec.signal_std**2
    cov = 0.5 * (cov + cov.T)
    chol = np.linalg.cholesky(cov)
    return ProjectedPrior(mean=np.full(d, spec.mean_field), covariance=cov, chol=chol)


def _overlap_weights(x: float, d: int) -> np.ndarray:
    """Length of [0, x] within each of the d equal cells of [0, 1]."""
    edges = np.arange(d) / d
    return np.clip(np.minimum(x, edges + 1.0 / d) - edges, 0.0, 1.0 / d)


def forward_displacement(theta: np.ndarray, x: float) -> float:
    """Analytic displacement u(x; theta) of the end-loaded bar.

    u(x) = sum_i w_i(x) * exp(-theta_i) with w_i the cell overlap lengths;
    equals the cumulative compliance integral of the piecewise-constant field.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    if not (0.0 <= x <= 1.0):
        raise ValueError("x must lie in [0, 1]")
    w = _overlap_weights(float(x), theta.size)
    return float(w @ np.exp(-theta))


def _sensor_weights(locations: np.ndarray, d: int) -> np.ndarray:
    if locations.size == 0:
        return np.zeros((0, d))
    return np.array([_overlap_weights(float(x), d) for x in locations])


def sensor_grid(d: int) -> np.ndarray:
    """Equidistant sensors x_i = i / (m + 1) with m = floor(3 d / 4)."""
    m = (3 * d) // 4
    return np.arange(1, m + 1) / (m + 1)


def generate_synthetic(spec: PriorSpec, seed: int):
    """Draw a prior ground truth and noisy sensor displacements (deterministic per seed)."""
    prior = project_prior(spec)
    rng = np.random.default_rng(seed)
    theta_star = prior.mean + prior.chol @ rng.standard_normal(spec.dimension)
    locs = sensor_grid(spec.dimension)
    clean = np.array([forward_displacement(theta_star, x) for x in locs])
    noisy = clean + OBS_NOISE_STD * rng.standard_normal(locs.size)
    return theta_star, Observations(sensor_locations=locs, values=noisy)


class EvalCounterMixin:
    """One counter increment per distinct query point; value/gradient/Hessian
    requested at the same point as the previous call share the increment."""

    def _init_counter(self):
        self._eval_count = 0
        self._cache_point = None
        self._cache = None
        self.last_eval_saturated = False

    @property
    def eval_count(self) -> int:
        return self._eval_count

    def _lookup(self, theta: np.ndarray):
        if self._cache_point is not None and np.array_equal(self._cache_point, theta):
            return self._cache
        self._eval_count += 1
        self._cache_point = np.array(theta, dtype=float)
        self._cache = self._compute(self._cache_point)
        return self._cache

    def value(self, theta) -> float:
        return self._lookup(np.asarray(theta, dtype=float).ravel())[0]

    def grad(self, theta) -> np.ndarray:
        return self._lookup(np.asarray(theta, dtype=float).ravel())[1].copy()

    def value_grad(self, theta):
        v, g, _ = self._lookup(np.asarray(theta, dtype=float).ravel())
        return v, g.copy()

    def hessian(self, theta) -> np.ndarray:
        return self._lookup(np.asarray(theta, dtype=float).ravel())[2].copy()


class BarPotential(EvalCounterMixin):
    """Negative log posterior of the bar problem, up to a constant of zero."""

    def __init__(self, prior: ProjectedPrior, observations: Observations):
        self.prior = prior
        self.observations = observations
        self.dim = prior.mean.size
        self._sensor_w = _sensor_weights(observations.sensor_locations, self.dim)
        self._init_counter()

    def _compute(self, theta: np.ndarray):
        self.last_eval_saturated = False
        expo = -theta
        if np.any(np.abs(expo) > SATURATION_EXPONENT):
            self.last_eval_saturated = True
            expo = np.clip(expo, -SATURATION_EXPONENT, SATURATION_EXPONENT)
        with np.errstate(over="ignore", invalid="ignore"):
            inv_e = np.exp(expo)

            centered = theta - self.prior.mean
            prior_grad = cho_solve((self.prior.chol, True), centered)
            prior_hess = cho_solve((self.prior.chol, True), np.eye(self.dim))

            w = self._sensor_w
            sigma2 = self.observations.noise_std**2
            u = w @ inv_e
            r = u - self.observations.values
            # du_k/dtheta_i = -w_ki exp(-theta_i); d2u_k = +diag(w_ki exp(-theta_i))
            jac = -w * inv_e[None, :]
            value = 0.5 * float(r @ r) / sigma2 + 0.5 * float(centered @ prior_grad)
            grad = jac.T @ r / sigma2 + prior_grad
            gauss_newton = jac.T @ jac
            curvature = np.diag((w * inv_e[None, :]).T @ r)
            hess = prior_hess + (gauss_newton + curvature) / sigma2
            hess = 0.5 * (hess + hess.T)
        if not np.isfinite(value):
            self.last_eval_saturated = True
        if self.last_eval_saturated:
            # saturate instead of propagating inf/nan into samplers
            value = float(min(value, SATURATION_VALUE))
            if not np.isfinite(value):
                value = SATURATION_VALUE
            grad = np.nan_to_num(
                grad, nan=0.0, posinf=SATURATION_VALUE, neginf=-SATURATION_VALUE
            )
            hess = np.nan_to_num(
                hess, nan=0.0, posinf=SATURATION_VALUE, neginf=-SATURATION_VALUE
            )
        return value, grad, hess


class QuadraticPotential(EvalCounterMixin):
    """Gaussian potential 0.5 (x - mu)^T P (x - mu); test and proxy target."""

    def __init__(self, precision: np.ndarray, mean: np.ndarray | None = None):
        self.precision = np.atleast_2d(np.asarray(precision, dtype=float))
        self.dim = self.precision.shape[0]
        self.mean = (
            np.zeros(self.dim) if mean is None else np.asarray(mean, dtype=float)
        )
        self._init_counter()

    @classmethod
    def standard(cls, d: int) -> "QuadraticPotential":
        return cls(np.eye(d))

    def _compute(self, theta: np.ndarray):
        c = theta - self.mean
        g = self.precision @ c
        return 0.5 * float(c @ g), g, self.precision.copy()


def make_bar_potential(d: int, data_seed: int, spec: PriorSpec | None = None):
    """Fresh potential (counter at zero) for a synthetic problem instance."""
    spec = spec or PriorSpec(dimension=d)
    theta_star, obs = generate_synthetic(spec, data_seed)
    prior = project_prior(spec)
    return BarPotential(prior, obs), theta_star


def problem_to_json(spec: PriorSpec, seed: int, theta_star, obs: Observations) -> str:
    return json.dumps(
        {
            "d": spec.dimension,
            "seed": seed,
            "mean_field": spec.mean_field,
            "signal_std": spec.signal_std,
            "length_scale": spec.length_scale,
            "theta_star": np.asarray(theta_star).tolist(),
            "sensor_locations": obs.sensor_locations.tolist(),
            "observations": obs.values.tolist(),
            "sigma_obs": obs.noise_std,
        },
        indent=2,
    )


def problem_from_json(text: str):
    rec = json.loads(text)
    spec = PriorSpec(
        dimension=rec["d"],
        mean_field=rec.get("mean_field", 1.0),
        signal_std=rec.get("signal_std", 1.0),
        length_scale=rec.get("length_scale", 0.3),
    )
    obs = Observations(
        sensor_locations=np.array(rec["sensor_locations"]),
        values=np.array(rec["observations"]),
        noise_std=rec["sigma_obs"],
    )
    prior = project_prior(spec)
    return BarPotential(prior, obs), np.array(rec["theta_star"]), spec, rec["seed"]
