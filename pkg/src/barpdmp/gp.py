"""Gaussian process regression with an anisotropic squared-exponential kernel.

Supports optional derivative observations (joint value/gradient covariance
blocks), closed-form predictive-mean gradients, and marginal-likelihood
hyperparameter optimisation with analytic gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

# Relative jitter always added to the noisy-kernel diagonal; escalated by 10x
# on Cholesky failure up to the cap before fitting is abandoned.
JITTER_REL = 1e-8
JITTER_REL_CAP = 1e-2
DUPLICATE_TOL = 1e-12


class GpError(ValueError):
    pass


class GpFitError(RuntimeError):
    """Raised when no SPD factorisation or finite objective can be obtained."""


@dataclass(frozen=True)
class GpHyperparams:
    """Kernel and likelihood hyperparameters: constant mean, signal variance,
    per-dimension length scales, observation noise variance."""

    mean_const: float
    signal_var: float
    length_scales: np.ndarray
    noise_var: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        object.__setattr__(self, "length_scales", ls)
        if not np.all(ls > 0.0):
            raise GpError("length_scales must be strictly positive")
        if self.signal_var < 0.0 or self.noise_var < 0.0:
            raise GpError("signal_var and noise_var must be non-negative")

    @property
    def dim(self) -> int:
        return self.length_scales.size

    @property
    def noise_floor(self) -> float:
        return JITTER_REL * self.signal_var

    def effective_noise(self, jitter: float | None = None) -> float:
        """Diagonal bump: observation noise plus the jitter floor."""
        return self.noise_var + (self.noise_floor if jitter is None else jitter)


@dataclass
class GpDataset:
    """Training inputs, scalar targets, and optional per-point gradients."""

    inputs: np.ndarray
    values: np.ndarray
    gradients: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.inputs.shape[0] != self.values.size:
            raise GpError("inputs and values must have the same length")
        if self.gradients is not None:
            self.gradients = np.atleast_2d(np.asarray(self.gradients, dtype=float))
            if self.gradients.shape != self.inputs.shape:
                raise GpError("gradients must match the shape of inputs")
        self._reject_duplicates()

    def _reject_duplicates(self):
        n = self.inputs.shape[0]
        if n < 2:
            return
        diff = self.inputs[:, None, :] - self.inputs[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        dist[np.diag_indices(n)] = np.inf
        if dist.min() <= DUPLICATE_TOL:
            raise GpError("duplicate training inputs within tolerance 1e-12")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def kernel_eval(a, b, h: GpHyperparams) -> float:
    """Anisotropic squared-exponential covariance between two points."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != h.dim or b.size != h.dim:
        raise GpError("point dimension does not match length_scales")
    q = ((a - b) / h.length_scales) ** 2
    return h.signal_var * float(np.exp(-0.5 * q.sum()))


def kernel_grad_x(a, b, h: GpHyperparams) -> np.ndarray:
    """Gradient of the kernel with respect to its first argument.

    d k(a, b) / d a_j = k(a, b) * (b_j - a_j) / l_j^2.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    k = kernel_eval(a, b, h)
    return k * (b - a) / h.length_scales**2


def kernel_cross_derivative(a, b, p: int, q: int, h: GpHyperparams) -> float:
    """cov(df/da_p, df/db_q) for the squared-exponential kernel (0-based p, q)."""
    if not (0 <= p < h.dim and 0 <= q < h.dim):
        raise GpError("derivative index out of range")
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    k = kernel_eval(a, b, h)
    ls2 = h.length_scales**2
    dp = (a[p] - b[p]) / ls2[p]
    dq = (a[q] - b[q]) / ls2[q]
    delta = 1.0 / ls2[p] if p == q else 0.0
    return k * (delta - dp * dq)


def _kernel_matrix(x: np.ndarray, y: np.ndarray, h: GpHyperparams) -> np.ndarray:
    scaled_x = x / h.length_scales
    scaled_y = y / h.length_scales
    sq = (
        (scaled_x**2).sum(axis=1)[:, None]
        - 2.0 * scaled_x @ scaled_y.T
        + (scaled_y**2).sum(axis=1)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    return h.signal_var * np.exp(-0.5 * sq)


def _cross_kernel_cached(q: np.ndarray, scaled_train_t: np.ndarray,
                         train_sq: np.ndarray, h: GpHyperparams) -> np.ndarray:
    """k(q, X) against pre-scaled training inputs; the hot prediction path."""
    scaled_q = q / h.length_scales
    sq = scaled_q @ scaled_train_t
    sq *= -2.0
    sq += (scaled_q**2).sum(axis=1)[:, None]
    sq += train_sq[None, :]
    sq *= -0.5
    np.exp(sq, out=sq)
    sq *= h.signal_var
    return sq


def _joint_kernel_matrix(x: np.ndarray, h: GpHyperparams) -> np.ndarray:
    """(1+d)N x (1+d)N covariance of [f(x_i); df/dx_p(x_i)] tiles.

    Tile layout groups by derivative dimension: rows [0:N] are values,
    rows [N(1+p):N(2+p)] are d/dx_p observations.
    """
    n, d = x.shape
    k0 = _kernel_matrix(x, x, h)
    ls2 = h.length_scales**2
    size = n * (1 + d)
    big = np.empty((size, size))
    big[:n, :n] = k0
    dmats = [(x[:, p, None] - x[None, :, p]) / ls2[p] for p in range(d)]
    for p in range(d):
        gv = -k0 * dmats[p]
        big[n * (1 + p) : n * (2 + p), :n] = gv
        big[:n, n * (1 + p) : n * (2 + p)] = gv.T
        for q in range(d):
            gg = k0 * ((1.0 / ls2[p] if p == q else 0.0) - dmats[p] * dmats[q])
            big[n * (1 + p) : n * (2 + p), n * (1 + q) : n * (2 + q)] = gg
    return big


def _joint_kernel_length_derivative(
    x: np.ndarray, h: GpHyperparams, j: int, k0: np.ndarray
) -> np.ndarray:
    """d K_joint / d l_j with the same tile layout as _joint_kernel_matrix."""
    n, d = x.shape
    ls = h.length_scales
    ls2 = ls**2
    dmats = [(x[:, p, None] - x[None, :, p]) / ls2[p] for p in range(d)]
    ej = (x[:, j, None] - x[None, :, j]) ** 2 / ls[j] ** 3
    size = n * (1 + d)
    big = np.empty((size, size))
    big[:n, :n] = k0 * ej
    for p in range(d):
        gv = -k0 * (ej * dmats[p] - (2.0 * dmats[p] / ls[p] if p == j else 0.0))
        big[n * (1 + p) : n * (2 + p), :n] = gv
        big[:n, n * (1 + p) : n * (2 + p)] = gv.T
        for q in range(d):
            base = (1.0 / ls2[p] if p == q else 0.0) - dmats[p] * dmats[q]
            extra = np.zeros_like(k0)
            if p == j:
                if q == j:
                    extra = extra - 2.0 / ls[p] ** 3
                extra = extra + 2.0 * dmats[p] * dmats[q] / ls[p]
            if q == j:
                extra = extra + 2.0 * dmats[p] * dmats[q] / ls[q]
            big[n * (1 + p) : n * (2 + p), n * (1 + q) : n * (2 + q)] = k0 * (
                ej * base + extra
            )
    return big


@dataclass
class GpModel:
    """Fitted GP: hyperparameters, data, Cholesky factor of K_y and weights.

    Immutable once constructed; prediction methods are pure.
    """

    hyperparams: GpHyperparams
    dataset: GpDataset
    include_gradients: bool
    factorization: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.dataset.dim

    def _scaled_train(self):
        cached = getattr(self, "_scaled_cache", None)
        if cached is None:
            scaled = self.dataset.inputs / self.hyperparams.length_scales
            cached = (np.ascontiguousarray(scaled.T), (scaled**2).sum(axis=1))
            object.__setattr__(self, "_scaled_cache", cached)
        return cached

    def _cross_k0(self, q: np.ndarray) -> np.ndarray:
        scaled_t, train_sq = self._scaled_train()
        return _cross_kernel_cached(q, scaled_t, train_sq, self.hyperparams)

    def _check_query(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.ndim == 1:
            q = q[None, :]
        if q.shape[1] != self.dim:
            raise GpError("query dimension does not match model")
        return q

    def _cross_columns(self, q: np.ndarray) -> np.ndarray:
        """Covariance rows between f(query) and all (joint) observations."""
        h = self.hyperparams
        x = self.dataset.inputs
        k0 = self._cross_k0(q)
        if not self.include_gradients:
            return k0
        n, d = x.shape
        ls2 = h.length_scales**2
        cols = [k0]
        for p in range(d):
            # cov(f(q), df/dx_p(x_i)) = k0 * (q_p - x_p) / l_p^2
            cols.append(k0 * (q[:, p, None] - x[None, :, p]) / ls2[p])
        return np.hstack(cols)

    def predict_mean_many(self, queries: np.ndarray) -> np.ndarray:
        q = self._check_query(queries)
        out = np.empty(q.shape[0])
        for lo in range(0, q.shape[0], 2048):
            block = q[lo : lo + 2048]
            ks = self._cross_columns(block)
            out[lo : lo + 2048] = self.hyperparams.mean_const + ks @ self.alpha
        return out

    def predict_mean(self, query) -> float:
        return float(self.predict_mean_many(np.atleast_2d(query))[0])

    def predict_mean_grad_many(self, queries: np.ndarray) -> np.ndarray:
        q = self._check_query(queries)
        out = np.empty_like(q)
        for lo in range(0, q.shape[0], 2048):
            out[lo : lo + 2048] = self._grad_block(q[lo : lo + 2048])
        return out

    def _grad_block(self, q: np.ndarray) -> np.ndarray:
        h = self.hyperparams
        x = self.dataset.inputs
        n, d = x.shape
        ls2 = h.length_scales**2
        k0 = self._cross_k0(q)
        alpha_v = self.alpha[:n]
        # value-observation part: sum_i a_i k0 * (x_i - q) / l^2
        a = k0 * alpha_v[None, :]
        grad = (a @ x - a.sum(axis=1)[:, None] * q) / ls2[None, :]
        if self.include_gradients:
            alpha_g = self.alpha[n:].reshape(d, n).T  # (n, d), column p = d/dx_p
            b = alpha_g / ls2[None, :]
            # s[m, i] = sum_q b[i, q] * (q_mq - x_iq)
            s = q @ b.T - (b * x).sum(axis=1)[None, :]
            grad += (k0 @ b)  # Kronecker-delta term of the cross derivative
            ks = k0 * s
            grad -= (ks.sum(axis=1)[:, None] * q - ks @ x) / ls2[None, :]
        return grad

    def predict_mean_grad(self, query) -> np.ndarray:
        return self.predict_mean_grad_many(np.atleast_2d(query))[0]

    def predict_var(self, query) -> float:
        q = self._check_query(query)
        ks = self._cross_columns(q)
        v = solve_triangular(self.factorization, ks.T, lower=True)
        var = self.hyperparams.signal_var - float((v**2).sum())
        return max(var, 0.0)


def _pack(h: GpHyperparams) -> np.ndarray:
    return np.concatenate(
        [
            [h.mean_const, np.log(h.signal_var)],
            np.log(h.length_scales),
            [np.log(max(h.noise_var, 1e-300))],
        ]
    )


def _unpack(theta: np.ndarray, d: int) -> GpHyperparams:
    return GpHyperparams(
        mean_const=float(theta[0]),
        signal_var=float(np.exp(theta[1])),
        length_scales=np.exp(theta[2 : 2 + d]),
        noise_var=float(np.exp(theta[2 + d])),
    )


def _build_ky(dataset: GpDataset, h: GpHyperparams, include_gradients: bool):
    x = dataset.inputs
    k = _joint_kernel_matrix(x, h) if include_gradients else _kernel_matrix(x, x, h)
    return k


def _observation_vector(dataset: GpDataset, include_gradients: bool) -> np.ndarray:
    if not include_gradients:
        return dataset.values
    return np.concatenate([dataset.values, dataset.gradients.T.ravel()])


def _value_mask(n: int, d: int, include_gradients: bool) -> np.ndarray:
    if not include_gradients:
        return np.ones(n)
    m = np.zeros(n * (1 + d))
    m[:n] = 1.0
    return m


def _chol_with_escalation(k: np.ndarray, h: GpHyperparams):
    """Cholesky of K + (noise + jitter) I, escalating jitter up to the cap."""
    jitter = JITTER_REL * h.signal_var
    cap = JITTER_REL_CAP * max(h.signal_var, 1.0)
    while True:
        try:
            ky = k + (h.noise_var + jitter) * np.eye(k.shape[0])
            return cholesky(ky, lower=True), jitter
        except np.linalg.LinAlgError:
            pass
        except ValueError:
            pass
        jitter *= 10.0
        if jitter > cap:
            raise GpFitError("kernel matrix not SPD after jitter escalation")


def log_marginal_likelihood(
    dataset: GpDataset, h: GpHyperparams, include_gradients: bool = False
) -> float:
    """Gaussian log-evidence of the data under the (joint) kernel."""
    k = _build_ky(dataset, h, include_gradients)
    chol, _ = _chol_with_escalation(k, h)
    z = _observation_vector(dataset, include_gradients)
    ones = _value_mask(len(dataset), dataset.dim, include_gradients)
    resid = z - h.mean_const * ones
    alpha = cho_solve((chol, True), resid)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    n_obs = z.size
    return float(-0.5 * resid @ alpha - 0.5 * logdet - 0.5 * n_obs * np.log(2 * np.pi))


def lml_and_gradient(
    dataset: GpDataset, h: GpHyperparams, include_gradients: bool = False
):
    """LML value and its gradient in [mean, log sig_var, log l_1.., log noise]."""
    x = dataset.inputs
    n, d = x.shape
    k = _build_ky(dataset, h, include_gradients)
    chol, jitter = _chol_with_escalation(k, h)
    z = _observation_vector(dataset, include_gradients)
    ones = _value_mask(n, d, include_gradients)
    resid = z - h.mean_const * ones
    alpha = cho_solve((chol, True), resid)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    n_obs = z.size
    lml = float(-0.5 * resid @ alpha - 0.5 * logdet - 0.5 * n_obs * np.log(2 * np.pi))

    kinv = cho_solve((chol, True), np.eye(n_obs))
    m = np.outer(alpha, alpha) - kinv

    grad = np.empty(d + 3)
    grad[0] = float(ones @ alpha)
    # d K_y / d log sig_var = K_noiseless + jitter * I (jitter scales with sig_var)
    grad[1] = 0.5 * float((m * k).sum()) + 0.5 * jitter * np.trace(m)
    if include_gradients:
        k0 = _kernel_matrix(x, x, h)
        for j in range(d):
            dk = _joint_kernel_length_derivative(x, h, j, k0)
            grad[2 + j] = 0.5 * h.length_scales[j] * float((m * dk).sum())
    else:
        ls = h.length_scales
        for j in range(d):
            ej = (x[:, j, None] - x[None, :, j]) ** 2 / ls[j] ** 3
            grad[2 + j] = 0.5 * ls[j] * float((m * (k * ej)).sum())
    grad[2 + d] = 0.5 * h.noise_var * float(np.trace(m))
    return lml, grad


_LOG_BOUNDS = {
    "signal_var": (np.log(1e-12), np.log(1e10)),
    "length": (np.log(1e-3), np.log(1e5)),
    "noise_var": (np.log(1e-12), np.log(1e6)),
}


def fit(
    dataset: GpDataset,
    init: GpHyperparams,
    include_gradients: bool = False,
    *,
    restarts: int = 3,
    max_iter: int = 200,
    seed: int = 0,
) -> GpModel:
    """Maximise the log marginal likelihood and return the fitted model.

    Optimisation runs in log-space for the positive parameters using L-BFGS-B
    with analytic gradients; `restarts` runs (first one from `init`, the rest
    from perturbed starts) keep the best objective.
    """
    if len(dataset) == 0:
        raise GpError("dataset must be non-empty")
    if include_gradients and dataset.gradients is None:
        raise GpError("include_gradients requires gradient observations")
    d = dataset.dim
    if init.dim != d:
        raise GpError("init length_scales dimension does not match dataset")

    def objective(theta):
        try:
            h = _unpack(theta, d)
            lml, grad = lml_and_gradient(dataset, h, include_gradients)
        except (GpFitError, FloatingPointError):
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(lml):
            return 1e25, np.zeros_like(theta)
        return -lml, -grad

    bounds = (
        [(None, None), _LOG_BOUNDS["signal_var"]]
        + [_LOG_BOUNDS["length"]] * d
        + [_LOG_BOUNDS["noise_var"]]
    )
    x0 = np.clip(
        _pack(init),
        [b[0] if b[0] is not None else -np.inf for b in bounds],
        [b[1] if b[1] is not None else np.inf for b in bounds],
    )
    rng = np.random.default_rng(seed)
    best = None
    for r in range(max(restarts, 1)):
        start = x0 if r == 0 else x0 + rng.normal(scale=0.3, size=x0.size)
        start = np.clip(
            start,
            [b[0] if b[0] is not None else -np.inf for b in bounds],
            [b[1] if b[1] is not None else np.inf for b in bounds],
        )
        res = minimize(
            objective,
            start,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_iter, "gtol": 1e-6, "ftol": 1e-12},
        )
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun) or best.fun >= 1e25:
        raise GpFitError("marginal-likelihood optimisation failed")

    h = _unpack(best.x, d)
    k = _build_ky(dataset, h, include_gradients)
    chol, jitter = _chol_with_escalation(k, h)
    z = _observation_vector(dataset, include_gradients)
    ones = _value_mask(len(dataset), d, include_gradients)
    alpha = cho_solve((chol, True), z - h.mean_const * ones)
    return GpModel(
        hyperparams=h,
        dataset=dataset,
        include_gradients=include_gradients,
        factorization=chol,
        alpha=alpha,
        jitter=jitter,
    )


def build_model(
    dataset: GpDataset, h: GpHyperparams, include_gradients: bool = False
) -> GpModel:
    """Factorise and weight a model at fixed hyperparameters (no optimisation)."""
    k = _build_ky(dataset, h, include_gradients)
    chol, jitter = _chol_with_escalation(k, h)
    z = _observation_vector(dataset, include_gradients)
    ones = _value_mask(len(dataset), dataset.dim, include_gradients)
    alpha = cho_solve((chol, True), z - h.mean_const * ones)
    return GpModel(h, dataset, include_gradients, chol, alpha, jitter)


def predict_mean(model: GpModel, query) -> float:
    return model.predict_mean(query)


def predict_mean_grad(model: GpModel, query) -> np.ndarray:
    return model.predict_mean_grad(query)


def dataset_to_csv(dataset: GpDataset, path) -> None:
    """Write the dataset as CSV columns x_1..x_d, y[, g_1..g_d]."""
    d = dataset.dim
    header = [f"x_{j+1}" for j in range(d)] + ["y"]
    cols = [dataset.inputs, dataset.values[:, None]]
    if dataset.gradients is not None:
        header += [f"g_{j+1}" for j in range(d)]
        cols.append(dataset.gradients)
    data = np.hstack(cols)
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="")


def dataset_from_csv(path) -> GpDataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    d = sum(1 for c in header if c.startswith("x_"))
    has_grad = any(c.startswith("g_") for c in header)
    grads = data[:, d + 1 : 2 * d + 1] if has_grad else None
    return GpDataset(inputs=data[:, :d], values=data[:, d], gradients=grads)
