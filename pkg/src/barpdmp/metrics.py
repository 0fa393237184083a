"""Benchmark metrics: moment RMSEs against a reference posterior, debiased
Sinkhorn divergence (entropic approximation of squared 2-Wasserstein), and
effective sample size with Geyer truncation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .baselines import rwm_run

SINKHORN_EPSILON = 0.02
SINKHORN_TOL = 1e-6
SINKHORN_MAX_ITER = 5000
REFERENCE_BURN_IN = 5000
REFERENCE_MIN_SAMPLES = 100_000
_CHUNK = 256


class SinkhornError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def rmse_mean(est, ref) -> float:
    """Root mean squared coordinate-wise error between mean vectors."""
    est = np.asarray(est, dtype=float).ravel()
    ref = np.asarray(ref, dtype=float).ravel()
    if est.size != ref.size:
        raise ValueError("dimension mismatch")
    return float(np.sqrt(np.mean((est - ref) ** 2)))


def rmse_var(est, ref) -> float:
    """Same reduction applied to coordinate-wise variances."""
    return rmse_mean(est, ref)


def _lse_update(points_a, sq_a, points_b, sq_b, pot_b, log_w_b, epsilon):
    """Row-chunked log-domain update: -eps * LSE_j(log w_b + (pot_b_j - C_ij)/eps)
    with squared-Euclidean cost.

    The row-constant |a_i|^2 term passes through the log-sum-exp, so it is
    applied to the output instead of the exponent matrix; the matrix work
    happens in a reused buffer at the dtype of the input points.
    """
    dtype = points_a.dtype
    inner = ((pot_b - sq_b) / epsilon + log_w_b).astype(dtype)
    out = np.empty(points_a.shape[0])
    buf = np.empty((min(_CHUNK, points_a.shape[0]), points_b.shape[0]), dtype=dtype)
    bt = np.ascontiguousarray(points_b.T * dtype.type(2.0 / epsilon))
    for lo in range(0, points_a.shape[0], _CHUNK):
        block = points_a[lo : lo + _CHUNK]
        expo = buf[: block.shape[0]]
        np.matmul(block, bt, out=expo)
        expo += inner[None, :]
        rowmax = expo.max(axis=1)
        expo -= rowmax[:, None]
        # floor far-underflowing exponents: subnormal exp results are slow
        np.maximum(expo, dtype.type(-80.0), out=expo)
        np.exp(expo, out=expo)
        out[lo : lo + _CHUNK] = -epsilon * (
            np.log(expo.sum(axis=1, dtype=np.float64)) + rowmax
        )
    out += sq_a
    return out


_F32_MIN_POINTS = 1500  # below this, double precision sweeps are cheap anyway


def _ot_value_self(a, epsilon, tol, max_iter) -> float:
    """Entropic self-transport value 2 <w, p> via the symmetric averaged
    fixed-point iteration, which is stable and fast for OT_eps(a, a)."""
    n = a.shape[0]
    log_w = -np.log(n)
    use32 = n >= _F32_MIN_POINTS
    pts = a.astype(np.float32) if use32 else a
    sq = (pts**2).sum(axis=1)
    sq_a = (a**2).sum(axis=1)
    p = np.zeros(n)
    eps_k = max(2.0 * float(a.var(axis=0).sum()), epsilon)
    iters = 0
    while eps_k > epsilon:
        p = 0.5 * (p + _lse_update(pts, sq, pts, sq, p, log_w, eps_k))
        eps_k *= 0.5
        iters += 1
    while iters < max_iter:
        p_new = _lse_update(pts, sq, pts, sq, p, log_w, epsilon)
        residual = float(np.abs(np.exp((p - p_new) / epsilon) - 1.0).max()) / n
        p = 0.5 * (p + p_new)
        iters += 1
        if residual < tol:
            p_fin = _lse_update(a, sq_a, a, sq_a, p, log_w, epsilon)
            return float(p.mean() + p_fin.mean())
    raise SinkhornError(
        f"symmetric Sinkhorn did not converge within {max_iter} iterations", residual
    )


_COARSE_SIZE = 2500


def _ot_potentials(a, b, epsilon, tol, max_iter):
    """Converged dual potentials (f, g) of entropic OT between two clouds.

    Multiscale warm start for large problems (solve on a strided subsample,
    extend the potentials), halving epsilon-annealing in single precision,
    then over-relaxed double-precision log-domain iterations; convergence on
    the L-infinity row-marginal residual.
    """
    n, m = a.shape[0], b.shape[0]
    log_wa, log_wb = -np.log(n), -np.log(m)
    use32 = min(n, m) >= _F32_MIN_POINTS
    pa = a.astype(np.float32) if use32 else a
    pb = b.astype(np.float32) if use32 else b
    qa = (pa**2).sum(axis=1)
    qb = (pb**2).sum(axis=1)
    iters = 0
    if min(n, m) > 2 * _COARSE_SIZE:
        # coarse solve on strided subsamples, then one extension sweep each
        stride_a = int(np.ceil(n / _COARSE_SIZE))
        stride_b = int(np.ceil(m / _COARSE_SIZE))
        ca, cb = a[::stride_a], b[::stride_b]
        _, cg = _ot_potentials(ca, cb, epsilon, max(tol, 1e-5), max_iter)
        sq_cb = (cb**2).sum(axis=1)
        f = _lse_update(pa, qa, cb.astype(pa.dtype), sq_cb, cg,
                        -np.log(cb.shape[0]), epsilon)
        g = _lse_update(pb, qb, pa, qa, f, log_wa, epsilon)
    else:
        g = np.zeros(m)
        eps_k = max(float(a.var(axis=0).sum() + b.var(axis=0).sum()), epsilon)
        while eps_k > epsilon:
            f = _lse_update(pa, qa, pb, qb, g, log_wb, eps_k)
            g = _lse_update(pb, qb, pa, qa, f, log_wa, eps_k)
            eps_k *= 0.5
            iters += 1
        f = _lse_update(pa, qa, pb, qb, g, log_wb, epsilon)
        g = _lse_update(pb, qb, pa, qa, f, log_wa, epsilon)
    residual = np.inf
    r_prev = None
    g_cand_prev = None
    while iters < max_iter:
        # one Sinkhorn round costs two sweeps; the plain column update also
        # serves as the convergence check
        f = _lse_update(pa, qa, pb, qb, g, log_wb, epsilon)
        g_cand = _lse_update(pb, qb, pa, qa, f, log_wa, epsilon)
        residual = float(np.abs(np.exp((g - g_cand) / epsilon) - 1.0).max()) / m
        if residual < tol:
            f_fin = _lse_update(a, (a**2).sum(axis=1), b, (b**2).sum(axis=1),
                                g_cand, log_wb, epsilon)
            return f_fin, g_cand
        # Anderson(1) extrapolation on the potential fixed point removes the
        # dominant slow mode of plain Sinkhorn at small epsilon
        r = g_cand - g
        g_next = g_cand
        if r_prev is not None:
            dr = r - r_prev
            denom = float(dr @ dr)
            if denom > 0.0:
                gamma = float(r @ dr) / denom
                gamma = min(max(gamma, -10.0), 0.995)
                mixed = g_cand - gamma * (g_cand - g_cand_prev)
                if np.all(np.isfinite(mixed)):
                    g_next = mixed
        r_prev = r
        g_cand_prev = g_cand
        g = g_next
        iters += 1
    raise SinkhornError(
        f"Sinkhorn did not converge within {max_iter} iterations", residual
    )


def _ot_value(a, b, epsilon, tol, max_iter) -> float:
    """Dual value <w_a, f> + <w_b, g> at the Sinkhorn fixed point."""
    if a is b or (a.shape == b.shape and np.array_equal(a, b)):
        return _ot_value_self(a, epsilon, tol, max_iter)
    f, g = _ot_potentials(a, b, epsilon, tol, max_iter)
    return float(f.mean() + g.mean())


def _as_sample_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] == 0:
        raise ValueError("sample sets must be non-empty 2-D arrays")
    return a


def sinkhorn_divergence(
    a,
    b,
    epsilon: float = SINKHORN_EPSILON,
    *,
    tol: float = SINKHORN_TOL,
    max_iter: int = SINKHORN_MAX_ITER,
) -> float:
    """Debiased Sinkhorn divergence with squared-Euclidean cost.

    S_eps(a, b) = OT_eps(a, b) - OT_eps(a, a)/2 - OT_eps(b, b)/2, a
    non-negative estimate of the squared 2-Wasserstein distance.  All three
    terms run through the same solver, so S(a, a) vanishes identically.
    """
    a = _as_sample_matrix(a)
    b = _as_sample_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError("sample sets must share their dimension")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    # canonical argument order: the divergence is symmetric, and a fixed
    # order makes S(a, b) == S(b, a) and S(a, a) == 0 bit-exactly
    if (a.shape[0], a.tobytes()) > (b.shape[0], b.tobytes()):
        a, b = b, a
    ot_ab = _ot_value(a, b, epsilon, tol, max_iter)
    ot_aa = _ot_value(a, a, epsilon, tol, max_iter)
    ot_bb = _ot_value(b, b, epsilon, tol, max_iter)
    return ot_ab - 0.5 * ot_aa - 0.5 * ot_bb


@dataclass
class EssResult:
    value: float
    per_coordinate: np.ndarray
    degenerate: bool


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = x.size
    centered = x - x.mean()
    nfft = 1 << int(2 * n - 1).bit_length()
    spec = np.fft.rfft(centered, nfft)
    acov = np.fft.irfft(spec * np.conj(spec), nfft)[:n].real
    return acov / n


def _ess_1d(x: np.ndarray) -> tuple[float, bool]:
    n = x.size
    acov = _autocovariance(x)
    if acov[0] <= 1e-300:
        return 1.0, True
    rho = acov / acov[0]
    pair_sum = 0.0
    m = 0
    while 2 * m + 1 < n:
        g = rho[2 * m] + rho[2 * m + 1]
        if g <= 0.0:
            break
        pair_sum += g
        m += 1
    tau = max(2.0 * pair_sum - 1.0, 1.0)
    return float(np.clip(n / tau, 1.0, n)), False


def ess(samples) -> EssResult:
    """Effective sample size N / (1 + 2 sum rho_k) with Geyer's
    initial-positive-sequence truncation; reported as the coordinate minimum."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < samples.shape[1] and samples.shape[0] == 1:
        samples = samples.T
    if samples.shape[0] < 10:
        raise ValueError("need at least 10 samples")
    per = np.empty(samples.shape[1])
    degenerate = False
    for j in range(samples.shape[1]):
        per[j], flag = _ess_1d(samples[:, j])
        degenerate = degenerate or flag
    return EssResult(value=float(per.min()), per_coordinate=per, degenerate=degenerate)


@dataclass
class ReferencePosterior:
    samples: np.ndarray
    mean: np.ndarray
    variances: np.ndarray
    provenance: dict = field(default_factory=dict)

    def check_consistency(self, tol: float = 1e-10) -> bool:
        return bool(
            np.allclose(self.samples.mean(axis=0), self.mean, atol=tol)
            and np.allclose(self.samples.var(axis=0), self.variances, atol=tol)
        )


def build_reference(tp, n: int, seed: int, *, x0=None) -> ReferencePosterior:
    """Long adaptive-RWM run; the first 5000 samples are discarded as burn-in."""
    if n < REFERENCE_MIN_SAMPLES + REFERENCE_BURN_IN:
        raise ValueError(
            f"reference runs need at least {REFERENCE_MIN_SAMPLES + REFERENCE_BURN_IN} samples"
        )
    res = rwm_run(tp, n, seed, x0=x0)
    samples = res.chain[REFERENCE_BURN_IN + 1 :]
    return ReferencePosterior(
        samples=samples,
        mean=samples.mean(axis=0),
        variances=samples.var(axis=0),
        provenance={
            "method": "rwm",
            "n_samples": int(samples.shape[0]),
            "seed": int(seed),
            "burn_in": REFERENCE_BURN_IN,
        },
    )


def save_reference(ref: ReferencePosterior, path) -> None:
    np.savez_compressed(
        path,
        samples=ref.samples,
        mean=ref.mean,
        variances=ref.variances,
        provenance=np.array(
            [f"{k}={v}" for k, v in sorted(ref.provenance.items())], dtype=object
        ),
    )


def load_reference(path) -> ReferencePosterior:
    data = np.load(path, allow_pickle=True)
    prov = {}
    for item in data["provenance"]:
        key, _, value = str(item).partition("=")
        prov[key] = value
    return ReferencePosterior(
        samples=data["samples"],
        mean=data["mean"],
        variances=data["variances"],
        provenance=prov,
    )


def wasserstein_checkpoint(
    samples: np.ndarray,
    reference: ReferencePosterior,
    epsilon: float = SINKHORN_EPSILON,
    *,
    n_draws: int = 10,
    seed: int = 0,
    max_points: int | None = None,
) -> float:
    """Divergence between a method's N samples and R reference draws of equal
    size, averaged over draws.  `max_points` optionally subsamples both sides
    to keep desk-scale sweeps tractable."""
    samples = _as_sample_matrix(samples)
    rng = np.random.default_rng(seed)
    n = samples.shape[0]
    if max_points is not None and n > max_points:
        idx = rng.choice(n, size=max_points, replace=False)
        samples = samples[idx]
        n = max_points
    ot_aa = _ot_value(samples, samples, epsilon, SINKHORN_TOL, SINKHORN_MAX_ITER)
    total = 0.0
    for _ in range(n_draws):
        idx = rng.choice(reference.samples.shape[0], size=n, replace=False)
        draw = reference.samples[idx]
        ot_ab = _ot_value(samples, draw, epsilon, SINKHORN_TOL, SINKHORN_MAX_ITER)
        ot_bb = _ot_value(draw, draw, epsilon, SINKHORN_TOL, SINKHORN_MAX_ITER)
        total += ot_ab - 0.5 * ot_aa - 0.5 * ot_bb
    return total / n_draws


@dataclass
class MetricTrace:
    """Per-run metric checkpoints indexed by model-evaluation count."""

    method: str
    surrogate: str
    d: int
    seed: int
    n_evals: list = field(default_factory=list)
    rmse_mean: list = field(default_factory=list)
    rmse_var: list = field(default_factory=list)
    wasserstein: list = field(default_factory=list)
    ess_per_eval: list = field(default_factory=list)

    def append(self, n_eval, r_mean, r_var, wass, ess_pe) -> None:
        if self.n_evals and n_eval <= self.n_evals[-1]:
            raise ValueError("checkpoint N_eval must be strictly increasing")
        self.n_evals.append(int(n_eval))
        self.rmse_mean.append(float(r_mean))
        self.rmse_var.append(float(r_var))
        self.wasserstein.append(float(wass))
        self.ess_per_eval.append(float(ess_pe))


TRACE_CSV_HEADER = [
    "method",
    "surrogate",
    "d",
    "seed",
    "N_eval",
    "rmse_mean",
    "rmse_var",
    "wasserstein",
    "ess_per_eval",
]


def traces_to_csv(traces, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_HEADER)
        for tr in traces:
            for i in range(len(tr.n_evals)):
                writer.writerow(
                    [
                        tr.method,
                        tr.surrogate,
                        tr.d,
                        tr.seed,
                        tr.n_evals[i],
                        repr(tr.rmse_mean[i]),
                        repr(tr.rmse_var[i]),
                        repr(tr.wasserstein[i]),
                        repr(tr.ess_per_eval[i]),
                    ]
                )
