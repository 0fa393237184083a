"""MCMC baselines on the transformed potential: adaptive Random-Walk
Metropolis with windowed covariance rescaling, and a No-U-Turn sampler with
dual-averaging step-size adaptation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

RWM_WINDOW = 100
RWM_LOW_ACCEPT = 0.2
RWM_HIGH_ACCEPT = 0.25
RWM_SHRINK = 0.9
RWM_GROW = 1.1
RWM_EMPIRICAL_AT = 1000
RWM_FREEZE_AT = 2000
NUTS_MAX_DEPTH = 10
NUTS_DELTA = 0.8
NUTS_ADAPT = 200
NUTS_DIVERGENCE = 1000.0


@dataclass
class ChainResult:
    """Sampled chain plus per-iteration bookkeeping.

    chain[0] is the initial state; eval_counts[i] is the cumulative model
    evaluation counter right after producing chain[i].
    """

    chain: np.ndarray
    accepted: np.ndarray
    eval_counts: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def samples_until_evals(self, n_eval: int) -> np.ndarray:
        keep = self.eval_counts <= n_eval
        return self.chain[keep]


def chain_to_csv(res: ChainResult, path) -> None:
    d = res.chain.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["iteration"] + [f"xi_{j+1}" for j in range(d)] + ["accepted", "n_evals_cumulative"]
        )
        for i in range(res.chain.shape[0]):
            writer.writerow(
                [i]
                + [repr(float(x)) for x in res.chain[i]]
                + [int(res.accepted[i]), int(res.eval_counts[i])]
            )


def rwm_run(tp, n_iters: int, seed: int, *, x0=None, max_evals=None) -> ChainResult:
    """Adaptive RWM: every 100 iterations the proposal covariance is scaled by
    0.9 (acceptance < 0.2) or 1.1 (acceptance > 0.25); at iteration 1000 it is
    replaced by the empirical chain covariance times 2.38^2/d; adaptation is
    frozen after iteration 2000.  One model evaluation per proposal."""
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    rng = np.random.default_rng(seed)
    d = tp.dim
    x = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).copy()
    cov = np.eye(d)
    chol = np.eye(d)
    current_val = tp.value(x)
    chain = np.empty((n_iters + 1, d))
    chain[0] = x
    accepted = np.zeros(n_iters + 1, dtype=bool)
    eval_counts = np.empty(n_iters + 1, dtype=int)
    eval_counts[0] = tp.eval_count
    window_accepts = 0
    cov_trace = []
    window_rates = []

    for it in range(1, n_iters + 1):
        if max_evals is not None and eval_counts[it - 1] >= max_evals:
            chain = chain[:it]
            accepted = accepted[:it]
            eval_counts = eval_counts[:it]
            break
        prop = x + chol @ rng.standard_normal(d)
        prop_val = tp.value(prop)
        if np.log(max(rng.random(), 1e-300)) <= current_val - prop_val:
            x, current_val = prop, prop_val
            accepted[it] = True
            window_accepts += 1
        chain[it] = x
        eval_counts[it] = tp.eval_count

        if it % RWM_WINDOW == 0:
            window_rates.append(window_accepts / RWM_WINDOW)
            if it <= RWM_FREEZE_AT:
                rate = window_accepts / RWM_WINDOW
                if rate < RWM_LOW_ACCEPT:
                    cov = cov * RWM_SHRINK
                    chol = chol * np.sqrt(RWM_SHRINK)
                elif rate > RWM_HIGH_ACCEPT:
                    cov = cov * RWM_GROW
                    chol = chol * np.sqrt(RWM_GROW)
            window_accepts = 0
            cov_trace.append(cov.copy())
        if it == RWM_EMPIRICAL_AT:
            emp = np.cov(chain[: it + 1].T, ddof=1)
            emp = np.atleast_2d(emp) * (2.38**2 / d)
            try:
                chol = np.linalg.cholesky(emp)
            except np.linalg.LinAlgError:
                emp = emp + 1e-8 * np.eye(d)
                chol = np.linalg.cholesky(emp)
            cov = emp

    return ChainResult(
        chain=chain,
        accepted=accepted,
        eval_counts=eval_counts,
        diagnostics={
            "method": "rwm",
            "final_cov": cov,
            "cov_trace": cov_trace,
            "window_rates": window_rates,
            "acceptance": float(accepted[1:].mean()) if len(accepted) > 1 else 0.0,
        },
    )


def _leapfrog(tp, x, p, grad, eps):
    p_half = p - 0.5 * eps * grad
    x_new = x + eps * p_half
    val_new, grad_new = tp.value_grad(x_new)
    p_new = p_half - 0.5 * eps * grad_new
    return x_new, p_new, val_new, grad_new


def _find_reasonable_epsilon(tp, x, val, grad, rng):
    d = x.size
    eps = 1.0
    p = rng.standard_normal(d)
    x1, p1, val1, _ = _leapfrog(tp, x, p, grad, eps)
    log_ratio = (-val1 - 0.5 * p1 @ p1) - (-val - 0.5 * p @ p)
    direction = 1.0 if log_ratio > np.log(0.5) else -1.0
    for _ in range(50):
        if direction * log_ratio <= -direction * np.log(2.0):
            break
        eps *= 2.0**direction
        x1, p1, val1, _ = _leapfrog(tp, x, p, grad, eps)
        log_ratio = (-val1 - 0.5 * p1 @ p1) - (-val - 0.5 * p @ p)
    return eps


def nuts_run(
    tp,
    n_iters: int,
    seed: int,
    *,
    x0=None,
    delta: float = NUTS_DELTA,
    n_adapt: int = NUTS_ADAPT,
    max_depth: int = NUTS_MAX_DEPTH,
    max_evals=None,
) -> ChainResult:
    """Slice-formulation NUTS with dual averaging of the step size.

    Every leapfrog step costs one model evaluation; adaptation iterations are
    part of the chain (cold-start accounting)."""
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    rng = np.random.default_rng(seed)
    d = tp.dim
    x = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).copy()
    val, grad = tp.value_grad(x)
    eps = _find_reasonable_epsilon(tp, x, val, grad, rng)
    mu = np.log(10.0 * eps)
    eps_bar, h_bar = 1.0, 0.0
    gamma_da, t0, kappa = 0.05, 10.0, 0.75

    chain = np.empty((n_iters + 1, d))
    chain[0] = x
    accepted = np.zeros(n_iters + 1, dtype=bool)
    eval_counts = np.empty(n_iters + 1, dtype=int)
    eval_counts[0] = tp.eval_count
    divergences = 0
    depths = []
    leapfrogs = 0
    accept_stats = []

    def build_tree(x, p, grad, log_u, direction, depth, joint0):
        nonlocal divergences, leapfrogs
        if depth == 0:
            leapfrogs += 1
            x1, p1, val1, grad1 = _leapfrog(tp, x, p, grad, direction * eps)
            joint = -val1 - 0.5 * p1 @ p1
            n1 = int(log_u <= joint)
            diverged = log_u - NUTS_DIVERGENCE > joint
            if diverged:
                divergences += 1
            s1 = int(not diverged)
            alpha = min(1.0, np.exp(joint - joint0))
            return x1, p1, grad1, x1, p1, grad1, x1, grad1, val1, n1, s1, alpha, 1
        (
            xm, pm, gm, xp, pp, gp, xc, gc, vc, n1, s1, alpha, n_alpha
        ) = build_tree(x, p, grad, log_u, direction, depth - 1, joint0)
        if s1 == 1:
            if direction == -1:
                xm, pm, gm, _, _, _, xc2, gc2, vc2, n2, s2, a2, na2 = build_tree(
                    xm, pm, gm, log_u, direction, depth - 1, joint0
                )
            else:
                _, _, _, xp, pp, gp, xc2, gc2, vc2, n2, s2, a2, na2 = build_tree(
                    xp, pp, gp, log_u, direction, depth - 1, joint0
                )
            if n1 + n2 > 0 and rng.random() < n2 / (n1 + n2):
                xc, gc, vc = xc2, gc2, vc2
            span = xp - xm
            s1 = s2 * int(span @ pm >= 0) * int(span @ pp >= 0)
            n1 += n2
            alpha += a2
            n_alpha += na2
        return xm, pm, gm, xp, pp, gp, xc, gc, vc, n1, s1, alpha, n_alpha

    for it in range(1, n_iters + 1):
        if max_evals is not None and eval_counts[it - 1] >= max_evals:
            chain = chain[:it]
            accepted = accepted[:it]
            eval_counts = eval_counts[:it]
            break
        p0 = rng.standard_normal(d)
        joint0 = -val - 0.5 * p0 @ p0
        log_u = joint0 + np.log(max(rng.random(), 1e-300))
        xm = xp = x
        pm = pp = p0
        gm = gp = grad
        n, s, depth = 1, 1, 0
        alpha_stat, n_alpha = 0.0, 1
        moved = False
        while s == 1 and depth < max_depth:
            direction = -1 if rng.random() < 0.5 else 1
            if direction == -1:
                xm, pm, gm, _, _, _, xc, gc, vc, n1, s1, alpha_stat, n_alpha = (
                    build_tree(xm, pm, gm, log_u, direction, depth, joint0)
                )
            else:
                _, _, _, xp, pp, gp, xc, gc, vc, n1, s1, alpha_stat, n_alpha = (
                    build_tree(xp, pp, gp, log_u, direction, depth, joint0)
                )
            if s1 == 1 and rng.random() < min(1.0, n1 / n):
                x, grad, val = xc, gc, vc
                moved = True
            n += n1
            span = xp - xm
            s = s1 * int(span @ pm >= 0) * int(span @ pp >= 0)
            depth += 1
        depths.append(depth)
        chain[it] = x
        accepted[it] = moved
        eval_counts[it] = tp.eval_count

        accept_stats.append(alpha_stat / n_alpha)
        eta = 1.0 / (it + t0)
        h_bar = (1.0 - eta) * h_bar + eta * (delta - alpha_stat / n_alpha)
        if it <= n_adapt:
            log_eps = mu - np.sqrt(it) / gamma_da * h_bar
            eps = float(np.exp(log_eps))
            w = it**-kappa
            eps_bar = float(np.exp(w * log_eps + (1.0 - w) * np.log(eps_bar)))
        else:
            eps = eps_bar

    return ChainResult(
        chain=chain,
        accepted=accepted,
        eval_counts=eval_counts,
        diagnostics={
            "method": "nuts",
            "step_size": eps,
            "divergences": divergences,
            "mean_depth": float(np.mean(depths)) if depths else 0.0,
            "acceptance_stat": float(h_bar),
            "accept_stats": accept_stats,
            "n_leapfrogs": leapfrogs,
        },
    )
