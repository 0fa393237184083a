"""Zig-Zag and Bouncy Particle samplers with surrogate-assisted thinning.

Candidate event times come from the corrected surrogate rate (surrogate rate
plus a non-negative offset).  Detected upper-bound violations raise the offset
by the observed gap and re-solve the candidate time reusing the same uniform;
the offset decays exponentially with elapsed time at every committed advance.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import events
from .surrogates import Surrogate
from .whitening import TransformedPotential

CORRECTION_CAP = 1000
STALL_CAP = 50
ZERO_GRADIENT_TOL = 1e-14
BOUND_SLACK = 1e-12


class PdmpAbort(RuntimeError):
    """Diagnostic abort (divergent offset dynamics); carries the partial skeleton."""

    def __init__(self, reason: str, skeleton: "Skeleton"):
        super().__init__(reason)
        self.reason = reason
        self.skeleton = skeleton


@dataclass
class Skeleton:
    """Event-time trajectory representation of a PDMP run.

    Positions between events follow xi(t) = xi_k + v_k (t - t_k); the
    trajectory extends past the last event to final_time with the last
    velocity.  eval_counts/eval_times map the model-evaluation counter to
    committed trajectory times for budget-indexed checkpointing.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    kinds: list
    final_time: float
    eval_counts: np.ndarray
    eval_times: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def positions_at(self, query_times: np.ndarray) -> np.ndarray:
        q = np.atleast_1d(np.asarray(query_times, dtype=float))
        idx = np.searchsorted(self.times, q, side="right") - 1
        idx = np.clip(idx, 0, len(self.times) - 1)
        dt = q - self.times[idx]
        return self.positions[idx] + self.velocities[idx] * dt[:, None]

    def time_at_evals(self, n_eval: int) -> float:
        """Last committed trajectory time once the counter reached n_eval."""
        idx = np.searchsorted(self.eval_counts, n_eval, side="right") - 1
        if idx < 0:
            return 0.0
        return float(self.eval_times[idx])


def skeleton_moments(sk: Skeleton, burn_in: float = 0.0):
    """Exact time-average mean and variance over [burn_in, final_time]."""
    t_end = sk.final_time
    if burn_in >= t_end:
        raise ValueError("burn_in must be smaller than the final time")
    ts = sk.times
    seg_end = np.append(ts[1:], max(t_end, ts[-1]))
    a = np.maximum(ts, burn_in)
    b = np.minimum(seg_end, t_end)
    dt = np.maximum(b - a, 0.0)
    x0 = sk.positions + sk.velocities * (a - ts)[:, None]
    v = sk.velocities
    mean_acc = (x0 * dt[:, None] + 0.5 * v * (dt**2)[:, None]).sum(axis=0)
    sq_acc = (
        x0**2 * dt[:, None] + x0 * v * (dt**2)[:, None] + v**2 * (dt**3)[:, None] / 3.0
    ).sum(axis=0)
    span = t_end - burn_in
    mean = mean_acc / span
    var = sq_acc / span - mean**2
    return mean, var


def discretize(sk: Skeleton, n: int, burn_in: float = 0.0) -> np.ndarray:
    """Positions at n times equally spaced over (burn_in, final_time]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t_end = sk.final_time
    span = t_end - burn_in
    q = burn_in + np.arange(1, n + 1) * (span / n)
    return sk.positions_at(q)


def skeleton_to_csv(sk: Skeleton, path) -> None:
    d = sk.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["k", "t", "kind"]
            + [f"xi_{j+1}" for j in range(d)]
            + [f"v_{j+1}" for j in range(d)]
        )
        for k in range(len(sk.times)):
            writer.writerow(
                [k, repr(float(sk.times[k])), sk.kinds[k]]
                + [repr(float(x)) for x in sk.positions[k]]
                + [repr(float(x)) for x in sk.velocities[k]]
            )


def skeleton_from_csv(path) -> Skeleton:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    d = sum(1 for c in header if c.startswith("xi_"))
    times, kinds, pos, vel = [], [], [], []
    for row in rows[1:]:
        times.append(float(row[1]))
        kinds.append(row[2])
        pos.append([float(x) for x in row[3 : 3 + d]])
        vel.append([float(x) for x in row[3 + d : 3 + 2 * d]])
    times = np.array(times)
    return Skeleton(
        times=times,
        positions=np.array(pos),
        velocities=np.array(vel),
        kinds=kinds,
        final_time=float(times[-1]),
        eval_counts=np.array([], dtype=int),
        eval_times=np.array([]),
    )


def truncate_at_time(sk: Skeleton, t_cut: float) -> Skeleton:
    keep = sk.times <= t_cut + 1e-15
    if not np.any(keep):
        keep[0] = True
    return Skeleton(
        times=sk.times[keep],
        positions=sk.positions[keep],
        velocities=sk.velocities[keep],
        kinds=[k for k, m in zip(sk.kinds, keep) if m],
        final_time=t_cut,
        eval_counts=sk.eval_counts,
        eval_times=sk.eval_times,
        diagnostics=sk.diagnostics,
    )


class _RayCache:
    """Memoised surrogate gradients along xi0 + s v, shared across components."""

    def __init__(self, surrogate: Surrogate, xi0: np.ndarray, v: np.ndarray):
        self.surrogate = surrogate
        self.xi0 = xi0
        self.v = v
        self._store: dict = {}

    def grads(self, s: np.ndarray) -> np.ndarray:
        key = (float(s[0]), float(s[-1]), int(s.size))
        hit = self._store.get(key)
        if hit is None:
            pts = self.xi0[None, :] + s[:, None] * self.v[None, :]
            hit = self.surrogate.grad_many(pts)
            if len(self._store) > 128:
                self._store.clear()
            self._store[key] = hit
        return hit


class _RunRecorder:
    def __init__(self, tp: TransformedPotential, xi0, v0, kind0="initial"):
        self.tp = tp
        self.times = [0.0]
        self.positions = [np.array(xi0, dtype=float)]
        self.velocities = [np.array(v0, dtype=float)]
        self.kinds = [kind0]
        self.eval_counts = [tp.eval_count]
        self.eval_times = [0.0]
        self.diag = {
            "candidates": 0,
            "corrections": 0,
            "tested": 0,
            "accepted": 0,
            "refreshes": 0,
            "aborted": None,
            "start_evals": tp.eval_count,
        }

    def mark(self, t: float) -> None:
        self.eval_counts.append(self.tp.eval_count)
        self.eval_times.append(t)

    def event(self, t: float, xi, v, kind: str) -> None:
        self.times.append(t)
        self.positions.append(np.array(xi, dtype=float))
        self.velocities.append(np.array(v, dtype=float))
        self.kinds.append(kind)

    def skeleton(self, final_time: float) -> Skeleton:
        self.diag["end_evals"] = self.tp.eval_count
        self.diag["events"] = len(self.times) - 1
        tested = self.diag["tested"]
        self.diag["acceptance_ratio"] = (
            self.diag["accepted"] / tested if tested else float("nan")
        )
        return Skeleton(
            times=np.array(self.times),
            positions=np.array(self.positions),
            velocities=np.array(self.velocities),
            kinds=self.kinds,
            final_time=final_time,
            eval_counts=np.array(self.eval_counts, dtype=int),
            eval_times=np.array(self.eval_times),
            diagnostics=self.diag,
        )


def _default_gamma0(surrogate: Surrogate, requested) -> float:
    if requested is not None:
        return float(requested)
    # a flat proposal rate needs a non-zero offset to generate any candidate
    return 1.0 if surrogate.kind in ("constant", "random_gradient") else 0.0


def zigzag_run(
    tp: TransformedPotential,
    surrogate: Surrogate,
    beta: float,
    t_end: float,
    seed: int,
    *,
    xi0=None,
    v0=None,
    gamma0=None,
    max_evals: int | None = None,
    correction_cap: int = CORRECTION_CAP,
) -> Skeleton:
    """Component-wise thinning Zig-Zag sampler with corrected surrogate rates."""
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    rng = np.random.default_rng(seed)
    d = tp.dim
    xi = np.zeros(d) if xi0 is None else np.asarray(xi0, dtype=float).copy()
    v = (
        rng.choice([-1.0, 1.0], size=d)
        if v0 is None
        else np.asarray(v0, dtype=float).copy()
    )
    gamma = np.full(d, _default_gamma0(surrogate, gamma0))
    rec = _RunRecorder(tp, xi, v)
    start_evals = tp.eval_count
    t = 0.0
    dt_last = 0.0
    stalls = 0

    def budget_left() -> bool:
        return max_evals is None or tp.eval_count - start_evals < max_evals

    while t < t_end and budget_left():
        gamma *= np.exp(-beta * dt_last)
        surrogate.refresh_draw()
        linear = surrogate.ray_linear_components(xi, v)
        cache = None if linear is not None else _RayCache(surrogate, xi, v)
        us = np.clip(rng.random(d), 1e-300, None)

        def solve_component(i: int):
            if linear is not None:
                a, b = linear
                return events.invert_linear_rate(a[i] + gamma[i], b[i], us[i])
            rate = lambda s, i=i: np.maximum(
                0.0, v[i] * cache.grads(np.atleast_1d(s))[:, i] + gamma[i]
            )
            return events.next_event_time(rate, us[i])

        try:
            taus = np.array(
                [np.inf if (x := solve_component(i)) is None else x for i in range(d)]
            )
        except events.EventSearchAbort as exc:
            rec.diag["aborted"] = str(exc)
            raise PdmpAbort(str(exc), rec.skeleton(t)) from exc

        harvest = []
        attempt_corrections = 0
        while True:
            if not np.any(np.isfinite(taus)):
                rec.diag["aborted"] = "no finite candidate time in any component"
                raise PdmpAbort(rec.diag["aborted"], rec.skeleton(t))
            i_star = int(np.argmin(taus))
            tau = float(taus[i_star])
            xi_p = xi + tau * v
            if not budget_left():
                return rec.skeleton(t)
            val_p, grad_p = tp.value_grad(xi_p)
            rec.diag["candidates"] += 1
            harvest.append((xi_p, val_p))
            true_rate = max(0.0, v[i_star] * grad_p[i_star])
            if linear is not None:
                a, b = linear
                bound = max(0.0, a[i_star] + gamma[i_star] + b[i_star] * tau)
            else:
                g_s = surrogate.grad(xi_p)
                bound = max(0.0, v[i_star] * g_s[i_star] + gamma[i_star])
            gap = true_rate - bound
            if gap <= BOUND_SLACK * max(1.0, true_rate):
                break
            attempt_corrections += 1
            rec.diag["corrections"] += 1
            if attempt_corrections > correction_cap:
                rec.diag["aborted"] = "correction cap exceeded"
                raise PdmpAbort(rec.diag["aborted"], rec.skeleton(t))
            gamma[i_star] += gap
            try:
                new_tau = solve_component(i_star)  # reuse u_{i*}
            except events.EventSearchAbort as exc:
                rec.diag["aborted"] = str(exc)
                raise PdmpAbort(str(exc), rec.skeleton(t)) from exc
            taus[i_star] = np.inf if new_tau is None else new_tau

        if true_rate > bound + BOUND_SLACK * max(1.0, true_rate):
            raise PdmpAbort("upper bound violated after correction", rec.skeleton(t))

        if t + tau <= t:
            # offset runaway: candidate times underflow the time resolution
            stalls += 1
            if stalls > STALL_CAP:
                rec.diag["aborted"] = "time resolution exhausted (offset runaway)"
                raise PdmpAbort(rec.diag["aborted"], rec.skeleton(t))
            continue
        stalls = 0
        t += tau
        xi = xi_p
        dt_last = tau
        rec.mark(t)
        rec.diag["tested"] += 1
        u_acc = rng.random()
        accept_prob = min(true_rate / bound, 1.0) if bound > 0.0 else 0.0
        if u_acc <= accept_prob:
            rec.diag["accepted"] += 1
            v = v.copy()
            v[i_star] = -v[i_star]
            rec.event(t, xi, v, f"flip:{i_star}")
        for point, value in harvest:
            surrogate.observe(point, value)

    return rec.skeleton(min(t_end, max(t, 0.0)) if t >= t_end else t)


def bps_run(
    tp: TransformedPotential,
    surrogate: Surrogate,
    beta: float,
    lambda_ref: float,
    t_end: float,
    seed: int,
    *,
    xi0=None,
    v0=None,
    gamma0=None,
    max_evals: int | None = None,
    correction_cap: int = CORRECTION_CAP,
) -> Skeleton:
    """Bouncy Particle sampler: scalar thinning with corrected surrogate rates,
    specular reflections, and velocity refreshments at rate lambda_ref."""
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if lambda_ref <= 0:
        raise ValueError("lambda_ref must be positive")
    rng = np.random.default_rng(seed)
    d = tp.dim
    xi = np.zeros(d) if xi0 is None else np.asarray(xi0, dtype=float).copy()
    v = (
        rng.standard_normal(d)
        if v0 is None
        else np.asarray(v0, dtype=float).copy()
    )
    gamma = _default_gamma0(surrogate, gamma0)
    rec = _RunRecorder(tp, xi, v)
    start_evals = tp.eval_count
    t = 0.0
    dt_last = 0.0
    stalls = 0

    def budget_left() -> bool:
        return max_evals is None or tp.eval_count - start_evals < max_evals

    while t < t_end and budget_left():
        gamma *= np.exp(-beta * dt_last)
        surrogate.refresh_draw()
        u_ref = max(rng.random(), 1e-300)
        tau_ref = -np.log(u_ref) / lambda_ref
        u_b = max(rng.random(), 1e-300)
        linear = surrogate.ray_linear(xi, v)
        cache = None if linear is not None else _RayCache(surrogate, xi, v)

        def solve_bounce():
            if linear is not None:
                a, b = linear
                return events.invert_linear_rate(a + gamma, b, u_b)
            rate = lambda s: np.maximum(
                0.0, cache.grads(np.atleast_1d(s)) @ v + gamma
            )
            return events.next_event_time(rate, u_b, t_max=tau_ref)

        try:
            tau_b = solve_bounce()
        except events.EventSearchAbort as exc:
            rec.diag["aborted"] = str(exc)
            raise PdmpAbort(str(exc), rec.skeleton(t)) from exc

        harvest = []
        attempt_corrections = 0
        is_refresh = False
        true_rate = bound = 0.0
        grad_p = None
        xi_p = None
        while True:
            if tau_b is None or tau_b > tau_ref:
                is_refresh = True
                break
            xi_p = xi + tau_b * v
            if not budget_left():
                return rec.skeleton(t)
            val_p, grad_p = tp.value_grad(xi_p)
            rec.diag["candidates"] += 1
            harvest.append((xi_p, val_p))
            true_rate = max(0.0, float(v @ grad_p))
            if linear is not None:
                a, b = linear
                bound = max(0.0, a + gamma + b * tau_b)
            else:
                bound = max(0.0, float(surrogate.grad(xi_p) @ v) + gamma)
            gap = true_rate - bound
            if gap <= BOUND_SLACK * max(1.0, true_rate):
                break
            attempt_corrections += 1
            rec.diag["corrections"] += 1
            if attempt_corrections > correction_cap:
                rec.diag["aborted"] = "correction cap exceeded"
                raise PdmpAbort(rec.diag["aborted"], rec.skeleton(t))
            gamma += gap
            try:
                tau_b = solve_bounce()  # reuse u_b
            except events.EventSearchAbort as exc:
                rec.diag["aborted"] = str(exc)
                raise PdmpAbort(str(exc), rec.skeleton(t)) from exc

        if is_refresh:
            t += tau_ref
            xi = xi + tau_ref * v
            dt_last = tau_ref
            v = rng.standard_normal(d)
            rec.diag["refreshes"] += 1
            rec.mark(t)
            rec.event(t, xi, v, "refresh")
        else:
            if true_rate > bound + BOUND_SLACK * max(1.0, true_rate):
                raise PdmpAbort(
                    "upper bound violated after correction", rec.skeleton(t)
                )
            if t + tau_b <= t:
                stalls += 1
                if stalls > STALL_CAP:
                    rec.diag["aborted"] = "time resolution exhausted (offset runaway)"
                    raise PdmpAbort(rec.diag["aborted"], rec.skeleton(t))
                continue
            stalls = 0
            t += tau_b
            xi = xi_p
            dt_last = tau_b
            rec.mark(t)
            rec.diag["tested"] += 1
            u_acc = rng.random()
            accept_prob = min(true_rate / bound, 1.0) if bound > 0.0 else 0.0
            if u_acc <= accept_prob:
                rec.diag["accepted"] += 1
                norm_sq = float(grad_p @ grad_p)
                if np.sqrt(norm_sq) < ZERO_GRADIENT_TOL:
                    # degenerate reflection: resample instead
                    v = rng.standard_normal(d)
                    rec.diag["refreshes"] += 1
                    rec.event(t, xi, v, "refresh")
                else:
                    v = v - 2.0 * (float(v @ grad_p) / norm_sq) * grad_p
                    rec.event(t, xi, v, "bounce")
        for point, value in harvest:
            surrogate.observe(point, value)

    return rec.skeleton(min(t_end, max(t, 0.0)) if t >= t_end else t)
