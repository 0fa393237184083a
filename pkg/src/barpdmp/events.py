"""Event-time generation for inhomogeneous Poisson rates along a ray.

Closed form for piecewise-linear rates max{0, a + b s}; adaptive composite
Simpson with bisection-safeguarded Newton root refinement for generic rates.
Rate callables must accept numpy arrays of ray parameters.
"""
from __future__ import annotations

import numpy as np

INVERSION_TOL = 1e-10
TAU_TOL = 1e-10
WINDOW_LENGTH = 10.0
MAX_WINDOWS = 10_000
_MAX_DOUBLINGS = 11  # finest composite grid: 8 * 2^11 intervals per segment


class RateContractViolation(RuntimeError):
    """The supplied rate function returned a negative value."""


class EventSearchAbort(RuntimeError):
    """Candidate search exhausted the window cap (diagnostic divergence signal)."""


def invert_linear_rate(a: float, b: float, u: float) -> float | None:
    """Smallest tau with integral_0^tau max(0, a + b s) ds = -log u, or None.

    Exact quadratic-root solution; None when the rate's total mass on
    [0, inf) is below the exponential budget.
    """
    if not (0.0 < u < 1.0):
        raise ValueError("u must lie in (0, 1)")
    budget = -np.log(u)
    if abs(b) < 1e-300:
        if a <= 0.0:
            return None
        return budget / a
    if b > 0.0:
        if a >= 0.0:
            disc = a * a + 2.0 * b * budget
            return (-a + np.sqrt(disc)) / b
        # rate switches on at s0 = -a/b; beyond it the budget accrues afresh
        return -a / b + np.sqrt(2.0 * budget / b)
    # b < 0: finite mass a^2 / (2 |b|) available only if a > 0
    if a <= 0.0:
        return None
    disc = a * a + 2.0 * b * budget
    if disc < 0.0:
        return None
    return (-a + np.sqrt(disc)) / b


def _composite_simpson(values: np.ndarray, h: float) -> float:
    return h / 3.0 * (values[0] + values[-1] + 4.0 * values[1:-1:2].sum() + 2.0 * values[2:-2:2].sum())


def _panel_prefix(values: np.ndarray, h: float) -> np.ndarray:
    """Cumulative Simpson integral at even grid nodes (panel boundaries)."""
    f0 = values[:-2:2]
    f1 = values[1:-1:2]
    f2 = values[2::2]
    panels = h / 3.0 * (f0 + 4.0 * f1 + f2)
    return np.concatenate([[0.0], np.cumsum(panels)])


def _check_rate(values: np.ndarray) -> np.ndarray:
    if np.any(values < -1e-12):
        raise RateContractViolation("rate function returned a negative value")
    if not np.all(np.isfinite(values)):
        raise RateContractViolation("rate function returned a non-finite value")
    return np.maximum(values, 0.0)


def _refine_crossing(rate, lo: float, hi: float, lo_positive: bool) -> float:
    """Locate the boundary of the positive region between two grid nodes.

    Two vectorised 33-point scans: boundary error ~ (hi-lo)/1000, whose
    contribution to the integrated rate is quadratically small because the
    rate vanishes at the boundary.
    """
    for _ in range(4):
        grid = np.linspace(lo, hi, 33)
        positive = np.asarray(rate(grid), dtype=float) > 0.0
        flips = np.nonzero(positive[1:] != positive[:-1])[0]
        if flips.size == 0:
            break
        idx = int(flips[0])
        lo, hi = grid[idx], grid[idx + 1]
    return 0.5 * (lo + hi)


def _positive_segments(rate, lo: float, hi: float, n_scan: int = 256):
    """Partition [lo, hi] into maximal intervals where the rate is positive."""
    probe = _check_rate(np.asarray(rate(np.linspace(lo, hi, 17)), dtype=float))
    if np.all(probe > 0.0):
        # interior zero dips, if any, are handled by the clamped integrand
        return [(lo, hi)]
    s = np.linspace(lo, hi, n_scan + 1)
    f = _check_rate(np.asarray(rate(s), dtype=float))
    pos = f > 0.0
    segments = []
    start = None
    for i in range(n_scan + 1):
        if pos[i] and start is None:
            if i == 0:
                start = lo
            else:
                start = _refine_crossing(rate, s[i - 1], s[i], lo_positive=False)
        elif not pos[i] and start is not None:
            end = _refine_crossing(rate, s[i - 1], s[i], lo_positive=True)
            if end > start:
                segments.append((start, end))
            start = None
    if start is not None:
        segments.append((start, hi))
    return segments


def _segment_values(rate, s: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Rate values on the grid, with endpoints nudged into the segment interior
    so that boundary discontinuities are read from the correct side."""
    nudge = 1e-9 * (hi - lo)
    s_eval = s.copy()
    s_eval[0] += nudge
    s_eval[-1] -= nudge
    return _check_rate(np.asarray(rate(s_eval), dtype=float))


def _integrate_segment(rate, lo: float, hi: float, tol: float):
    """Adaptive-doubling composite Simpson with one Romberg correction.

    Returns (integral, finest grid s, finest values f).
    """
    n = 8
    s = np.linspace(lo, hi, n + 1)
    f = _segment_values(rate, s, lo, hi)
    prev = _composite_simpson(f, (hi - lo) / n)
    for _ in range(_MAX_DOUBLINGS):
        n *= 2
        s = np.linspace(lo, hi, n + 1)
        f = _segment_values(rate, s, lo, hi)
        cur = _composite_simpson(f, (hi - lo) / n)
        if abs(cur - prev) <= 15.0 * tol:
            return cur + (cur - prev) / 15.0, s, f
        prev = cur
    return prev, s, f


def _root_in_panel(rate, p0: float, p2: float, prefix: float, target: float) -> float:
    """Solve prefix + integral_{p0}^{tau} rate = target for tau in [p0, p2]."""

    def psi(tau: float) -> float:
        if tau <= p0:
            return prefix - target
        grid = np.linspace(p0, tau, 9)
        grid[0] += 1e-9 * (p2 - p0)
        vals = np.maximum(np.asarray(rate(grid), dtype=float), 0.0)
        return prefix + _composite_simpson(vals, (tau - p0) / 8.0) - target

    lo, hi = p0, p2
    tau = 0.5 * (lo + hi)
    for _ in range(200):
        if hi - lo <= TAU_TOL:
            tau = 0.5 * (lo + hi)
            break
        val = psi(tau)
        if val > 0.0:
            hi = tau
        else:
            lo = tau
        slope = float(rate(np.array([tau]))[0])
        if slope > 0.0:
            newton = tau - val / slope
            if abs(newton - tau) <= 0.1 * TAU_TOL:
                # quadratic convergence: the Newton step is already below the
                # target tau tolerance
                tau = min(max(newton, lo), hi)
                break
            if lo < newton < hi:
                tau = newton
                continue
        tau = 0.5 * (lo + hi)
    return tau


def _invert_on_interval(rate, budget: float, lo: float, hi: float, tol: float):
    """Consume Poisson budget over [lo, hi]; return (tau_or_None, consumed)."""
    consumed = 0.0
    pending = list(_positive_segments(rate, lo, hi))
    while pending:
        seg_lo, seg_hi = pending.pop(0)
        # shrink long segments to just past the coarsely-located crossing, so
        # the adaptive refinement never resolves mass beyond the event
        if seg_hi - seg_lo > 0.5:
            grid = np.linspace(seg_lo, seg_hi, 65)
            vals = np.maximum(np.asarray(rate(grid), dtype=float), 0.0)
            prefix = _panel_prefix(vals, (seg_hi - seg_lo) / 64.0)
            idx = int(np.searchsorted(prefix, (budget - consumed) * 1.25))
            if idx < prefix.size:
                cut = float(grid[2 * min(idx + 1, (prefix.size - 1))])
                if cut < seg_hi - 1e-12:
                    pending.insert(0, (cut, seg_hi))
                    seg_hi = cut
        seg_tol = tol * max((seg_hi - seg_lo) / max(hi - lo, 1e-300), 1e-3)
        integral, s, f = _integrate_segment(rate, seg_lo, seg_hi, seg_tol)
        if consumed + integral < budget - tol:
            consumed += integral
            continue
        # crossing lies in this segment: locate the Simpson panel
        prefix = _panel_prefix(f, (seg_hi - seg_lo) / (s.size - 1))
        # rescale prefix so its total matches the Romberg-corrected integral
        if prefix[-1] > 0.0:
            prefix = prefix * (integral / prefix[-1])
        remaining = budget - consumed
        idx = int(np.searchsorted(prefix, remaining, side="left"))
        idx = min(max(idx, 1), prefix.size - 1)
        p0, p2 = s[2 * (idx - 1)], s[2 * idx]
        return _root_in_panel(rate, p0, p2, prefix[idx - 1], remaining), consumed
    return None, consumed


def invert_rate_along_ray(
    rate, u: float, horizon: float, tol: float = INVERSION_TOL
) -> float | None:
    """Smallest tau <= horizon with integrated rate equal to -log u, else None.

    `rate` must be non-negative, piecewise-continuous, and accept numpy arrays.
    """
    if not (0.0 < u < 1.0):
        raise ValueError("u must lie in (0, 1)")
    if horizon <= 0.0:
        return None
    budget = -np.log(u)
    n_windows = max(int(np.ceil(horizon / WINDOW_LENGTH)), 1)
    consumed = 0.0
    for w in range(n_windows):
        w_lo = w * WINDOW_LENGTH
        w_hi = min((w + 1) * WINDOW_LENGTH, horizon)
        tau, used = _invert_on_interval(rate, budget - consumed, w_lo, w_hi, tol)
        if tau is not None:
            return tau
        consumed += used
    return None


def next_event_time(
    rate,
    u: float,
    *,
    t_max: float | None = None,
    window: float = WINDOW_LENGTH,
    max_windows: int = MAX_WINDOWS,
    tol: float = INVERSION_TOL,
) -> float | None:
    """Windowed candidate search used by the samplers.

    Searches window by window until the budget is spent; returns None as soon
    as the search passes `t_max` (a competing clock wins); raises
    EventSearchAbort if the window cap is exhausted.
    """
    budget = -np.log(u)
    consumed = 0.0
    for w in range(max_windows):
        lo = w * window
        if t_max is not None and lo > t_max:
            return None
        hi = (w + 1) * window
        if t_max is not None:
            # a competing clock preempts everything past t_max
            hi = min(hi, t_max + 1e-9)
        tau, used = _invert_on_interval(rate, budget - consumed, lo, hi, tol)
        if tau is not None:
            return tau
        consumed += used
    raise EventSearchAbort(
        f"no candidate event within {max_windows} windows of length {window}"
    )
