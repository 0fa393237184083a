"""Surrogate potentials over whitened coordinates for proposal-rate construction.

Kinds: constant, random-gradient (stress test), Laplace, GP residual on top of
Laplace, gradient-observing GP, and the milestone-refitted adaptive GP.  All
surrogate evaluations are free: they never touch the true model counter.
"""
from __future__ import annotations

import warnings

import numpy as np

from . import gp
from .whitening import TransformedPotential

ADAPTIVE_HARD_CAP = 1000
ADAPTIVE_MILESTONE_LEVELS = 5


class Surrogate:
    """Approximate potential exposing value and gradient in whitened coords."""

    kind = "base"

    def value(self, xi) -> float:
        raise NotImplementedError

    def grad(self, xi) -> np.ndarray:
        raise NotImplementedError

    def grad_many(self, xis: np.ndarray) -> np.ndarray:
        return np.array([self.grad(x) for x in np.atleast_2d(xis)])

    def ray_linear(self, xi0: np.ndarray, v: np.ndarray):
        """(a, b) with <v, grad(xi0 + s v)> = a + b s when exact, else None."""
        return None

    def ray_linear_components(self, xi0: np.ndarray, v: np.ndarray):
        """(a, b) vectors with v_i d_i(xi0 + s v) = a_i + b_i s, else None."""
        return None

    def refresh_draw(self, rng=None) -> None:
        """Hook for per-attempt stochastic surrogates; no-op by default."""

    def observe(self, xi, value: float) -> None:
        """Hook for adaptive surrogates; no-op by default."""


class ConstantSurrogate(Surrogate):
    """Flat potential: zero gradient, correctness entirely via offsets."""

    kind = "constant"

    def __init__(self, const: float = 0.0):
        self.const = const

    def value(self, xi) -> float:
        return self.const

    def grad(self, xi) -> np.ndarray:
        return np.zeros_like(np.asarray(xi, dtype=float))

    def grad_many(self, xis):
        return np.zeros_like(np.atleast_2d(np.asarray(xis, dtype=float)))

    def ray_linear(self, xi0, v):
        return 0.0, 0.0

    def ray_linear_components(self, xi0, v):
        d = np.asarray(xi0).size
        return np.zeros(d), np.zeros(d)


class RandomGradientSurrogate(Surrogate):
    """Gradient components drawn i.i.d. U(-0.5, 0.5), frozen per candidate
    attempt and held constant along the ray."""

    kind = "random_gradient"

    def __init__(self, dim: int, seed: int = 0):
        self.dim = dim
        self.rng = np.random.default_rng(seed)
        self.current = np.zeros(dim)

    def refresh_draw(self, rng=None) -> None:
        source = self.rng if rng is None else rng
        self.current = source.uniform(-0.5, 0.5, size=self.dim)

    def value(self, xi) -> float:
        return float(self.current @ np.asarray(xi, dtype=float))

    def grad(self, xi) -> np.ndarray:
        return self.current.copy()

    def grad_many(self, xis):
        xis = np.atleast_2d(xis)
        return np.broadcast_to(self.current, xis.shape).copy()

    def ray_linear(self, xi0, v):
        return float(np.asarray(v) @ self.current), 0.0

    def ray_linear_components(self, xi0, v):
        return np.asarray(v, dtype=float) * self.current, np.zeros(self.dim)


class LaplaceSurrogate(Surrogate):
    """Standard-normal potential in whitened coordinates plus a constant."""

    kind = "laplace"

    def __init__(self, const: float):
        self.const = const

    def value(self, xi) -> float:
        xi = np.asarray(xi, dtype=float)
        return 0.5 * float(xi @ xi) + self.const

    def grad(self, xi) -> np.ndarray:
        return np.asarray(xi, dtype=float).copy()

    def grad_many(self, xis):
        return np.atleast_2d(np.asarray(xis, dtype=float)).copy()

    def ray_linear(self, xi0, v):
        v = np.asarray(v, dtype=float)
        return float(v @ np.asarray(xi0, dtype=float)), float(v @ v)

    def ray_linear_components(self, xi0, v):
        v = np.asarray(v, dtype=float)
        xi0 = np.asarray(xi0, dtype=float)
        return v * xi0, v * v


class GpSurrogate(Surrogate):
    """Laplace plus GP residual mean: value 0.5|xi|^2 + c + m(xi)."""

    kind = "gp"

    def __init__(self, const: float, model: gp.GpModel):
        self.const = const
        self.model = model

    def value(self, xi) -> float:
        xi = np.asarray(xi, dtype=float)
        return 0.5 * float(xi @ xi) + self.const + self.model.predict_mean(xi)

    def grad(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return xi + self.model.predict_mean_grad(xi)

    def grad_many(self, xis):
        xis = np.atleast_2d(np.asarray(xis, dtype=float))
        return xis + self.model.predict_mean_grad_many(xis)


class GradientGpSurrogate(GpSurrogate):
    kind = "grad_gp"


class AdaptiveGpSurrogate(GpSurrogate):
    """GP surrogate that harvests (xi, value) pairs during sampling and refits
    when the accumulated training set crosses milestone sizes n0 * 2^n."""

    kind = "adaptive_gp"

    def __init__(self, const: float, model: gp.GpModel, n0: int):
        super().__init__(const, model)
        self.n0 = n0
        self.milestones = [
            n0 * 2**n
            for n in range(1, ADAPTIVE_MILESTONE_LEVELS + 1)
            if n0 * 2**n <= ADAPTIVE_HARD_CAP
        ]
        self.pending_x: list[np.ndarray] = []
        self.pending_r: list[float] = []
        self.refit_count = 0

    @property
    def trained_size(self) -> int:
        return len(self.model.dataset)

    def _laplace_value(self, xi: np.ndarray) -> float:
        return 0.5 * float(xi @ xi) + self.const

    def observe(self, xi, value: float) -> None:
        total = self.trained_size + len(self.pending_x)
        if total >= ADAPTIVE_HARD_CAP:
            return
        xi = np.asarray(xi, dtype=float).copy()
        self.pending_x.append(xi)
        self.pending_r.append(value - self._laplace_value(xi))
        total += 1
        if self.milestones and total >= self.milestones[0]:
            self.milestones.pop(0)
            self._refit()

    def _refit(self) -> None:
        inputs = np.vstack([self.model.dataset.inputs] + [x[None, :] for x in self.pending_x])
        values = np.concatenate([self.model.dataset.values, np.array(self.pending_r)])
        try:
            dataset = gp.GpDataset(inputs=inputs, values=values)
            # warm start from the current optimum; single optimisation run
            self.model = gp.fit(
                dataset, self.model.hyperparams, include_gradients=False, restarts=1
            )
            self.pending_x, self.pending_r = [], []
            self.refit_count += 1
        except (gp.GpError, gp.GpFitError) as exc:
            warnings.warn(f"adaptive GP refit failed, keeping previous model: {exc}")
            self.pending_x, self.pending_r = [], []


def build_laplace(tp: TransformedPotential) -> LaplaceSurrogate:
    """Quadratic surrogate in whitened coordinates; costs one model evaluation."""
    return LaplaceSurrogate(const=tp.value(np.zeros(tp.dim)))


def build_gp_surrogate(
    tp: TransformedPotential,
    n0: int,
    include_gradients: bool = False,
    seed: int = 0,
    *,
    laplace: LaplaceSurrogate | None = None,
    adaptive: bool = False,
) -> GpSurrogate:
    """Train the residual GP on n0 standard-normal design points.

    Costs exactly n0 model evaluations (plus one for the Laplace constant if
    no pre-built Laplace surrogate is supplied).
    """
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    if adaptive and include_gradients:
        raise ValueError("adaptive surrogate uses value observations only")
    if laplace is None:
        laplace = build_laplace(tp)
    rng = np.random.default_rng(seed)
    xis = rng.standard_normal((n0, tp.dim))
    residuals = np.empty(n0)
    grads = np.empty((n0, tp.dim)) if include_gradients else None
    for i, xi in enumerate(xis):
        if include_gradients:
            val, g = tp.value_grad(xi)
            grads[i] = g - xi
        else:
            val = tp.value(xi)
        residuals[i] = val - laplace.value(xi)
    dataset = gp.GpDataset(inputs=xis, values=residuals, gradients=grads)
    spread = float(np.var(residuals))
    init = gp.GpHyperparams(
        mean_const=float(np.mean(residuals)),
        signal_var=max(spread, 1e-8),
        length_scales=np.full(tp.dim, 1.0),
        noise_var=1e-6 * max(spread, 1e-8),
    )
    model = gp.fit(dataset, init, include_gradients=include_gradients)
    if adaptive:
        return AdaptiveGpSurrogate(laplace.const, model, n0)
    if include_gradients:
        return GradientGpSurrogate(laplace.const, model)
    return GpSurrogate(laplace.const, model)


def surrogate_value(s: Surrogate, xi) -> float:
    return s.value(xi)


def surrogate_grad(s: Surrogate, xi) -> np.ndarray:
    return s.grad(xi)


def adaptive_observe(s: AdaptiveGpSurrogate, xi, value: float) -> AdaptiveGpSurrogate:
    """Feed one harvested (point, true value) pair; refits on milestone crossing."""
    s.observe(xi, value)
    return s


def make_surrogate(
    tp: TransformedPotential,
    kind: str,
    *,
    n0: int = 0,
    seed: int = 0,
) -> Surrogate:
    """Config-driven surrogate construction used by the experiment runner."""
    if kind == "constant":
        return ConstantSurrogate()
    if kind == "random_gradient":
        return RandomGradientSurrogate(tp.dim, seed=seed)
    if kind == "laplace":
        return build_laplace(tp)
    if kind == "gp":
        return build_gp_surrogate(tp, n0, include_gradients=False, seed=seed)
    if kind == "grad_gp":
        return build_gp_surrogate(tp, n0, include_gradients=True, seed=seed)
    if kind == "adaptive_gp":
        return build_gp_surrogate(tp, n0, include_gradients=False, seed=seed, adaptive=True)
    raise ValueError(f"unknown surrogate kind: {kind}")
