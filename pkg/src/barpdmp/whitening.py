"""MAP finding, Hessian factorisation, and the whitening change of variables.

The whitened coordinate is xi = L^T (x - x_map) with H = L L^T the Hessian of
the potential at the MAP; in these coordinates the Laplace approximation of
the target is standard normal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

MAP_TOL_DEFAULT = 1e-8


class MapOptimizationError(RuntimeError):
    def __init__(self, message: str, best_point: np.ndarray):
        super().__init__(message)
        self.best_point = best_point


class NonSpdHessianError(RuntimeError):
    """The Hessian at the MAP failed Cholesky; no jitter is applied on purpose."""


@dataclass
class AffineMap:
    map_point: np.ndarray
    chol_factor: np.ndarray  # lower triangular, H = L L^T
    inverse_transpose: np.ndarray  # L^{-T}, cached

    @classmethod
    def from_hessian(cls, map_point: np.ndarray, hessian: np.ndarray) -> "AffineMap":
        try:
            chol = np.linalg.cholesky(hessian)
        except np.linalg.LinAlgError as exc:
            raise NonSpdHessianError("Hessian at the MAP is not SPD") from exc
        inv_t = solve_triangular(chol, np.eye(chol.shape[0]), lower=True, trans="T")
        return cls(np.asarray(map_point, dtype=float), chol, inv_t)

    @property
    def dim(self) -> int:
        return self.map_point.size

    def to_whitened(self, x: np.ndarray) -> np.ndarray:
        return self.chol_factor.T @ (np.asarray(x, dtype=float) - self.map_point)

    def from_whitened(self, xi: np.ndarray) -> np.ndarray:
        return self.map_point + self.inverse_transpose @ np.asarray(xi, dtype=float)


def find_map(potential, x0: np.ndarray, tol: float = MAP_TOL_DEFAULT) -> np.ndarray:
    """Quasi-Newton minimisation of the potential followed by Newton polish.

    Returns a point with Euclidean gradient norm below `tol`; raises
    MapOptimizationError carrying the best iterate otherwise.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x0 = np.asarray(x0, dtype=float).ravel()
    res = minimize(
        lambda x: potential.value_grad(x),
        x0,
        jac=True,
        method="BFGS",
        options={"gtol": tol / 10.0, "maxiter": 500},
    )
    x = res.x
    val, grad = potential.value_grad(x)
    for _ in range(50):
        if np.linalg.norm(grad) < tol:
            return x
        hess = potential.hessian(x)
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -grad
        # backtracking on the potential value
        scale = 1.0
        for _ in range(40):
            cand = x + scale * step
            cand_val, cand_grad = potential.value_grad(cand)
            if cand_val <= val + 1e-12:
                x, val, grad = cand, cand_val, cand_grad
                break
            scale *= 0.5
        else:
            break
    if np.linalg.norm(grad) < tol:
        return x
    raise MapOptimizationError(
        f"MAP search stalled at gradient norm {np.linalg.norm(grad):.3e}", x
    )


def build_map(potential, x0: np.ndarray, tol: float = MAP_TOL_DEFAULT) -> AffineMap:
    x_map = find_map(potential, x0, tol)
    hess = potential.hessian(x_map)
    return AffineMap.from_hessian(x_map, hess)


class TransformedPotential:
    """Potential in whitened coordinates; shares the base evaluation counter."""

    def __init__(self, base, amap: AffineMap):
        self.base = base
        self.map = amap
        self.dim = amap.dim

    @property
    def eval_count(self) -> int:
        return self.base.eval_count

    def value(self, xi) -> float:
        return self.base.value(self.map.from_whitened(xi))

    def grad(self, xi) -> np.ndarray:
        g = self.base.grad(self.map.from_whitened(xi))
        return self.map.inverse_transpose.T @ g

    def value_grad(self, xi):
        v, g = self.base.value_grad(self.map.from_whitened(xi))
        return v, self.map.inverse_transpose.T @ g

    def hessian(self, xi) -> np.ndarray:
        h = self.base.hessian(self.map.from_whitened(xi))
        m = self.map.inverse_transpose
        return m.T @ h @ m
