"""L1-regularized linear regression by cyclic coordinate descent.

Objective: (1/2n) * ||y - Xb - intercept||^2 + alpha * ||b||_1 with an
unpenalized intercept; coordinate updates use the soft-threshold operator.
Inputs are expanded to polynomial features and (by default) min-max scaled
to [0, 1] before fitting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .polynomial import PolynomialExpansion


@dataclass(frozen=True)
class L1Params:
    alpha: float
    degree: int = 1
    max_iter: int = 1000
    tol: float = 1e-8
    scale: bool = True

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 1 <= self.degree <= 4:
            raise ValueError(f"degree must be in [1, 4], got {self.degree}")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


def soft_threshold(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def lasso_objective(X: np.ndarray, y: np.ndarray, coefs: np.ndarray, intercept: float, alpha: float) -> float:
    r = y - X @ coefs - intercept
    n = len(y)
    return float(r @ r / (2.0 * n) + alpha * np.abs(coefs).sum())


@dataclass
class FittedL1:
    params: L1Params
    expansion: PolynomialExpansion
    scale_min: np.ndarray
    scale_range: np.ndarray
    coefs: np.ndarray
    intercept: float
    converged: bool
    n_sweeps: int
    objective_history: list[float] = field(default_factory=list, repr=False)

    def _design(self, X) -> np.ndarray:
        Z = self.expansion.transform(np.asarray(X, dtype=float))
        return (Z - self.scale_min) / self.scale_range

    def predict(self, X) -> np.ndarray:
        return self._design(X) @ self.coefs + self.intercept

    def coefficient_map(self) -> dict[str, float]:
        return dict(zip(self.expansion.term_names(), self.coefs.tolist()))

    def to_dict(self) -> dict:
        return {
            "kind": "l1",
            "params": {
                "alpha": self.params.alpha,
                "degree": self.params.degree,
                "max_iter": self.params.max_iter,
                "tol": self.params.tol,
                "scale": self.params.scale,
            },
            "expansion": self.expansion.to_dict(),
            "scale_min": self.scale_min.tolist(),
            "scale_range": self.scale_range.tolist(),
            "coefs": self.coefs.tolist(),
            "intercept": self.intercept,
            "converged": self.converged,
            "n_sweeps": self.n_sweeps,
        }

    @staticmethod
    def from_dict(doc: dict) -> "FittedL1":
        return FittedL1(
            params=L1Params(**doc["params"]),
            expansion=PolynomialExpansion.from_dict(doc["expansion"]),
            scale_min=np.asarray(doc["scale_min"], dtype=float),
            scale_range=np.asarray(doc["scale_range"], dtype=float),
            coefs=np.asarray(doc["coefs"], dtype=float),
            intercept=doc["intercept"],
            converged=doc["converged"],
            n_sweeps=doc["n_sweeps"],
        )


def fit_l1(X, y, params: L1Params, feature_names: list[str] | None = None) -> FittedL1:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("X must be 2-D with one row per y entry and at least one row")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("inputs must be finite")

    expansion = PolynomialExpansion(degree=params.degree).fit(X, feature_names)
    Z = expansion.transform(X)
    if params.scale:
        mn = Z.min(axis=0)
        rng = Z.max(axis=0) - mn
        rng[rng == 0.0] = 1.0
    else:
        mn = np.zeros(Z.shape[1])
        rng = np.ones(Z.shape[1])
    Z = (Z - mn) / rng

    n, d = Z.shape
    col_norm = (Z * Z).sum(axis=0) / n
    coefs = np.zeros(d)
    intercept = float(y.mean())
    residual = y - intercept
    history = [lasso_objective(Z, y, coefs, intercept, params.alpha)]
    converged = False
    sweeps = 0
    for sweeps in range(1, params.max_iter + 1):
        max_delta = 0.0
        for j in range(d):
            if col_norm[j] == 0.0:
                continue
            rho = Z[:, j] @ residual / n + col_norm[j] * coefs[j]
            new = soft_threshold(rho, params.alpha) / col_norm[j]
            delta = new - coefs[j]
            if delta != 0.0:
                residual -= Z[:, j] * delta
                coefs[j] = new
                max_delta = max(max_delta, abs(delta))
        shift = float(residual.mean())
        if shift != 0.0:
            intercept += shift
            residual -= shift
            max_delta = max(max_delta, abs(shift))
        history.append(lasso_objective(Z, y, coefs, intercept, params.alpha))
        if max_delta < params.tol:
            converged = True
            break
    return FittedL1(
        params=params,
        expansion=expansion,
        scale_min=mn,
        scale_range=rng,
        coefs=coefs,
        intercept=intercept,
        converged=converged,
        n_sweeps=sweeps,
        objective_history=history,
    )


def l1_grid(degrees=(1, 2, 3, 4), alpha_lo: float = 1e-4, alpha_hi: float = 10.0, alpha_steps: int = 500) -> dict:
    """Degree x alpha grid: 500 log-spaced alphas in [1e-4, 10] by default."""
    alphas = np.logspace(np.log10(alpha_lo), np.log10(alpha_hi), alpha_steps)
    return {"degree": list(degrees), "alpha": [float(a) for a in alphas]}
