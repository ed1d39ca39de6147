"""Seeded k-fold cross-validation and budgeted hyperparameter search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..seeds import rng_for


@dataclass(frozen=True)
class CVSpec:
    folds: int = 5
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


@dataclass(frozen=True)
class SearchBudget:
    evaluations: int
    seed: int = 0

    def __post_init__(self):
        if self.evaluations < 1:
            raise ValueError("evaluations must be >= 1")


def mse(actual, predicted) -> float:
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    return float(np.mean((actual - predicted) ** 2))


def fold_indices(n: int, spec: CVSpec) -> list[np.ndarray]:
    if spec.folds > n:
        raise ValueError(f"folds {spec.folds} exceeds sample count {n}")
    order = rng_for(spec.shuffle_seed, "cv").permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(order, spec.folds)]


def cross_validate(fit_fn, X, y, spec: CVSpec, loss=mse) -> float:
    """Mean held-out loss over seeded shuffled folds.

    `fit_fn(X_train, y_train)` must return an object with `.predict`.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    losses = []
    for held_out in fold_indices(len(y), spec):
        mask = np.ones(len(y), dtype=bool)
        mask[held_out] = False
        model = fit_fn(X[mask], y[mask])
        losses.append(loss(y[held_out], model.predict(X[held_out])))
    return float(np.mean(losses))


def _grid_size(space: dict) -> int | None:
    size = 1
    for values in space.values():
        if not isinstance(values, list):
            return None
        size *= len(values)
    return size


def enumerate_candidates(space: dict, budget: SearchBudget) -> list[dict]:
    """Candidate parameter draws: the full grid when it fits the budget,
    otherwise exactly `budget.evaluations` seeded random draws."""
    if not space:
        raise ValueError("empty search space")
    grid_size = _grid_size(space)
    if grid_size is not None and grid_size <= budget.evaluations:
        keys = list(space)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(space[k] for k in keys))]
    rng = rng_for(budget.seed, "hyperparams")
    candidates = []
    for _ in range(budget.evaluations):
        cand = {}
        for key, values in space.items():
            if isinstance(values, list):
                cand[key] = values[int(rng.integers(len(values)))]
            else:
                tag, lo, hi = values
                if tag != "int":
                    raise ValueError(f"unsupported range spec {values!r} for {key}")
                cand[key] = int(rng.integers(lo, hi + 1))
        candidates.append(cand)
    return candidates


def search_hyperparams(
    space: dict,
    budget: SearchBudget,
    objective: Callable[[dict], float],
) -> tuple[dict, float]:
    """Argmin of the objective over the candidate set, first-encountered ties."""
    best_params: dict | None = None
    best_loss = np.inf
    for cand in enumerate_candidates(space, budget):
        loss = objective(cand)
        if best_params is None or loss < best_loss:
            best_loss = loss
            best_params = cand
    return best_params, float(best_loss)
