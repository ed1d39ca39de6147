"""In-repo regression engines: bagged CART forest, coordinate-descent lasso
over polynomial features, k-fold cross-validation, and budgeted search."""

from .forest import FittedForest, ForestParams, fit_forest, forest_search_space
from .lasso import FittedL1, L1Params, fit_l1, l1_grid, lasso_objective, soft_threshold
from .polynomial import PolynomialExpansion
from .search import (
    CVSpec,
    SearchBudget,
    cross_validate,
    enumerate_candidates,
    fold_indices,
    mse,
    search_hyperparams,
)

__all__ = [
    "CVSpec",
    "FittedForest",
    "FittedL1",
    "ForestParams",
    "L1Params",
    "PolynomialExpansion",
    "SearchBudget",
    "cross_validate",
    "enumerate_candidates",
    "fit_forest",
    "fit_l1",
    "fold_indices",
    "forest_search_space",
    "l1_grid",
    "lasso_objective",
    "mse",
    "search_hyperparams",
    "soft_threshold",
]
