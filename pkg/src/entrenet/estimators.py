"""Scikit-learn compatible wrappers around the reconstruction pipeline.

These let the reconstruction and truncation steps compose with sklearn
pipelines: both transformers map a square nonnegative matrix to a matrix.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .data import TradeDataset, build_trade_problem
from .metrics import truncate_percentile
from .model import FlowMatrix, NodeInfo
from .solver import SolverConfig, solve_ridge


def _check_square(X) -> np.ndarray:
    X = check_array(X, dtype=float)
    if X.shape[0] != X.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {X.shape}")
    if np.any(X < 0):
        raise ValueError("matrix entries must be nonnegative")
    return X


def _as_flow(X: np.ndarray) -> FlowMatrix:
    nodes = [NodeInfo(id=f"n{i}", name=f"n{i}") for i in range(X.shape[0])]
    return FlowMatrix(nodes, X)


class RidgeEntropyReconstructor(TransformerMixin, BaseEstimator):
    """Reconstruct a weighted network from a data matrix's row/column sums.

    ``transform(X)`` solves the ridge entropy maximization program for the
    marginals of ``X`` (optionally pinning X's zero cells) and returns the
    reconstructed weight matrix at the same total volume as ``X``.

    Attributes set by ``fit`` / ``transform``:
        report_ : the full SolutionReport of the last solve.
    """

    def __init__(
        self,
        beta: float = 100.0,
        link_constraints: bool = False,
        tolerance: float = 1e-8,
        max_iterations: int = 10000,
    ):
        self.beta = beta
        self.link_constraints = link_constraints
        self.tolerance = tolerance
        self.max_iterations = max_iterations

    def fit(self, X, y=None):
        X = _check_square(X)
        self.n_features_in_ = X.shape[1]
        self.report_ = self._solve(X)
        return self

    def transform(self, X):
        X = _check_square(X)
        self.report_ = self._solve(X)
        return self.report_.t.weights

    def _solve(self, X: np.ndarray):
        dataset = TradeDataset(matrix=_as_flow(X))
        problem = build_trade_problem(
            dataset, beta=self.beta, with_link_constraints=self.link_constraints
        )
        config = SolverConfig(tolerance=self.tolerance, max_iterations=self.max_iterations)
        return solve_ridge(problem, config)


class PercentileTruncator(TransformerMixin, BaseEstimator):
    """Binarize a weight matrix by a nearest-rank percentile threshold."""

    def __init__(self, percentile: float = 80.0):
        self.percentile = percentile

    def fit(self, X, y=None):
        X = _check_square(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = _check_square(X)
        return truncate_percentile(_as_flow(X), self.percentile).adjacency
