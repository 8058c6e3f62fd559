"""Damped power-iteration PageRank over a column-stochastic matrix.

The transition matrix follows the column convention: entry (i, j) is the
weight of the link from node j to node i, and every nonzero column sums
to 1. All-zero (dangling) columns are allowed at validation time and are
replaced by uniform columns before iterating, which keeps the score vector
an exact probability distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeEntry, NotStochastic


@dataclass(frozen=True)
class PageRankParams:
    """Damping factor and fixed iteration count.

    ``early_stop_tol``, when set, stops iterating once the L1 change of an
    update falls below it; otherwise exactly ``iterations`` steps run.
    """

    damping: float = 0.85
    iterations: int = 100
    early_stop_tol: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.damping <= 1.0:
            raise ValueError("damping must lie in [0, 1]")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.early_stop_tol is not None and self.early_stop_tol < 0:
            raise ValueError("early_stop_tol must be nonnegative")


@dataclass(frozen=True)
class StochasticMatrix:
    """Validated n x n column-stochastic matrix with dangling-column flags."""

    values: np.ndarray
    dangling: np.ndarray  # bool per column, True when the column is all zero

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class PageRankScores:
    """Importance vector plus convergence bookkeeping.

    ``residual`` is the L1 norm of the last update's change.
    """

    u: np.ndarray
    iterations_run: int
    residual: float


def validate_stochastic(m: np.ndarray, tol: float = 1e-6) -> StochasticMatrix:
    """Wrap a matrix after checking nonnegativity and column sums.

    Raises NegativeEntry for any entry < 0 and NotStochastic for a nonzero
    column whose sum deviates from 1 by more than ``tol``. All-zero columns
    are accepted and flagged as dangling.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    if np.any(m < 0):
        idx = np.argwhere(m < 0)[0]
        raise NegativeEntry(int(idx[0]), int(idx[1]), float(m[idx[0], idx[1]]))
    col_sums = m.sum(axis=0)
    dangling = col_sums == 0.0
    bad = ~dangling & (np.abs(col_sums - 1.0) > tol)
    if np.any(bad):
        col = int(np.argmax(bad))
        raise NotStochastic(col, float(col_sums[col]))
    return StochasticMatrix(values=m, dangling=dangling)


def pagerank(adj: StochasticMatrix, params: PageRankParams) -> PageRankScores:
    """Iterate u <- d*A*u + (1-d)/n from the uniform start.

    Dangling columns are treated as uniform before iterating, so the result
    always sums to 1. Runs exactly ``params.iterations`` steps unless
    ``early_stop_tol`` is set and reached sooner.
    """
    n = adj.n
    a = adj.values
    if np.any(adj.dangling):
        a = a.copy()
        a[:, adj.dangling] = 1.0 / n

    d = params.damping
    u = np.full(n, 1.0 / n)
    teleport = (1.0 - d) / n
    residual = 0.0
    iterations_run = 0
    for _ in range(params.iterations):
        new_u = d * (a @ u) + teleport
        residual = float(np.abs(new_u - u).sum())
        u = new_u
        iterations_run += 1
        if params.early_stop_tol is not None and residual < params.early_stop_tol:
            break
    return PageRankScores(u=u, iterations_run=iterations_run, residual=residual)


def rank_order(scores: PageRankScores) -> list[int]:
    """Node indices sorted by score descending, ties by ascending index."""
    u = scores.u
    return sorted(range(len(u)), key=lambda i: (-u[i], i))
