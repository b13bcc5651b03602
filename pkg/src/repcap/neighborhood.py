"""Neighbor-rank structure and the two low-dimensional fidelity metrics.

Ranks are 0-based positions in a point's neighbor ordering (ascending
distance, ties toward the lower point index, self excluded). Formulas that
use 1-based ranks add one explicitly.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend

AGREEMENT = "agreement"
TRUSTWORTHINESS = "trustworthiness"


class NeighborhoodError(ValueError):
    pass


@dataclass(frozen=True)
class NeighborIndex:
    order: np.ndarray  # n x (n - 1) neighbor indices, nearest first
    ranks: np.ndarray  # n x n, ranks[i, order[i, r]] = r, diagonal -1

    @property
    def n(self) -> int:
        return self.order.shape[0]

    def knn(self, i: int, K: int) -> np.ndarray:
        return self.order[i, :K]


def build_index(points: np.ndarray) -> NeighborIndex:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise NeighborhoodError("need an n x d matrix with n >= 2")
    if not np.all(np.isfinite(points)):
        raise NeighborhoodError("points contain non-finite coordinates")
    n = points.shape[0]
    D = _backend.pairwise_sq_distances(points)
    np.fill_diagonal(D, -1.0)
    order = np.argsort(D, axis=1, kind="stable")[:, 1:]
    ranks = np.full((n, n), -1, dtype=np.int64)
    rows = np.repeat(np.arange(n), n - 1)
    ranks[rows, order.ravel()] = np.tile(np.arange(n - 1), n)
    return NeighborIndex(order, ranks)


def _check_pair(index_x: NeighborIndex, index_y: NeighborIndex) -> int:
    if index_x.n != index_y.n:
        raise NeighborhoodError("indices cover different numbers of points")
    return index_x.n


def agreement_at_k(index_x: NeighborIndex, index_y: NeighborIndex, K: int) -> float:
    """Mean percentage of each point's K nearest neighbors shared by both spaces."""
    n = _check_pair(index_x, index_y)
    if not 1 <= K <= n - 1:
        raise NeighborhoodError(f"K={K} outside [1, {n - 1}]")
    shared = (index_x.ranks < K) & (index_y.ranks < K)
    np.fill_diagonal(shared, False)
    return 100.0 * shared.sum() / (n * K)


def max_trust_k(n: int) -> int:
    """Largest K with K < n/2."""
    return math.ceil(n / 2) - 1


def trustworthiness_at_k(
    index_x: NeighborIndex, index_y: NeighborIndex, K: int, formula: str = "standard"
) -> float:
    """Trustworthiness of the embedding at neighborhood size K.

    ``standard`` penalises embedded neighbors that are not original neighbors
    by their excess original rank, normalised to [0, 1]. ``literal`` sums the
    excess original rank of every embedded neighbor and normalises by
    ``n(n-1)``; it is kept for audits and can leave [0, 1].
    """
    n = _check_pair(index_x, index_y)
    offdiag = ~np.eye(n, dtype=bool)
    in_y = (index_y.ranks < K) & offdiag
    if formula == "standard":
        if not 1 <= K < n / 2:
            raise NeighborhoodError(f"K={K} outside [1, n/2) for n={n}")
        mask = in_y & (index_x.ranks >= K)
        penalty = float((index_x.ranks[mask] + 1 - K).sum())
        return 1.0 - 2.0 / (n * K * (2 * n - 3 * K - 1)) * penalty
    if formula == "literal":
        if not 1 <= K <= n - 1:
            raise NeighborhoodError(f"K={K} outside [1, {n - 1}]")
        penalty = float((index_x.ranks[in_y] + 1 - K).sum())
        return 1.0 - 2.0 / (n * (n - 1)) * penalty
    raise NeighborhoodError(f"unknown trustworthiness formula {formula!r}")


@dataclass
class SweepResult:
    metric: str
    ks: np.ndarray
    values: np.ndarray
    scalar: float
    reduction: str
    formula: str | None = None
    extra: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("K,value\n")
        for k, v in zip(self.ks, self.values):
            buf.write(f"{int(k)},{float(v)!r}\n")
        return buf.getvalue()


def reduce_series(metric: str, values: np.ndarray) -> tuple[float, str]:
    """Collapse a per-K series to one number.

    Agreement is min-max normalised before averaging; a flat series has no
    range, so it maps to its constant value divided by 100. Trustworthiness is
    averaged as is.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise NeighborhoodError("empty series")
    if metric == AGREEMENT:
        lo, hi = values.min(), values.max()
        if hi - lo < 1e-12:
            return float(values[0] / 100.0), "constant/100"
        return float(np.mean((values - lo) / (hi - lo))), "minmax-mean"
    if metric == TRUSTWORTHINESS:
        return float(np.mean(values)), "mean"
    raise NeighborhoodError(f"unknown metric {metric!r}")


def sweep(
    metric: str,
    index_x: NeighborIndex,
    index_y: NeighborIndex,
    k_max: int = 100,
    formula: str = "standard",
) -> SweepResult:
    """Evaluate ``metric`` for K = 1..k_max (capped by n) and reduce it."""
    n = _check_pair(index_x, index_y)
    if k_max < 1:
        raise NeighborhoodError("k_max must be >= 1")
    top = min(k_max, n - 1)
    if metric == TRUSTWORTHINESS and formula == "standard":
        top = min(top, max_trust_k(n))
    if top < 1:
        raise NeighborhoodError(f"no valid K for n={n}")
    overlap, penalty, rank_sum = _backend.neighbor_sweep(index_x.ranks, index_y.ranks, top)
    ks = np.arange(1, top + 1)
    if metric == AGREEMENT:
        values = 100.0 * overlap / (n * ks)
        formula_tag = None
    elif metric == TRUSTWORTHINESS:
        if formula == "standard":
            values = 1.0 - 2.0 / (n * ks * (2 * n - 3 * ks - 1)) * penalty
        elif formula == "literal":
            values = 1.0 - 2.0 / (n * (n - 1)) * (rank_sum - n * ks * ks)
        else:
            raise NeighborhoodError(f"unknown trustworthiness formula {formula!r}")
        formula_tag = formula
    else:
        raise NeighborhoodError(f"unknown metric {metric!r}")
    scalar, reduction = reduce_series(metric, values)
    return SweepResult(metric, ks, values, scalar, reduction, formula_tag)
