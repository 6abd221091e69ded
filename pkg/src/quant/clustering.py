"""Deterministic 1-D k-means with k fixed at 3 (lower / middle / upper clusters).

Lloyd iterations run on the sorted multiset with prefix sums: in one dimension
a nearest-centroid assignment is a pair of cut points, so each step is two
binary searches plus O(1) arithmetic per cluster. Small inputs are also
solved exactly over all contiguous partitions, which Lloyd can miss.
"""
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Tuple

import numpy as np

from core.exceptions import ArgumentError, ConvergenceError, DegenerateInputError

logger = logging.getLogger(__name__)

K = 3
ORACLE_MAX_VALUES = 64
EXACT_MAX_VALUES = 64
INIT_QUANTILES = (1 / 6, 3 / 6, 5 / 6)


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    centroids: Tuple[float, float, float]
    labels: np.ndarray
    boundaries: Tuple[float, float]
    inertia: float
    iterations: int = 0

    @property
    def counts(self) -> Tuple[int, int, int]:
        counts = np.bincount(self.labels.ravel(), minlength=K)
        return tuple(int(c) for c in counts)


def _prepare(values) -> Tuple[np.ndarray, np.ndarray]:
    flat = np.asarray(values, dtype=np.float64).ravel()
    if flat.size == 0:
        raise DegenerateInputError("Cannot cluster an empty array")
    if not np.all(np.isfinite(flat)):
        raise ArgumentError("Cannot cluster non-finite values")
    ordered = np.sort(flat, kind='stable')
    distinct = 1 + int(np.count_nonzero(np.diff(ordered)))
    if distinct < K:
        raise DegenerateInputError(f"Need at least {K} distinct values, got {distinct}")
    return flat, ordered


def _midpoints(centroids: np.ndarray) -> np.ndarray:
    return (centroids[:-1] + centroids[1:]) / 2.0


def _labels(flat: np.ndarray, boundaries: np.ndarray) -> np.ndarray:
    # ties (x == boundary) go to the lower cluster
    return (flat > boundaries[0]).astype(np.int8) + (flat > boundaries[1]).astype(np.int8)


class _SortedValues:
    """Sorted values with prefix sums for O(1) per-cluster moments"""
    def __init__(self, ordered: np.ndarray):
        self.x = ordered
        self.n = ordered.size
        self.s1 = np.concatenate(([0.0], np.cumsum(ordered)))
        self.s2 = np.concatenate(([0.0], np.cumsum(ordered * ordered)))

    def edges(self, centroids: np.ndarray) -> np.ndarray:
        cuts = np.searchsorted(self.x, _midpoints(centroids), side='right')
        return np.concatenate(([0], cuts, [self.n]))

    def means(self, edges: np.ndarray) -> np.ndarray:
        sizes = np.diff(edges)
        return (self.s1[edges[1:]] - self.s1[edges[:-1]]) / sizes

    def inertia(self, edges: np.ndarray, centroids: np.ndarray) -> float:
        sizes = np.diff(edges)
        s1 = self.s1[edges[1:]] - self.s1[edges[:-1]]
        s2 = self.s2[edges[1:]] - self.s2[edges[:-1]]
        per_cluster = s2 - 2.0 * centroids * s1 + sizes * centroids * centroids
        return float(np.sum(np.maximum(per_cluster, 0.0)))

    def assign(self, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Nearest-centroid edges, reseeding any centroid left without members"""
        centroids = np.sort(centroids)
        for _ in range(K):
            edges = self.edges(centroids)
            empty = np.flatnonzero(np.diff(edges) == 0)
            if empty.size == 0:
                return centroids, edges
            surviving = np.delete(centroids, empty)
            distance = np.min(np.abs(self.x[:, None] - surviving[None, :]), axis=1)
            farthest = self.x[int(np.argmax(distance))]
            logger.debug("Reseeding empty cluster %d at %r", int(empty[0]), float(farthest))
            centroids = centroids.copy()
            centroids[empty[0]] = farthest
            centroids = np.sort(centroids)
        raise DegenerateInputError("Could not keep three non-empty clusters")

    def sse(self, start, stop):
        s1 = self.s1[stop] - self.s1[start]
        return self.s2[stop] - self.s2[start] - s1 * s1 / (stop - start)

    def best_edges(self) -> np.ndarray:
        """Edges of the minimum-inertia contiguous partition, O(n^2) memory"""
        cuts = np.flatnonzero(np.diff(self.x) > 0) + 1
        lo, hi = cuts[:, None], cuts[None, :]
        with np.errstate(divide='ignore', invalid='ignore'):
            cost = self.sse(0, lo) + self.sse(lo, hi) + self.sse(hi, self.n)
        cost = np.where(lo < hi, cost, np.inf)
        i, j = np.unravel_index(int(np.argmin(cost)), cost.shape)
        return np.array([0, cuts[i], cuts[j], self.n])


def kmeans3(values, max_iter: int = 100, tol: float = 1e-6) -> ClusterAssignment:
    """Lloyd's algorithm from the 1/6, 3/6, 5/6 quantiles.

    Stops when inertia improves by less than ``tol`` relative to the previous
    iteration or after ``max_iter`` update steps. Inputs of at most
    ``EXACT_MAX_VALUES`` values are also partitioned exactly and the lower
    inertia wins. The result depends only on the multiset of values.
    """
    if max_iter < 1:
        raise ArgumentError(f"max_iter must be >= 1, got {max_iter}")
    if tol < 0:
        raise ArgumentError(f"tol must be >= 0, got {tol}")
    flat, ordered = _prepare(values)
    data = _SortedValues(ordered)
    slack = 1e-12 * float(data.s2[-1])

    centroids, edges = data.assign(np.quantile(ordered, INIT_QUANTILES))
    inertia = data.inertia(edges, centroids)
    iterations = 0
    while iterations < max_iter:
        iterations += 1
        centroids, edges = data.assign(data.means(edges))
        updated = data.inertia(edges, centroids)
        if updated > inertia * (1.0 + 1e-9) + slack:
            raise ConvergenceError(f"Inertia rose from {inertia!r} to {updated!r} at iteration {iterations}")
        improvement = inertia - updated
        previous, inertia = inertia, updated
        if improvement <= tol * previous:
            break

    if data.n <= EXACT_MAX_VALUES:
        exact_centroids, exact_edges = data.assign(data.means(data.best_edges()))
        exact = data.inertia(exact_edges, exact_centroids)
        if exact < inertia:
            logger.debug("Exact partition lowers inertia from %g to %g", inertia, exact)
            centroids, edges, inertia = exact_centroids, exact_edges, exact

    if not np.all(np.diff(centroids) > 0):
        raise ConvergenceError(f"Centroids not strictly increasing: {centroids.tolist()}")
    boundaries = _midpoints(centroids)
    logger.debug("kmeans3 converged after %d iterations (n=%d, inertia=%g)", iterations, flat.size, inertia)
    return ClusterAssignment(
        centroids=tuple(float(c) for c in centroids),
        labels=_labels(flat, boundaries).reshape(np.shape(values)),
        boundaries=(float(boundaries[0]), float(boundaries[1])),
        inertia=inertia,
        iterations=iterations,
    )


def kmeans3_oracle(values) -> ClusterAssignment:
    """Globally optimal 3-clustering by enumerating contiguous partitions (small inputs only)"""
    flat = np.asarray(values, dtype=np.float64).ravel()
    if flat.size > ORACLE_MAX_VALUES:
        raise ArgumentError(f"Oracle handles at most {ORACLE_MAX_VALUES} values, got {flat.size}")
    flat, ordered = _prepare(flat)

    # cut only between distinct values so that clusters are value intervals
    cut_points = [i for i in range(1, ordered.size) if ordered[i - 1] < ordered[i]]
    best = None
    for i, j in combinations(cut_points, 2):
        segments = (ordered[:i], ordered[i:j], ordered[j:])
        inertia = float(sum(np.sum((s - s.mean()) ** 2) for s in segments))
        if best is None or inertia < best[0]:
            best = (inertia, i, j)

    inertia, i, j = best
    centroids = np.array([ordered[:i].mean(), ordered[i:j].mean(), ordered[j:].mean()])
    labels = (flat > ordered[i - 1]).astype(np.int8) + (flat > ordered[j - 1]).astype(np.int8)
    boundaries = _midpoints(centroids)
    return ClusterAssignment(
        centroids=tuple(float(c) for c in centroids),
        labels=labels.reshape(np.shape(values)),
        boundaries=(float(boundaries[0]), float(boundaries[1])),
        inertia=inertia,
        iterations=0,
    )
