"""Hard and fuzzy clustering of presence vectors, plus cluster-count selection.

Distance is plain Euclidean with every hour slot weighted equally. All
randomness flows through PCG64 generators seeded from explicit integer
entropy, so results are reproducible for a given seed regardless of how
replicates are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DegenerateClusteringError, InfeasibleClusteringError

Seed = int | Sequence[int]

_MONOTONE_SLACK = 1e-9


def _rng(seed: Seed, *extra: int) -> np.random.Generator:
    entropy = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy + list(extra))))


def _uniform_index(rng: np.random.Generator, n: int) -> int:
    return min(int(rng.random() * n), n - 1)


def _sqdist(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, points x centroids."""
    p2 = (points * points).sum(axis=1)[:, None]
    c2 = (centroids * centroids).sum(axis=1)[None, :]
    d2 = p2 + c2 - 2.0 * points @ centroids.T
    np.maximum(d2, 0.0, out=d2)
    return d2


@dataclass(slots=True)
class HardClustering:
    k: int
    centroids: np.ndarray   # float64[k, d]
    assignment: np.ndarray  # int64[U]
    objective: float        # sum of squared distances to assigned centroid
    iterations: int
    seed: Seed


@dataclass(slots=True)
class FuzzyClustering:
    k: int
    centroids: np.ndarray
    membership: np.ndarray  # float64[U, k], rows sum to 1
    m: float
    objective: float
    iterations: int
    seed: Seed


@dataclass(slots=True)
class DbBootstrapResult:
    k_values: list[int]
    scores: dict[int, list[float]]  # n_replicates scores per k
    median: dict[int, float]
    q1: dict[int, float]
    q3: dict[int, float]


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy D^2-weighted seeding: per step, sample a few candidates from the
    D^2 distribution and keep the one minimizing the resulting potential.
    Thresholds come from the uniform stream only."""
    n = points.shape[0]
    n_candidates = 2 + int(math.log(k)) if k > 1 else 1
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[_uniform_index(rng, n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        cumulative = np.cumsum(d2)
        best_idx = -1
        best_d2 = None
        best_potential = np.inf
        for _ in range(n_candidates):
            if total <= 0.0:
                idx = _uniform_index(rng, n)
            else:
                target = rng.random() * total
                idx = min(int(np.searchsorted(cumulative, target, side="right")), n - 1)
            cand_d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
            potential = cand_d2.sum()
            if potential < best_potential:
                best_idx, best_d2, best_potential = idx, cand_d2, potential
        centroids[j] = points[best_idx]
        d2 = best_d2
    return centroids


def _repair_empty(
    d2: np.ndarray, assignment: np.ndarray, centroids: np.ndarray, points: np.ndarray
) -> None:
    """Reseed each empty cluster to the point farthest from its assigned
    centroid, never stealing a cluster's last member."""
    k = centroids.shape[0]
    counts = np.bincount(assignment, minlength=k)
    for c in np.flatnonzero(counts == 0):
        cost = d2[np.arange(len(assignment)), assignment].copy()
        cost[counts[assignment] <= 1] = -1.0
        idx = int(np.argmax(cost))
        counts[assignment[idx]] -= 1
        assignment[idx] = c
        counts[c] = 1
        centroids[c] = points[idx]
        d2[:, c] = ((points - centroids[c]) ** 2).sum(axis=1)


def _lloyd(
    points: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float
) -> tuple[np.ndarray, np.ndarray, int]:
    n = points.shape[0]
    k = centroids.shape[0]
    rows = np.arange(n)
    assignment = np.full(n, -1, dtype=np.int64)
    prev_objective = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = _sqdist(points, centroids)
        new_assignment = d2.argmin(axis=1)
        _repair_empty(d2, new_assignment, centroids, points)
        objective = float(d2[rows, new_assignment].sum())
        assert objective <= prev_objective + _MONOTONE_SLACK * max(1.0, objective)
        prev_objective = objective
        stable = bool(np.array_equal(new_assignment, assignment))
        assignment = new_assignment
        sums = np.zeros_like(centroids)
        np.add.at(sums, assignment, points)
        counts = np.bincount(assignment, minlength=k).astype(np.float64)
        new_centroids = sums / counts[:, None]
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if stable or shift < tol:
            break
    return centroids, assignment, iterations


#: below this row count the default is 10 seeded restarts, above it a single
#: greedy-seeded run (restarts buy little on large structured inputs)
_AUTO_N_INIT_CUTOFF = 10_000


def kmeans(
    points: np.ndarray,
    k: int,
    seed: Seed = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
    n_init: int | str = "auto",
) -> HardClustering:
    """Lloyd iteration from greedy k-means++ seeding, best of n_init runs.

    Empty clusters are repaired by reseeding to the farthest point from its
    assigned centroid; the objective is non-increasing across iterations.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] < 1:
        raise ValueError("points must be a 2-d array")
    n = points.shape[0]
    if k < 1 or n < k:
        raise InfeasibleClusteringError(f"cannot fit k={k} clusters to {n} points")
    if n_init == "auto":
        n_init = 10 if n <= _AUTO_N_INIT_CUTOFF else 1
    best: HardClustering | None = None
    for run in range(int(n_init)):
        rng = _rng(seed, run)
        centroids, assignment, iterations = _lloyd(
            points, _kmeanspp(points, k, rng), max_iter, tol
        )
        objective = float(
            ((points - centroids[assignment]) ** 2).sum()
        )
        if best is None or objective < best.objective:
            best = HardClustering(k, centroids, assignment, objective, iterations, seed)
    return best


def fcm(
    points: np.ndarray,
    k: int,
    m: float = 2.0,
    seed: Seed = 0,
    max_iter: int = 300,
    tol: float = 1e-5,
) -> FuzzyClustering:
    """Fuzzy c-means with fuzzifier m > 1.

    A point coincident with a centroid takes crisp membership there;
    iteration stops when no membership moves more than tol.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1 or n < k:
        raise InfeasibleClusteringError(f"cannot fit k={k} clusters to {n} points")
    if m <= 1.0:
        raise ValueError(f"fuzzifier must be > 1, got {m}")
    rng = _rng(seed, 0)
    centroids = _kmeanspp(points, k, rng)
    membership = _fcm_membership(points, centroids, m)
    prev_objective = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        weights = membership ** m
        col = weights.sum(axis=0)
        new_centroids = np.where(
            col[:, None] > 0, weights.T @ points / np.where(col > 0, col, 1.0)[:, None], centroids
        )
        centroids = new_centroids
        new_membership = _fcm_membership(points, centroids, m)
        objective = float(((new_membership ** m) * _sqdist(points, centroids)).sum())
        assert objective <= prev_objective + _MONOTONE_SLACK * max(1.0, objective)
        prev_objective = objective
        delta = float(np.abs(new_membership - membership).max())
        membership = new_membership
        if delta < tol:
            break
    return FuzzyClustering(k, centroids, membership, m, prev_objective, iterations, seed)


def _fcm_membership(points: np.ndarray, centroids: np.ndarray, m: float) -> np.ndarray:
    d2 = _sqdist(points, centroids)
    zero_rows = (d2 == 0.0).any(axis=1)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        w = d2 ** (-1.0 / (m - 1.0))
        membership = w / w.sum(axis=1, keepdims=True)
    if zero_rows.any():
        # coincident with a centroid: crisp membership there
        for row in np.flatnonzero(zero_rows):
            membership[row] = 0.0
            membership[row, int(np.argmin(d2[row]))] = 1.0
    return membership


def davies_bouldin(points: np.ndarray, clustering: HardClustering) -> float:
    """DB index with mean within-cluster scatter and Euclidean centroid gaps."""
    points = np.asarray(points, dtype=np.float64)
    k = clustering.k
    if k < 2:
        raise ValueError("DB index needs k >= 2")
    counts = np.bincount(clustering.assignment, minlength=k)
    if (counts == 0).any():
        raise DegenerateClusteringError("empty cluster in DB computation")
    scatter = np.empty(k)
    for i in range(k):
        members = points[clustering.assignment == i]
        scatter[i] = float(
            np.sqrt(((members - clustering.centroids[i]) ** 2).sum(axis=1)).mean()
        )
    gaps = np.sqrt(_sqdist(clustering.centroids, clustering.centroids))
    off_diag = ~np.eye(k, dtype=bool)
    if (gaps[off_diag] == 0.0).any():
        raise DegenerateClusteringError("coincident centroids")
    with np.errstate(divide="ignore"):
        ratio = (scatter[:, None] + scatter[None, :]) / gaps
    ratio[~off_diag] = -np.inf
    return float(ratio.max(axis=1).mean())


def _default_resampler(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.minimum((rng.random(n) * n).astype(np.int64), n - 1)


def bootstrap_db(
    points: np.ndarray,
    k_range: Iterable[int] = range(2, 9),
    n_replicates: int = 50,
    seed: Seed = 0,
    resampler: Callable[[np.random.Generator, int], np.ndarray] | None = None,
) -> DbBootstrapResult:
    """Davies-Bouldin distributions over with-replacement resamples.

    One resample per replicate feeds every k; per-(replicate, k) k-means
    seeds derive from the root seed, so the score lists are reproducible.
    """
    points = np.asarray(points, dtype=np.float64)
    k_values = sorted(set(int(k) for k in k_range))
    if not k_values:
        raise ValueError("empty k_range")
    if points.shape[0] < max(k_values):
        raise InfeasibleClusteringError(
            f"{points.shape[0]} points cannot support k={max(k_values)}"
        )
    draw = resampler if resampler is not None else _default_resampler
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    scores: dict[int, list[float]] = {k: [] for k in k_values}
    for b in range(n_replicates):
        sample = points[draw(_rng(seed, 101, b), points.shape[0])]
        for k in k_values:
            clustering = kmeans(sample, k, seed=tuple(base + [202, b, k]))
            scores[k].append(davies_bouldin(sample, clustering))
    median = {k: float(np.percentile(scores[k], 50)) for k in k_values}
    q1 = {k: float(np.percentile(scores[k], 25)) for k in k_values}
    q3 = {k: float(np.percentile(scores[k], 75)) for k in k_values}
    return DbBootstrapResult(k_values, scores, median, q1, q3)


def replicate_kmeans_seed(seed: Seed, replicate: int, k: int) -> tuple:
    """Seed used for the (replicate, k) k-means run inside bootstrap_db."""
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    return tuple(base + [202, replicate, k])


def select_k(result: DbBootstrapResult) -> int:
    """k with the lowest median DB score; ties go to the smaller k."""
    return min(result.k_values, key=lambda k: (result.median[k], k))
