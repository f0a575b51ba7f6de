"""k-medoids (PAM) over a precomputed dissimilarity matrix.

Classic two-phase PAM: a greedy BUILD pass picks initial medoids, then a
steepest-descent SWAP pass runs until no exchange lowers the total cost.
All ties break on the lowest index, so clustering is fully deterministic
for a given matrix.
"""

from __future__ import annotations

import numpy as np


def pam_medoids(dissimilarity: np.ndarray, k: int, max_sweeps: int = 100) -> list[int]:
    """Medoid indices chosen by greedy build plus steepest-descent swaps."""
    D = np.asarray(dissimilarity, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("dissimilarity must be a square matrix")
    n = D.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    medoids = _build(D, k)
    return _swap(D, medoids, max_sweeps)


def pam(dissimilarity: np.ndarray, k: int, max_sweeps: int = 100) -> list[list[int]]:
    """Cluster ``n`` points into ``k`` groups; returns member-index lists.

    ``dissimilarity`` must be a symmetric (n, n) matrix with a zero
    diagonal.  Each point joins its nearest medoid (first medoid wins ties);
    clusters come back ordered by their medoid's position in the medoid
    list, each sorted internally.
    """
    D = np.asarray(dissimilarity, dtype=np.float64)
    medoids = pam_medoids(D, k, max_sweeps)
    assign = np.argmin(D[:, medoids], axis=1)
    clusters: list[list[int]] = [[] for _ in medoids]
    for point, c in enumerate(assign):
        clusters[int(c)].append(point)
    return clusters


def cost(dissimilarity: np.ndarray, medoids: list[int]) -> float:
    D = np.asarray(dissimilarity, dtype=np.float64)
    return float(np.min(D[:, medoids], axis=1).sum())


def _build(D: np.ndarray, k: int) -> list[int]:
    n = D.shape[0]
    totals = D.sum(axis=1)
    first = int(np.argmin(totals))  # argmin: lowest index on ties
    medoids = [first]
    nearest = D[:, first].copy()
    while len(medoids) < k:
        best_gain = -np.inf
        best_candidate = -1
        for candidate in range(n):
            if candidate in medoids:
                continue
            gain = float(np.maximum(nearest - D[:, candidate], 0.0).sum())
            if gain > best_gain:
                best_gain = gain
                best_candidate = candidate
        medoids.append(best_candidate)
        nearest = np.minimum(nearest, D[:, best_candidate])
    return medoids


def _swap(D: np.ndarray, medoids: list[int], max_sweeps: int) -> list[int]:
    n = D.shape[0]
    medoids = list(medoids)
    current = cost(D, medoids)
    for _ in range(max_sweeps):
        best = (0.0, None)  # (cost delta, (medoid position, candidate))
        for pos in range(len(medoids)):
            for candidate in range(n):
                if candidate in medoids:
                    continue
                trial = medoids.copy()
                trial[pos] = candidate
                delta = cost(D, trial) - current
                if delta < best[0] - 1e-15:
                    best = (delta, (pos, candidate))
        if best[1] is None:
            break
        pos, candidate = best[1]
        medoids[pos] = candidate
        current += best[0]
    return medoids
