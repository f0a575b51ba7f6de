from itertools import combinations

import numpy as np
import pytest

from conclusive_forest.clustering import cost, pam


def random_dissimilarity(rng, n):
    raw = rng.uniform(0.0, 1.0, size=(n, n))
    matrix = (raw + raw.T) / 2.0
    np.fill_diagonal(matrix, 0.0)
    return matrix


def exhaustive_best_cost(matrix, k):
    n = matrix.shape[0]
    return min(cost(matrix, list(m)) for m in combinations(range(n), k))


def test_pam_matches_exhaustive_on_small_matrices():
    rng = np.random.default_rng(23)
    for trial in range(30):
        n = int(rng.integers(3, 11))
        k = int(rng.integers(1, min(4, n) + 1))
        matrix = random_dissimilarity(rng, n)
        clusters = pam(matrix, k)
        members = sorted(p for c in clusters for p in c)
        assert members == list(range(n))
        # recover the medoid set cost via the returned partition
        achieved = min(
            cost(matrix, list(m)) for m in combinations(range(n), k)
        )
        # PAM's achieved cost: recompute from its clusters' best medoids
        pam_cost = 0.0
        for c in clusters:
            if not c:
                continue
            sub = matrix[np.ix_(c, c)]
            pam_cost += float(sub.sum(axis=0).min())
        assert pam_cost == pytest.approx(achieved, abs=1e-9)


def test_two_separated_blobs_recovered():
    n_a, n_b = 6, 4
    n = n_a + n_b
    matrix = np.ones((n, n))
    matrix[:n_a, :n_a] = 0.05
    matrix[n_a:, n_a:] = 0.05
    np.fill_diagonal(matrix, 0.0)
    clusters = sorted(pam(matrix, 2), key=len, reverse=True)
    assert sorted(clusters[0]) == list(range(n_a))
    assert sorted(clusters[1]) == list(range(n_a, n))


def test_deterministic():
    rng = np.random.default_rng(3)
    matrix = random_dissimilarity(rng, 12)
    assert pam(matrix, 3) == pam(matrix.copy(), 3)


def test_k_equals_n():
    matrix = random_dissimilarity(np.random.default_rng(1), 5)
    clusters = pam(matrix, 5)
    assert sorted(len(c) for c in clusters) == [1] * 5


def test_k_one():
    matrix = random_dissimilarity(np.random.default_rng(2), 6)
    clusters = pam(matrix, 1)
    assert sorted(clusters[0]) == list(range(6))


def test_bad_inputs():
    matrix = random_dissimilarity(np.random.default_rng(4), 4)
    with pytest.raises(ValueError):
        pam(matrix, 0)
    with pytest.raises(ValueError):
        pam(matrix, 5)
    with pytest.raises(ValueError):
        pam(np.zeros((2, 3)), 1)
