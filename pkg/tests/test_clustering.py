from itertools import combinations

import numpy as np
import pytest

from relcloze.clustering import (
    ClusteringConfig,
    ClusteringResult,
    kmeans_assign,
    kmeans_fit,
    normalize_embeddings,
)
from relcloze.encoders import MaskEmbedding
from relcloze.errors import ClusteringError


def emb(instance_id: str, vector) -> MaskEmbedding:
    return MaskEmbedding(instance_id, "m", "P1", np.asarray(vector, dtype=np.float64))


def embeddings_from(matrix: np.ndarray) -> list[MaskEmbedding]:
    return [emb(f"i{k:03d}", row) for k, row in enumerate(matrix)]


def spherical_inertia(x: np.ndarray, membership: np.ndarray) -> float:
    """Definition-based objective: squared distance to the unit-normalized
    mean of each cluster."""
    total = 0.0
    for cluster in np.unique(membership):
        members = x[membership == cluster]
        mean = members.mean(axis=0)
        centroid = mean / np.linalg.norm(mean)
        total += float(np.sum((members - centroid) ** 2))
    return total


def exhaustive_two_partition_optimum(x: np.ndarray) -> float:
    n = len(x)
    best = np.inf
    indices = list(range(n))
    for size in range(1, n // 2 + 1):
        for group in combinations(indices, size):
            membership = np.zeros(n, dtype=int)
            membership[list(group)] = 1
            best = min(best, spherical_inertia(x, membership))
    return best


def separated_cloud(
    rng: np.random.Generator, n: int, dim: int, angle_deg: float, sigma: float
) -> tuple[np.ndarray, np.ndarray]:
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    w = rng.standard_normal(dim)
    w -= (w @ u) * u
    w /= np.linalg.norm(w)
    theta = np.deg2rad(angle_deg)
    v = np.cos(theta) * u + np.sin(theta) * w
    sizes = [n // 2, n - n // 2]
    points, labels = [], []
    for label, (center, size) in enumerate(zip((u, v), sizes)):
        for _ in range(size):
            p = center + sigma * rng.standard_normal(dim)
            points.append(p / np.linalg.norm(p))
            labels.append(label)
    return np.asarray(points), np.asarray(labels)


class TestNormalize:
    def test_three_four_scales_to_point_six_point_eight(self):
        (out,) = normalize_embeddings([emb("a", [3.0, 4.0])])
        assert np.allclose(out.vector, [0.6, 0.8], atol=1e-12)

    def test_unit_vector_unchanged(self):
        (out,) = normalize_embeddings([emb("a", [0.0, 1.0])])
        assert np.allclose(out.vector, [0.0, 1.0], atol=1e-6)

    def test_zero_vector_names_instance(self):
        with pytest.raises(ClusteringError) as err:
            normalize_embeddings([emb("bad-one", [0.0, 0.0])])
        assert "bad-one" in str(err.value)

    def test_cosine_euclidean_duality(self):
        rng = np.random.default_rng(8)
        centroids = rng.standard_normal((4, 6))
        centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
        for _ in range(200):
            v = rng.standard_normal(6)
            unit = v / np.linalg.norm(v)
            by_euclid = int(np.argmin(np.sum((unit - centroids) ** 2, axis=1)))
            by_cosine = int(np.argmax(centroids @ unit))
            assert by_euclid == by_cosine


class TestKmeansFit:
    def test_two_orthogonal_pairs_separate(self):
        points = [
            [1.0, 0.01, 0.0],
            [1.0, -0.01, 0.0],
            [0.0, 0.01, 1.0],
            [0.0, -0.01, 1.0],
        ]
        result = kmeans_fit(embeddings_from(np.asarray(points)), ClusteringConfig(k=2, seed=0))
        a = {i for i, c in result.assignments.items() if c == result.assignments["i000"]}
        assert a == {"i000", "i001"}

    def test_k1_centroid_is_normalized_mean(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((10, 5))
        result = kmeans_fit(embeddings_from(x), ClusteringConfig(k=1, seed=0))
        unit = x / np.linalg.norm(x, axis=1, keepdims=True)
        mean = unit.mean(axis=0)
        assert np.allclose(result.centroids[0], mean / np.linalg.norm(mean), atol=1e-9)

    def test_matches_exhaustive_partition_optimum(self):
        rng = np.random.default_rng(17)
        for case in range(20):
            n = int(rng.integers(4, 9))
            dim = int(rng.integers(3, 7))
            x, _ = separated_cloud(rng, n, dim, angle_deg=90.0, sigma=0.04)
            result = kmeans_fit(embeddings_from(x), ClusteringConfig(k=2, seed=case))
            optimum = exhaustive_two_partition_optimum(
                x / np.linalg.norm(x, axis=1, keepdims=True)
            )
            assert result.inertia == pytest.approx(optimum, abs=1e-9)

    def test_deterministic_bitwise(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((20, 8))
        a = kmeans_fit(embeddings_from(x), ClusteringConfig(k=3, seed=42))
        b = kmeans_fit(embeddings_from(x), ClusteringConfig(k=3, seed=42))
        assert a.assignments == b.assignments
        assert np.array_equal(a.centroids, b.centroids)
        assert a.inertia == b.inertia and a.iterations_run == b.iterations_run

    def test_partition_invariant_under_input_order(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((15, 4))
        embs = embeddings_from(x)
        shuffled = list(embs)
        rng.shuffle(shuffled)
        a = kmeans_fit(embs, ClusteringConfig(k=3, seed=9))
        b = kmeans_fit(shuffled, ClusteringConfig(k=3, seed=9))
        assert a.assignments == b.assignments

    def test_inertia_trace_non_increasing(self):
        rng = np.random.default_rng(12)
        for seed in range(10):
            x = rng.standard_normal((30, 6))
            result = kmeans_fit(
                embeddings_from(x), ClusteringConfig(k=4, seed=seed, tolerance=0.0, max_iterations=25)
            )
            trace = result.inertia_trace
            assert all(a >= b - 1e-12 for a, b in zip(trace, trace[1:]))

    def test_fewer_points_than_k_rejected(self):
        with pytest.raises(ClusteringError):
            kmeans_fit(embeddings_from(np.eye(2)), ClusteringConfig(k=3))

    def test_no_empty_clusters(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((9, 3))
        result = kmeans_fit(embeddings_from(x), ClusteringConfig(k=5, seed=1))
        assert set(result.assignments.values()) == set(range(5))

    def test_no_empty_clusters_with_duplicate_heavy_data(self):
        # near-duplicate points and k close to n exercise the reseeding path
        rng = np.random.default_rng(14)
        for trial in range(60):
            n = int(rng.integers(5, 12))
            k = int(rng.integers(2, n + 1))
            base = rng.standard_normal((max(2, n // 3), 4))
            rows = base[rng.integers(len(base), size=n)]
            rows = rows + 1e-9 * rng.standard_normal((n, 4))
            result = kmeans_fit(
                embeddings_from(rows), ClusteringConfig(k=k, seed=trial, max_iterations=20)
            )
            assert set(result.assignments.values()) == set(range(k))

    def test_result_record_roundtrip(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((8, 3))
        result = kmeans_fit(embeddings_from(x), ClusteringConfig(k=2, seed=0))
        restored = ClusteringResult.from_record(result.to_record())
        assert restored.assignments == result.assignments
        assert np.allclose(restored.centroids, result.centroids, atol=0)


class TestKmeansAssign:
    def test_point_at_centroid_gets_that_cluster(self):
        centroids = np.eye(3)
        assert kmeans_assign(np.array([0.0, 1.0, 0.0]), centroids) == 1

    def test_tie_breaks_to_lowest_id(self):
        centroids = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert kmeans_assign(np.array([1.0, 1.0]), centroids) == 0

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ClusteringError):
            kmeans_assign(np.array([1.0, 0.0, 0.0]), np.eye(2))

    def test_training_points_replay_to_fit_assignments(self):
        rng = np.random.default_rng(21)
        x, _ = separated_cloud(rng, 16, 5, angle_deg=80.0, sigma=0.05)
        embs = embeddings_from(x)
        result = kmeans_fit(embs, ClusteringConfig(k=2, seed=3))
        for e in embs:
            assert kmeans_assign(e.vector, result.centroids) == result.assignments[e.instance_id]
