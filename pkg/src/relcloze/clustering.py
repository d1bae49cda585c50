"""Cosine-geometry K-means over mask embeddings.

Embeddings are scaled to unit Euclidean norm before clustering; on the unit
sphere squared Euclidean distance is ``2 - 2 cos``, so nearest-centroid
decisions under squared distance coincide with highest-cosine decisions.
Centroids are kept unit-normalized (the unit vector maximizing the summed
cosine to a fixed member set is the normalized mean, so both Lloyd steps
still monotonically decrease the objective).

Everything is float64 and seeded: identical inputs and configuration give
bit-identical results, and points are processed in instance-id order so the
induced partition does not depend on input arrival order.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Sequence

import numpy as np

from .encoders import MaskEmbedding
from .errors import ClusteringError

SEEDED_PLUSPLUS = "seeded_plusplus"


@dataclass(frozen=True)
class ClusteringConfig:
    k: int
    seed: int = 0
    max_iterations: int = 300
    tolerance: float = 1e-6
    init: str = SEEDED_PLUSPLUS
    n_restarts: int = 1

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ClusteringError(f"k must be a positive integer, got {self.k}")
        if self.max_iterations < 1:
            raise ClusteringError("max_iterations must be positive")
        if self.tolerance < 0:
            raise ClusteringError("tolerance must be non-negative")
        if self.init != SEEDED_PLUSPLUS:
            raise ClusteringError(f"unknown init strategy {self.init!r}")
        if self.n_restarts < 1:
            raise ClusteringError("n_restarts must be positive")


@dataclass
class ClusteringResult:
    config: ClusteringConfig
    assignments: dict[str, int]
    centroids: np.ndarray
    inertia: float
    iterations_run: int
    inertia_trace: list[float]

    def to_record(self) -> dict[str, Any]:
        return {
            "config": asdict(self.config),
            "assignments": dict(sorted(self.assignments.items())),
            "centroids": [[float(x) for x in c] for c in self.centroids],
            "inertia": float(self.inertia),
            "iterations_run": self.iterations_run,
            "inertia_trace": [float(x) for x in self.inertia_trace],
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "ClusteringResult":
        return cls(
            config=ClusteringConfig(**rec["config"]),
            assignments=dict(rec["assignments"]),
            centroids=np.asarray(rec["centroids"], dtype=np.float64),
            inertia=float(rec["inertia"]),
            iterations_run=int(rec["iterations_run"]),
            inertia_trace=[float(x) for x in rec.get("inertia_trace", [])],
        )


def normalize_embeddings(
    embeddings: Sequence[MaskEmbedding], *, atol: float = 1e-12
) -> list[MaskEmbedding]:
    """Scale every vector to unit Euclidean norm."""
    out = []
    for e in embeddings:
        norm = float(np.linalg.norm(e.vector))
        if norm <= atol:
            raise ClusteringError(
                f"instance {e.instance_id} has a zero embedding vector and "
                "cannot be placed on the unit sphere"
            )
        out.append(
            MaskEmbedding(
                instance_id=e.instance_id,
                model_id=e.model_id,
                template_id=e.template_id,
                vector=e.vector / norm,
            )
        )
    return out


def _squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances, clipped at 0 for float safety."""
    d2 = (
        np.sum(x**2, axis=1)[:, None]
        - 2.0 * (x @ centroids.T)
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _plusplus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: D^2-sample a few candidates per step, keep the one
    that minimizes the running potential."""
    n = x.shape[0]
    n_candidates = 2 + int(np.log(k))
    first = int(rng.integers(n))
    centroids = [x[first]]
    d2 = _squared_distances(x, x[first][None, :])[:, 0]
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # All points coincide with chosen centroids; fall back to the
            # first not-yet-chosen rows for distinct indices.
            chosen = {int(np.flatnonzero((x == c).all(axis=1))[0]) for c in centroids}
            rest = [i for i in range(n) if i not in chosen]
            centroids.append(x[rest[0] if rest else 0])
            continue
        candidates = rng.choice(n, size=n_candidates, p=d2 / total)
        best_idx, best_potential = None, np.inf
        for cand in candidates:
            potential = float(np.minimum(d2, _squared_distances(x, x[cand][None, :])[:, 0]).sum())
            if potential < best_potential:
                best_idx, best_potential = int(cand), potential
        centroids.append(x[best_idx])
        d2 = np.minimum(d2, _squared_distances(x, x[best_idx][None, :])[:, 0])
    return np.stack(centroids)


def kmeans_fit(
    embeddings: Sequence[MaskEmbedding], config: ClusteringConfig
) -> ClusteringResult:
    """Lloyd iterations on unit-normalized embeddings.

    Terminates when the largest centroid shift falls below ``tolerance`` or
    after ``max_iterations``.  An emptied cluster is reseeded with the point
    farthest from its current centroid.  With ``n_restarts > 1`` the best
    inertia over independently seeded restarts wins.
    """
    normalized = normalize_embeddings(embeddings)
    ids = sorted(e.instance_id for e in normalized)
    if len(set(ids)) != len(ids):
        dupes = {i for i in ids if ids.count(i) > 1}
        raise ClusteringError(f"duplicate instance ids in clustering input: {sorted(dupes)}")
    by_id = {e.instance_id: e for e in normalized}
    x = np.stack([by_id[i].vector for i in ids])
    n = x.shape[0]
    if n < config.k:
        raise ClusteringError(f"cannot fit {config.k} clusters to {n} points")

    best: tuple[np.ndarray, np.ndarray, float, int, list[float]] | None = None
    for restart in range(config.n_restarts):
        rng = np.random.default_rng((config.seed, restart))
        outcome = _lloyd(x, config, rng)
        if best is None or outcome[2] < best[2]:
            best = outcome
    labels, centroids, inertia, iterations, trace = best
    return ClusteringResult(
        config=config,
        assignments={ids[i]: int(labels[i]) for i in range(n)},
        centroids=centroids,
        inertia=float(inertia),
        iterations_run=iterations,
        inertia_trace=trace,
    )


def _lloyd(
    x: np.ndarray, config: ClusteringConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, float, int, list[float]]:
    k = config.k
    centroids = _plusplus_init(x, k, rng)
    trace: list[float] = []
    labels = np.zeros(len(x), dtype=np.int64)
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        d2 = _squared_distances(x, centroids)
        labels = np.argmin(d2, axis=1)  # ties resolve to the lowest cluster id

        for cluster in range(k):
            if np.any(labels == cluster):
                continue
            # Reseed with the farthest point, but never steal a cluster's
            # only member (that would just move the hole; n >= k guarantees
            # some cluster has two or more points).
            sizes = np.bincount(labels, minlength=k)
            assigned_d2 = d2[np.arange(len(x)), labels].copy()
            assigned_d2[sizes[labels] <= 1] = -np.inf
            farthest = int(np.argmax(assigned_d2))
            labels[farthest] = cluster
            d2[farthest, :] = np.inf
            d2[farthest, cluster] = 0.0

        new_centroids = centroids.copy()
        for cluster in range(k):
            members = x[labels == cluster]
            mean = members.mean(axis=0)
            norm = float(np.linalg.norm(mean))
            if norm > 0.0:
                new_centroids[cluster] = mean / norm
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        trace.append(_inertia(x, labels, centroids))
        if shift < config.tolerance:
            break
    return labels, centroids, trace[-1], iterations, trace


def _inertia(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    return float(np.sum((x - centroids[labels]) ** 2))


def kmeans_assign(vector: np.ndarray, centroids: np.ndarray) -> int:
    """Nearest-centroid cluster id for one (possibly unnormalized) vector.

    Ties break to the lowest cluster id.
    """
    vector = np.asarray(vector, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    if vector.ndim != 1 or centroids.ndim != 2 or vector.shape[0] != centroids.shape[1]:
        raise ClusteringError(
            f"dimension mismatch: vector has shape {vector.shape}, "
            f"centroids have shape {centroids.shape}"
        )
    norm = float(np.linalg.norm(vector))
    if norm <= 0.0:
        raise ClusteringError("cannot assign a zero vector")
    d2 = _squared_distances((vector / norm)[None, :], centroids)[0]
    return int(np.argmin(d2))
