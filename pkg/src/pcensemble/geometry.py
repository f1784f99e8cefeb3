"""Core geometric kernels: normalization, nearest neighbors, farthest-point sampling.

All distance comparisons use squared Euclidean distances; ties are broken by
ascending point index. Everything here is a pure function of its arguments,
with brute-force O(N^2) reference behaviour (desk scale, N <= 2048).
"""

from __future__ import annotations

import numpy as np

from .errors import BadKError, DegenerateCloudError


def as_cloud(points) -> np.ndarray:
    """Validate and return a point cloud as a float64 array of shape (N, 3)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"point cloud must have shape (N, 3), got {pts.shape}")
    if pts.shape[0] < 1:
        raise ValueError("point cloud must contain at least one point")
    if not np.isfinite(pts).all():
        raise ValueError("point cloud contains non-finite coordinates")
    return pts


def normalize_unit_sphere(points) -> np.ndarray:
    """Center a cloud on its centroid and scale so the farthest point has norm 1.

    Raises DegenerateCloudError when all points coincide (zero radius).
    Point order is preserved; applying the function twice is a no-op.
    """
    pts = as_cloud(points)
    centered = pts - pts.mean(axis=0)
    radius = np.sqrt(np.max(np.einsum("ij,ij->i", centered, centered)))
    if radius < 1e-12:
        raise DegenerateCloudError("all points coincide; cloud has zero radius")
    return centered / radius


def squared_distances(points: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances from every point to a single query point."""
    diff = points - query
    return np.einsum("ij,ij->i", diff, diff)


def pairwise_squared_distances(points: np.ndarray) -> np.ndarray:
    """Full (N, N) squared-distance matrix, exact and symmetric."""
    diff = points[:, None, :] - points[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def knn(points, query_index: int, k: int) -> np.ndarray:
    """Indices of the k nearest neighbors of ``points[query_index]``.

    The query point itself is excluded. Results are sorted by ascending squared
    distance, ties broken by ascending index.
    """
    pts = as_cloud(points)
    n = pts.shape[0]
    if not 0 <= query_index < n:
        raise ValueError(f"query index {query_index} out of range for N={n}")
    if not 1 <= k <= n - 1:
        raise BadKError(f"k={k} out of range [1, {n - 1}]")
    d2 = squared_distances(pts, pts[query_index])
    d2[query_index] = np.inf
    order = np.argsort(d2, kind="stable")
    return order[:k]


def pairwise_knn_table(points, k: int) -> np.ndarray:
    """(N, k) table whose row i equals ``knn(points, i, k)``."""
    pts = as_cloud(points)
    n = pts.shape[0]
    if not 1 <= k <= n - 1:
        raise BadKError(f"k={k} out of range [1, {n - 1}]")
    d2 = pairwise_squared_distances(pts)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def fps(points, k: int, start_index: int) -> np.ndarray:
    """Greedy max-min (farthest point) sampling of k indices.

    The first selection is ``start_index``; each following selection maximizes
    the minimum squared distance to everything already selected, ties broken
    by ascending index.
    """
    pts = as_cloud(points)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise BadKError(f"k={k} out of range [1, {n}]")
    if not 0 <= start_index < n:
        raise ValueError(f"start index {start_index} out of range for N={n}")
    selected = np.empty(k, dtype=np.intp)
    selected[0] = start_index
    min_d2 = squared_distances(pts, pts[start_index])
    min_d2[start_index] = -1.0  # selected points can never win the argmax
    for i in range(1, k):
        nxt = int(np.argmax(min_d2))  # first occurrence, i.e. lowest index
        selected[i] = nxt
        np.minimum(min_d2, squared_distances(pts, pts[nxt]), out=min_d2)
        min_d2[nxt] = -1.0
    return selected


def rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix for a right-handed rotation about a unit axis."""
    ux, uy, uz = axis
    c = np.cos(angle)
    s = np.sin(angle)
    cross = np.array([[0.0, -uz, uy], [uz, 0.0, -ux], [-uy, ux, 0.0]])
    return c * np.eye(3) + s * cross + (1.0 - c) * np.outer(axis, axis)


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    """Uniformly random direction on the unit sphere."""
    while True:
        v = rng.normal(size=3)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return v / norm
