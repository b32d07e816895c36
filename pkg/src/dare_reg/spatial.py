"""Nearest-neighbour queries and local PCA surface statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geom import PointCloud

_TIE_RTOL = 1e-12


class KdTree:
    """Static kd-tree over a point array.

    Results are ordered by ascending Euclidean distance, ties by ascending
    index, and are identical to a linear scan.
    """

    def __init__(self, points):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (N, 3)")
        self.points = pts
        self._tree = cKDTree(pts) if len(pts) else None

    def __len__(self):
        return len(self.points)

    def _exact(self, q, k):
        n = len(self.points)
        if k >= n:
            cand = np.arange(n)
        else:
            d, _ = self._tree.query(q, k=k)
            radius = float(np.atleast_1d(d)[-1])
            radius = radius * (1 + 1e-9) + 1e-12
            cand = np.asarray(self._tree.query_ball_point(q, radius), dtype=np.intp)
        dist = np.linalg.norm(self.points[cand] - q, axis=1)
        order = np.lexsort((cand, dist))[:k]
        return cand[order], dist[order]

    def query(self, q, k):
        if self._tree is None:
            raise ValueError("empty index")
        if k < 1:
            raise ValueError("k must be >= 1")
        return self._exact(np.asarray(q, dtype=np.float64).reshape(3), int(k))

    def query_many(self, queries, k):
        """Batched version of :meth:`query`; returns (indices, distances) of shape (Q, k')."""
        if self._tree is None:
            raise ValueError("empty index")
        if k < 1:
            raise ValueError("k must be >= 1")
        queries = np.ascontiguousarray(queries, dtype=np.float64)
        n = len(self.points)
        k = min(int(k), n)
        kq = min(k + 1, n)
        _, idx = self._tree.query(queries, k=kq)
        idx = idx.reshape(len(queries), kq)
        dist = np.linalg.norm(self.points[idx] - queries[:, None, :], axis=2)
        order = np.lexsort((idx, dist), axis=-1)
        idx = np.take_along_axis(idx, order, axis=1)
        dist = np.take_along_axis(dist, order, axis=1)
        if kq > k:
            gap = dist[:, k] - dist[:, k - 1]
            near_tie = np.nonzero(gap <= _TIE_RTOL * np.maximum(dist[:, k], 1.0))[0]
            for r in near_tie:
                idx[r, :k], dist[r, :k] = self._exact(queries[r], k)
        return idx[:, :k], dist[:, :k]


def knn(tree: KdTree, query, k: int):
    """k nearest neighbours of ``query`` as a list of (index, distance)."""
    idx, dist = tree.query(query, k)
    return [(int(i), float(d)) for i, d in zip(idx, dist)]


@dataclass(frozen=True)
class LocalSurfaceStats:
    mean: np.ndarray
    eigvals: np.ndarray  # descending, clamped at 0
    eigvecs: np.ndarray  # columns b1, b2, b3
    neighbor_count: int

    @property
    def normal(self):
        return self.eigvecs[:, 2]


def _canonical_sign(vecs):
    # flip each eigenvector so its largest-magnitude component is positive
    k = np.argmax(np.abs(vecs), axis=-2)
    s = np.sign(np.take_along_axis(vecs, k[..., None, :], axis=-2))
    s[s == 0] = 1.0
    return vecs * s


def covariance_eig(cov):
    """Eigen-decomposition of (..., 3, 3) symmetric matrices, eigenvalues descending and >= 0."""
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals[..., ::-1], 0.0)
    vecs = _canonical_sign(vecs[..., ::-1])
    return vals, vecs


def neighborhood_stats(cloud: PointCloud, L: int, tree: KdTree | None = None):
    """Local statistics for every point of ``cloud``.

    Returns (neighbor_idx (N, L), means (N, 3), eigvals (N, 3), eigvecs (N, 3, 3)).
    Each point is its own nearest neighbour; covariance uses divisor L-1.
    """
    if L < 3:
        raise ValueError("degenerate neighborhood")
    if len(cloud) < L:
        raise ValueError(f"cloud has {len(cloud)} points, need at least L={L}")
    tree = tree or KdTree(cloud.points)
    idx, _ = tree.query_many(cloud.points, L)
    nb = cloud.points[idx]
    means = nb.mean(axis=1)
    dev = nb - means[:, None, :]
    cov = np.einsum("nli,nlj->nij", dev, dev) / (L - 1)
    vals, vecs = covariance_eig(cov)
    return idx, means, vals, vecs


def local_stats(cloud: PointCloud, index: int, L: int, tree: KdTree | None = None) -> LocalSurfaceStats:
    if L < 3:
        raise ValueError("degenerate neighborhood")
    if len(cloud) < L:
        raise ValueError(f"cloud has {len(cloud)} points, need at least L={L}")
    tree = tree or KdTree(cloud.points)
    idx, _ = tree.query(cloud.points[index], L)
    nb = cloud.points[idx]
    mean = nb.mean(axis=0)
    dev = nb - mean
    cov = dev.T @ dev / (L - 1)
    vals, vecs = covariance_eig(cov)
    return LocalSurfaceStats(mean, vals, vecs, L)


def estimate_normals(cloud: PointCloud, L: int = 10, orient_toward=None) -> PointCloud:
    """Populate normals with the smallest-variance PCA direction of each L-neighbourhood."""
    _, _, _, vecs = neighborhood_stats(cloud, L)
    normals = vecs[:, :, 2].copy()
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    if orient_toward is not None:
        s = np.asarray(orient_toward, dtype=np.float64).reshape(3)
        flip = np.einsum("ij,ij->i", normals, s - cloud.points) < 0
        normals[flip] *= -1.0
    return cloud.with_normals(normals)
