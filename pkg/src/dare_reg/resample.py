"""Re-sampling baselines: voxel grid, farthest point and geometrically stable sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geom import PointCloud
from .spatial import estimate_normals


@dataclass(frozen=True)
class ResampleSpec:
    method: str
    rate: float | None = None
    voxel_size: float | None = None
    candidate_pool: int = 100

    def __post_init__(self):
        if self.method not in ("voxel", "fps", "gss"):
            raise ValueError(f"unknown resampling method {self.method!r}")
        if self.method == "voxel":
            if self.voxel_size is None or self.rate is not None:
                raise ValueError("voxel resampling takes voxel_size only")
        elif self.rate is None or self.voxel_size is not None:
            raise ValueError(f"{self.method} resampling takes rate only")

    @classmethod
    def parse(cls, text):
        """Parse ``voxel:0.1``, ``fps:0.25`` or ``gss:0.25[:pool]``."""
        parts = text.split(":")
        if parts[0] == "voxel" and len(parts) == 2:
            return cls("voxel", voxel_size=float(parts[1]))
        if parts[0] in ("fps", "gss") and len(parts) in (2, 3):
            pool = int(parts[2]) if len(parts) == 3 else 100
            return cls(parts[0], rate=float(parts[1]), candidate_pool=pool)
        raise ValueError(f"bad resample spec {text!r}")

    def apply(self, cloud, seed=0):
        if self.method == "voxel":
            return voxel_grid(cloud, self.voxel_size)
        if self.method == "fps":
            return fps(cloud, self.rate, seed)
        return gss(cloud, self.rate, self.candidate_pool, seed)


def voxel_grid(cloud: PointCloud, voxel_size: float) -> PointCloud:
    """One mean point per occupied voxel, voxels in lexicographic index order.

    The grid is anchored at the cloud's minimum corner. Normals and weights are dropped.
    """
    if not voxel_size > 0:
        raise ValueError("voxel_size must be positive")
    pts = cloud.points
    if len(pts) == 0:
        return PointCloud(np.zeros((0, 3)))
    keys = np.floor((pts - pts.min(axis=0)) / voxel_size).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(counts), 3))
    np.add.at(sums, inverse, pts)
    return PointCloud(sums / counts[:, None])


def fps(cloud: PointCloud, keep_fraction: float, seed: int = 0) -> PointCloud:
    """Farthest point sampling of ceil(keep_fraction * N) points, seeded start.

    Points are returned in selection order; ties go to the lowest index.
    """
    return cloud.subset(fps_indices(cloud.points, keep_fraction, seed))


def fps_indices(points, keep_fraction, seed=0):
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must lie in (0, 1]")
    n = len(points)
    m = math.ceil(keep_fraction * n)
    if n == 0:
        return np.zeros(0, dtype=np.intp)
    rng = np.random.default_rng(seed)
    sel = np.empty(m, dtype=np.intp)
    sel[0] = rng.integers(n)
    mind = np.full(n, np.inf)
    pts = np.ascontiguousarray(points, dtype=np.float64)
    for s in range(1, m):
        sel[s] = kernels.fps_step(pts, mind, sel[s - 1])
    return sel


def constraint_vectors(points, normals):
    """Point-to-plane constraint rows [x cross n, n] on centred, radius-scaled coordinates."""
    lo, hi = points.min(axis=0), points.max(axis=0)
    center = 0.5 * (lo + hi)
    radius = 0.5 * float(np.linalg.norm(hi - lo)) or 1.0
    x = (points - center) / radius
    return np.hstack([np.cross(x, normals), normals])


def gss(cloud: PointCloud, keep_fraction: float, candidate_pool: int = 100, seed: int = 0) -> PointCloud:
    """Geometrically stable sampling.

    Greedily grows a selection whose accumulated 6x6 constraint matrix has the
    largest smallest eigenvalue; each step scores ``candidate_pool`` random
    unselected points.
    """
    idx, _ = gss_indices(cloud, keep_fraction, candidate_pool, seed)
    return cloud.subset(idx)


def gss_indices(cloud, keep_fraction, candidate_pool=100, seed=0):
    """Selected indices and the per-step greedy scores (smallest eigenvalue after each pick)."""
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must lie in (0, 1]")
    if candidate_pool < 1:
        raise ValueError("candidate_pool must be >= 1")
    n = len(cloud)
    if cloud.normals is None:
        if n < 3:
            raise ValueError("gss needs normals or at least 3 points to estimate them")
        cloud = estimate_normals(cloud, min(10, n))
    c = constraint_vectors(cloud.points, cloud.normals)
    m = math.ceil(keep_fraction * n)
    rng = np.random.default_rng(seed)
    free = np.ones(n, dtype=bool)
    acc = np.zeros((6, 6))
    sel = np.empty(m, dtype=np.intp)
    scores = np.empty(m)
    for s in range(m):
        avail = np.flatnonzero(free)
        if candidate_pool >= len(avail):
            cand = avail
        else:
            cand = np.sort(rng.choice(avail, candidate_pool, replace=False))
        trial = acc[None] + c[cand, :, None] * c[cand, None, :]
        # PSD by construction; clamp rounding noise so zero scores tie-break by index
        score = np.maximum(np.linalg.eigvalsh(trial)[:, 0], 0.0)
        best = int(np.argmax(score))
        j = cand[best]
        sel[s] = j
        scores[s] = score[best]
        free[j] = False
        acc = trial[best]
    return sel, scores
