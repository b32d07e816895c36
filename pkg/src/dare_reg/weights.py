"""Observation weights compensating for non-uniform sampling density.

A weight is the ratio between the density of the latent (uniform-on-surface)
scene distribution and the density the sensor actually sampled from, so
sparsely sampled regions get large weights. All weights are defined up to a
global scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geom import PointCloud
from .spatial import KdTree, estimate_normals, neighborhood_stats


class WeightMethod(str, Enum):
    UNIFORM = "uniform"
    SENSOR = "sensor"
    EMPIRICAL = "empirical"
    EMPIRICAL_FULL = "empirical_full"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).replace("-", "_").lower())


@dataclass(frozen=True)
class ObservationWeights:
    values: np.ndarray
    method: WeightMethod

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("observation weights must be positive and finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "method", WeightMethod.parse(self.method))

    def __len__(self):
        return len(self.values)

    def scaled(self, c):
        return ObservationWeights(self.values * c, self.method)

    def normalized(self):
        """Rescale to mean 1."""
        return ObservationWeights(self.values / self.values.mean(), self.method)


def uniform_weights(n: int) -> ObservationWeights:
    if n < 1:
        raise ValueError("n must be >= 1")
    return ObservationWeights(np.ones(n), WeightMethod.UNIFORM)


def sensor_weights(cloud: PointCloud, gamma: float = 0.9, L: int = 10) -> ObservationWeights:
    """Inverse of the Lidar absorbed-intensity model, sensor at the origin.

    f(x) = |x|^2 / (gamma * |n.x_hat| + 1 - gamma). The absolute value makes the
    result independent of the normal orientation. Missing normals are estimated
    from ``L`` neighbours.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    r = np.linalg.norm(cloud.points, axis=1)
    if np.any(r < 1e-9):
        raise ValueError("point at sensor origin")
    if gamma > 0 and cloud.normals is None:
        cloud = estimate_normals(cloud, L, orient_toward=np.zeros(3))
    if gamma > 0:
        cos_inc = np.abs(np.einsum("ij,ij->i", cloud.normals, cloud.points)) / r
        # gamma == 1 at exactly grazing incidence would divide by zero
        denom = np.maximum(gamma * cos_inc + (1.0 - gamma), 1e-12)
    else:
        denom = 1.0
    return ObservationWeights(r * r / denom, WeightMethod.SENSOR)


def _fill_degenerate(values):
    bad = ~(values > 0) | ~np.isfinite(values)
    if bad.all():
        values = np.ones_like(values)
    elif bad.any():
        values = values.copy()
        values[bad] = values[~bad].min()
    return values


def empirical_weights(cloud: PointCloud, L: int = 10, full: bool = False, tree: KdTree | None = None) -> ObservationWeights:
    """Weights from the local PCA of each point's L-neighbourhood.

    The approximation ``full=False`` returns sigma1 * sigma2 (the in-plane
    spread, which grows as the local sampling gets sparser). ``full=True``
    multiplies by exp(0.5 * sum_{i=1,2} ((x - xbar).b_i)^2 / sigma_i^2).
    Neighbourhoods with a vanishing in-plane spread get the smallest positive
    weight of the cloud.
    """
    _, means, vals, vecs = neighborhood_stats(cloud, L, tree)
    s1s2 = np.sqrt(vals[:, 0] * vals[:, 1])
    if not full:
        values = s1s2
    else:
        off = cloud.points - means
        proj = np.einsum("ni,nij->nj", off, vecs[:, :, :2])
        with np.errstate(divide="ignore", invalid="ignore"):
            expo = 0.5 * np.sum(proj * proj / vals[:, :2], axis=1)
            values = s1s2 * np.exp(expo)
        values[~(s1s2 > 0)] = 0.0
    method = WeightMethod.EMPIRICAL_FULL if full else WeightMethod.EMPIRICAL
    return ObservationWeights(_fill_degenerate(values), method)


def median_filter(values, neighbor_idx):
    """Lower median of ``values`` over each row of ``neighbor_idx``."""
    nb = np.sort(values[neighbor_idx], axis=1)
    return nb[:, (nb.shape[1] - 1) // 2]


def regularize_weights(w: ObservationWeights, cloud: PointCloud, L: int = 10, clip_factor: float = 8.0,
                       tree: KdTree | None = None) -> ObservationWeights:
    """Median-filter over the L nearest neighbours, then clip at clip_factor x mean.

    The clip threshold uses the mean of the filtered values.
    """
    if len(w) != len(cloud):
        raise ValueError("weights and cloud differ in length")
    if L < 1:
        raise ValueError("L must be >= 1")
    if clip_factor <= 0:
        raise ValueError("clip_factor must be positive")
    tree = tree or KdTree(cloud.points)
    idx, _ = tree.query_many(cloud.points, L)
    filtered = median_filter(w.values, idx)
    cap = clip_factor * filtered.mean()
    return ObservationWeights(np.minimum(filtered, cap), w.method)


def compute_weights(cloud: PointCloud, method, gamma=0.9, L=10, clip_factor=8.0, regularize=True) -> ObservationWeights:
    """Weights for one point set in its own sensor frame, regularized and rescaled to mean 1."""
    method = WeightMethod.parse(method)
    if method is WeightMethod.UNIFORM:
        return uniform_weights(len(cloud))
    tree = KdTree(cloud.points)
    if method is WeightMethod.SENSOR:
        w = sensor_weights(cloud, gamma, L)
    else:
        w = empirical_weights(cloud, L, full=method is WeightMethod.EMPIRICAL_FULL, tree=tree)
    if regularize:
        w = regularize_weights(w, cloud, min(L, len(cloud)), clip_factor, tree=tree)
    return w.normalized()
