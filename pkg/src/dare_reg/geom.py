"""Point clouds, rigid transforms and rotation error metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9
NORMAL_TOL = 1e-6


def _as_points(a, name="points"):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim == 1 and a.size == 0:
        a = a.reshape(0, 3)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"{name} must have shape (N, 3), got {a.shape}")
    return a


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of 3D points with optional unit normals and positive weights.

    Arrays are stored as float64 and should be treated as read-only.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = _as_points(self.points)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        n = len(pts)
        if self.normals is not None:
            nrm = _as_points(self.normals, "normals")
            if len(nrm) != n:
                raise ValueError("normals length differs from points length")
            if n and np.max(np.abs(np.linalg.norm(nrm, axis=1) - 1.0)) > NORMAL_TOL:
                raise ValueError("normals must have unit norm")
            object.__setattr__(self, "normals", nrm)
        if self.weights is not None:
            w = np.ascontiguousarray(self.weights, dtype=np.float64).reshape(-1)
            if len(w) != n:
                raise ValueError("weights length differs from points length")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("weights must be strictly positive and finite")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.points)

    def with_normals(self, normals):
        return PointCloud(self.points, normals, self.weights)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return PointCloud(
            self.points[idx],
            None if self.normals is None else self.normals[idx],
            None if self.weights is None else self.weights[idx],
        )


def is_rotation(r, tol=ORTHO_TOL):
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        return False
    return abs(np.linalg.det(r) - 1.0) <= tol


@dataclass(frozen=True)
class RigidTransform:
    """x -> rotation @ x + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise ValueError("translation must be a finite 3-vector")
        if not is_rotation(r):
            raise ValueError("rotation must be orthonormal with det +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def apply(self, pts):
        return np.asarray(pts, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self):
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def as_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other):
        return compose(self, other)


def apply_transform(t: RigidTransform, c: PointCloud) -> PointCloud:
    normals = None if c.normals is None else c.normals @ t.rotation.T
    return PointCloud(t.apply(c.points), normals, c.weights)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return a∘b, i.e. the transform x -> a(b(x))."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def axis_angle_matrix(axis, angle):
    """Rodrigues rotation about ``axis`` by ``angle`` radians."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def random_rotation(rng):
    """Haar-uniform rotation via a normalized Gaussian quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def orthonormalize(r):
    """Closest rotation matrix in the Frobenius sense."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def weighted_procrustes(src, dst, w):
    """Rigid transform minimizing sum_j w_j |R src_j + t - dst_j|^2.

    Returns (transform, singular_values) of the weighted cross-covariance so
    callers can detect degenerate configurations.
    """
    w = np.asarray(w, dtype=np.float64)
    wsum = w.sum()
    cs = (w @ src) / wsum
    cd = (w @ dst) / wsum
    h = (src - cs).T @ ((dst - cd) * w[:, None])
    u, s, vt = np.linalg.svd(h)
    v = vt.T
    d = 1.0 if np.linalg.det(v @ u.T) >= 0 else -1.0
    r = v @ np.diag([1.0, 1.0, d]) @ u.T
    # tiny drift from the SVD would otherwise trip the orthonormality check
    if not is_rotation(r):
        r = orthonormalize(r)
    return RigidTransform(r, cd - r @ cs), s


def geodesic_rotation_error(r_est, r_gt) -> float:
    """Angle between two rotations in degrees, from their Frobenius distance."""
    d_f = np.linalg.norm(np.asarray(r_est, dtype=np.float64) - np.asarray(r_gt, dtype=np.float64))
    arg = min(max(d_f / np.sqrt(8.0), 0.0), 1.0)
    return float(np.degrees(2.0 * np.arcsin(arg)))


def translation_error(t_est, t_gt) -> float:
    return float(np.linalg.norm(np.asarray(t_est, dtype=np.float64) - np.asarray(t_gt, dtype=np.float64)))
