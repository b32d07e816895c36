"""Synthetic indoor scenes and Lidar-like scans with ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import PointCloud, RigidTransform, axis_angle_matrix, compose

ROOM = (8.0, 6.0, 3.0)


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    # analytic description: one (label, width, height) per rectangle
    parts: tuple = ()
    # furniture footprints as (cx, cy, yaw, half_w, half_d, height)
    boxes: tuple = ()

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if t.size and np.any(self.areas() <= 0):
            raise ValueError("degenerate triangle")

    def _cross(self):
        p = self.vertices[self.triangles]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    def areas(self):
        return 0.5 * np.linalg.norm(self._cross(), axis=1)

    def normals(self):
        c = self._cross()
        return c / np.linalg.norm(c, axis=1, keepdims=True)

    def area(self):
        return float(self.areas().sum())


@dataclass(frozen=True)
class ScanSpec:
    sensor_position: np.ndarray
    n_points: int = 10000
    min_distance: float = 1.5
    thinning: str = "inverse_square"
    incidence: bool = True

    def __post_init__(self):
        object.__setattr__(self, "sensor_position", np.asarray(self.sensor_position, dtype=np.float64).reshape(3))
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if not self.min_distance > 0:
            raise ValueError("min_distance must be positive")
        if self.thinning not in ("none", "inverse_square"):
            raise ValueError(f"unknown thinning {self.thinning!r}")


@dataclass(frozen=True)
class Perturbation:
    angle_min: float = 0.0  # degrees
    angle_max: float = 90.0
    sigma_t: float = 1.0  # meters

    def draw(self, rng):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        angle = np.radians(rng.uniform(self.angle_min, self.angle_max))
        t = rng.standard_normal(3) * self.sigma_t
        return RigidTransform(axis_angle_matrix(axis, angle), t)


class _MeshBuilder:
    def __init__(self):
        self.vertices = []
        self.triangles = []
        self.parts = []

    def rect(self, label, center, u, v, normal):
        """Rectangle center +- u +- v with triangles wound so their normal follows ``normal``."""
        center, u, v = (np.asarray(a, dtype=np.float64) for a in (center, u, v))
        if np.dot(np.cross(u, v), normal) < 0:
            u, v = v, u
        base = len(self.vertices)
        self.vertices += [center - u - v, center + u - v, center + u + v, center - u + v]
        self.triangles += [(base, base + 1, base + 2), (base, base + 2, base + 3)]
        self.parts.append((label, 2 * float(np.linalg.norm(u)), 2 * float(np.linalg.norm(v))))


def make_room_scene(seed: int = 0, ceiling: bool = True, dims=ROOM) -> TriMesh:
    """Axis-aligned room centred on the origin in x/y, floor at z=0, plus 3-6 boxes.

    Room surfaces face inward, box surfaces outward. Boxes have random yaw and
    do not overlap each other or the walls.
    """
    rng = np.random.default_rng(seed)
    lx, ly, lz = (d / 2 for d in dims)
    ex, ey, ez = np.eye(3)
    mb = _MeshBuilder()
    mb.rect("floor", (0, 0, 0), lx * ex, ly * ey, ez)
    if ceiling:
        mb.rect("ceiling", (0, 0, dims[2]), lx * ex, ly * ey, -ez)
    mb.rect("wall-x", (-lx, 0, lz), ly * ey, lz * ez, ex)
    mb.rect("wall+x", (lx, 0, lz), ly * ey, lz * ez, -ex)
    mb.rect("wall-y", (0, -ly, lz), lx * ex, lz * ez, ey)
    mb.rect("wall+y", (0, ly, lz), lx * ex, lz * ez, -ey)

    boxes = []
    n_boxes = int(rng.integers(3, 7))
    attempts = 0
    while len(boxes) < n_boxes and attempts < 1000:
        attempts += 1
        hw, hd = rng.uniform(0.25, 1.0), rng.uniform(0.25, 0.75)
        h = rng.uniform(0.4, 2.0)
        yaw = rng.uniform(0, np.pi)
        r = float(np.hypot(hw, hd))
        cx = rng.uniform(-lx + r + 0.05, lx - r - 0.05)
        cy = rng.uniform(-ly + r + 0.05, ly - r - 0.05)
        if any(np.hypot(cx - b[0], cy - b[1]) < r + np.hypot(b[3], b[4]) + 0.1 for b in boxes):
            continue
        boxes.append((cx, cy, yaw, hw, hd, h))
    for i, (cx, cy, yaw, hw, hd, h) in enumerate(boxes):
        a = np.array([np.cos(yaw), np.sin(yaw), 0.0])
        b = np.array([-np.sin(yaw), np.cos(yaw), 0.0])
        c = np.array([cx, cy, h / 2])
        mb.rect(f"box{i}-top", c + h / 2 * ez, hw * a, hd * b, ez)
        for s in (1, -1):
            mb.rect(f"box{i}-a{s:+d}", c + s * hw * a, hd * b, h / 2 * ez, s * a)
            mb.rect(f"box{i}-b{s:+d}", c + s * hd * b, hw * a, h / 2 * ez, s * b)
    return TriMesh(np.array(mb.vertices), np.array(mb.triangles), tuple(mb.parts), tuple(boxes))


def random_sensor_position(mesh: TriMesh, rng, dims=ROOM, margin=0.5, clearance=0.3):
    """A sensor location inside the room, outside every piece of furniture."""
    lx, ly = dims[0] / 2 - margin, dims[1] / 2 - margin
    for _ in range(10000):
        p = np.array([rng.uniform(-lx, lx), rng.uniform(-ly, ly), rng.uniform(1.0, 2.0)])
        if all(np.hypot(p[0] - b[0], p[1] - b[1]) > np.hypot(b[3], b[4]) + clearance or p[2] > b[5] + clearance
               for b in mesh.boxes):
            return p
    raise RuntimeError("no free sensor location found")


def sample_uniform(mesh: TriMesh, n: int, seed: int = 0) -> PointCloud:
    """n points uniformly distributed over the mesh surface, with triangle normals."""
    rng = np.random.default_rng(seed)
    areas = mesh.areas()
    tri = rng.choice(len(areas), size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    p = mesh.vertices[mesh.triangles[tri]]
    pts = (1 - r1)[:, None] * p[:, 0] + (r1 * (1 - r2))[:, None] * p[:, 1] + (r1 * r2)[:, None] * p[:, 2]
    return PointCloud(pts, mesh.normals()[tri])


def keep_probability(cloud: PointCloud, spec: ScanSpec):
    ray = cloud.points - spec.sensor_position
    d = np.linalg.norm(ray, axis=1)
    if spec.thinning == "none":
        p = np.ones(len(cloud))
    else:
        p = (spec.min_distance / d) ** 2
    if spec.incidence:
        cos_inc = np.abs(np.einsum("ij,ij->i", cloud.normals, ray)) / d
        p = p * np.maximum(cos_inc, 0.1)
    return np.minimum(p, 1.0)


def lidar_thin(cloud: PointCloud, spec: ScanSpec, seed: int = 0) -> PointCloud:
    """Randomly drop points like a Lidar at ``spec.sensor_position`` would under-sample them.

    Kept points are returned in the sensor frame (sensor at the origin, axes unchanged).
    """
    if cloud.normals is None:
        raise ValueError("lidar_thin needs normals")
    u = np.random.default_rng(seed).random(len(cloud))
    keep = u < keep_probability(cloud, spec)
    return PointCloud(cloud.points[keep] - spec.sensor_position, cloud.normals[keep])


@dataclass
class SyntheticPair:
    source: PointCloud  # set 1, perturbed
    target: PointCloud  # set 0
    ground_truth: RigidTransform  # maps source's frame into target's frame
    sensors: tuple = field(default=())


def make_scans(mesh: TriMesh, specs, perturb: Perturbation, seed: int = 0):
    """One thinned scan per spec; every scan after the first is additionally perturbed.

    Returns (clouds, gts) where gts[i] maps scan i's frame into scan 0's frame.
    """
    ss = np.random.SeedSequence(seed).spawn(3 * len(specs))
    clouds, gts = [], []
    for i, spec in enumerate(specs):
        dense = sample_uniform(mesh, spec.n_points, ss[3 * i])
        c = lidar_thin(dense, spec, ss[3 * i + 1])
        offset = RigidTransform(np.eye(3), spec.sensor_position - specs[0].sensor_position)
        if i == 0:
            clouds.append(c)
            gts.append(offset)
            continue
        p = perturb.draw(np.random.default_rng(ss[3 * i + 2]))
        clouds.append(PointCloud(p.apply(c.points), c.normals @ p.rotation.T))
        gts.append(compose(offset, p.inverse()))
    return clouds, gts


def make_pair(mesh: TriMesh, spec_a: ScanSpec, spec_b: ScanSpec, perturb: Perturbation, seed: int = 0):
    """Two thinned scans of ``mesh``; the second additionally perturbed.

    Returns (cloud_a, cloud_b, gt) with gt mapping cloud_b's frame to cloud_a's.
    """
    (a, b), (_, gt) = make_scans(mesh, [spec_a, spec_b], perturb, seed)
    return a, b, gt


def generate_pair(seed: int, n_points=10000, perturb: Perturbation | None = None, min_distance=1.5,
                  incidence=False, thinning="inverse_square") -> SyntheticPair:
    """Scene, sensor placement and scan pair all derived from one seed."""
    perturb = perturb or Perturbation()
    mesh = make_room_scene(seed)
    rng = np.random.default_rng([seed, 1])
    sa, sb = random_sensor_position(mesh, rng), random_sensor_position(mesh, rng)
    spec_a = ScanSpec(sa, n_points, min_distance, thinning, incidence)
    spec_b = ScanSpec(sb, n_points, min_distance, thinning, incidence)
    a, b, gt = make_pair(mesh, spec_a, spec_b, perturb, seed)
    return SyntheticPair(b, a, gt, (sa, sb))
