"""Pose arithmetic, primitive shapes and the swept-convex-volume cost family.

The per-object damage proxy is the volume of the convex hull of every pose an
object occupies during a manipulation, normalized by the hull volume at its
initial pose.  Per-axis weights stretch the recorded displacements before the
hull is taken, which lets vertical (drop-prone) motion dominate the cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateInputError, DegenerateShapeError

TWO_PI = 2.0 * math.pi

SURFACE_SAMPLE_COUNT = 500

#: Default per-axis weights: vertical motion counts double.
DEFAULT_WEIGHTS = (1.0, 1.0, 2.0, 1.0, 1.0, 1.0)


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


@dataclass(frozen=True)
class Pose6D:
    """A rigid 6-D pose: translation in workspace units, angles in radians.

    Angles are normalized to (-pi, pi] on construction.
    """

    x: float
    y: float
    z: float
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.roll, self.pitch, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite pose component in {vals}")
        object.__setattr__(self, "roll", normalize_angle(self.roll))
        object.__setattr__(self, "pitch", normalize_angle(self.pitch))
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.x, self.y, self.z, self.roll, self.pitch, self.yaw], dtype=float
        )

    @staticmethod
    def from_array(v) -> "Pose6D":
        v = np.asarray(v, dtype=float)
        return Pose6D(v[0], v[1], v[2], v[3], v[4], v[5])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def translated(self, dx=0.0, dy=0.0, dz=0.0) -> "Pose6D":
        return Pose6D(self.x + dx, self.y + dy, self.z + dz,
                      self.roll, self.pitch, self.yaw)


@dataclass(frozen=True)
class WeightVector:
    """Non-negative per-component weights over the 6-D pose."""

    w_x: float = 1.0
    w_y: float = 1.0
    w_z: float = 1.0
    w_roll: float = 1.0
    w_pitch: float = 1.0
    w_yaw: float = 1.0

    def __post_init__(self):
        for v in self.as_array():
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"weights must be finite and >= 0, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.w_x, self.w_y, self.w_z, self.w_roll, self.w_pitch, self.w_yaw],
            dtype=float,
        )

    @staticmethod
    def from_array(v) -> "WeightVector":
        v = np.asarray(v, dtype=float)
        return WeightVector(*v.tolist())

    @staticmethod
    def default() -> "WeightVector":
        return WeightVector(*DEFAULT_WEIGHTS)


def rotation_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation matrix for extrinsic x-y-z Euler angles (R = Rz @ Ry @ Rx)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def transform_points(points: np.ndarray, pose: Pose6D) -> np.ndarray:
    """Map body-frame points to the world frame under ``pose``."""
    R = rotation_matrix(pose.roll, pose.pitch, pose.yaw)
    return points @ R.T + pose.position


def _fibonacci_sphere(n: int, radius: float) -> np.ndarray:
    i = np.arange(n, dtype=float)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    z = 1.0 - 2.0 * (i + 0.5) / n
    r_xy = np.sqrt(np.clip(1.0 - z * z, 0.0, 1.0))
    theta = golden * i
    pts = np.stack([r_xy * np.cos(theta), r_xy * np.sin(theta), z], axis=1)
    return pts * radius


def _box_samples(ex: float, ey: float, ez: float) -> np.ndarray:
    # 8 corners + 12 edges x 9 + 6 faces x 64 interior grid = 500 points.
    hx, hy, hz = ex / 2.0, ey / 2.0, ez / 2.0
    pts = []
    for sx in (-hx, hx):
        for sy in (-hy, hy):
            for sz in (-hz, hz):
                pts.append((sx, sy, sz))
    ts = np.linspace(-1.0, 1.0, 11)[1:-1]  # 9 interior parameters
    for axis in range(3):
        lo = [-hx, -hy, -hz]
        for s1 in (-1, 1):
            for s2 in (-1, 1):
                for t in ts:
                    p = [0.0, 0.0, 0.0]
                    p[axis] = t * [hx, hy, hz][axis]
                    o1, o2 = (axis + 1) % 3, (axis + 2) % 3
                    p[o1] = s1 * -lo[o1]
                    p[o2] = s2 * -lo[o2]
                    pts.append(tuple(p))
    gs = np.linspace(-1.0, 1.0, 10)[1:-1]  # 8x8 interior grid per face
    for axis in range(3):
        for side in (-1, 1):
            for u in gs:
                for v in gs:
                    p = [0.0, 0.0, 0.0]
                    p[axis] = side * [hx, hy, hz][axis]
                    o1, o2 = (axis + 1) % 3, (axis + 2) % 3
                    p[o1] = u * [hx, hy, hz][o1]
                    p[o2] = v * [hx, hy, hz][o2]
                    pts.append(tuple(p))
    out = np.array(pts, dtype=float)
    assert out.shape == (SURFACE_SAMPLE_COUNT, 3)
    return out


def _ring(radius: float, z: float, count: int, phase: float = 0.0) -> np.ndarray:
    a = np.linspace(0.0, TWO_PI, count, endpoint=False) + phase
    return np.stack([radius * np.cos(a), radius * np.sin(a), np.full(count, z)], axis=1)


def _cylinder_samples(radius: float, height: float) -> np.ndarray:
    # Rims carry most points since they define the hull; 500 points total.
    hz = height / 2.0
    parts = [
        _ring(radius, -hz, 80),
        _ring(radius, hz, 80),
    ]
    for i, z in enumerate(np.linspace(-hz, hz, 7)[1:-1]):
        parts.append(_ring(radius, z, 48, phase=0.3 * (i + 1)))
    for z in (-hz, hz):
        parts.append(_ring(0.55 * radius, z, 49, phase=0.17))
        parts.append(np.array([[0.0, 0.0, z]]))
    out = np.concatenate(parts, axis=0)
    assert out.shape == (SURFACE_SAMPLE_COUNT, 3)
    return out


@lru_cache(maxsize=256)
def _base_samples(kind: str, dims: tuple) -> np.ndarray:
    if kind == "box":
        pts = _box_samples(*dims)
    elif kind == "cylinder":
        pts = _cylinder_samples(*dims)
    elif kind == "sphere":
        pts = _fibonacci_sphere(SURFACE_SAMPLE_COUNT, dims[0])
    else:
        raise ValueError(f"unknown shape kind {kind!r}")
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True)
class ShapeModel:
    """A primitive shape with a fixed, deterministic surface sample set.

    dims: box -> (ex, ey, ez) full extents; cylinder -> (radius, height);
    sphere -> (radius,).
    """

    kind: str
    dims: tuple

    def __post_init__(self):
        expected = {"box": 3, "cylinder": 2, "sphere": 1}
        if self.kind not in expected:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != expected[self.kind]:
            raise ValueError(f"{self.kind} needs {expected[self.kind]} dims")
        if any(d <= 0 for d in dims):
            raise ValueError("shape dims must be > 0")
        object.__setattr__(self, "dims", dims)

    @property
    def surface_samples(self) -> np.ndarray:
        """500 deterministic body-frame surface points."""
        return _base_samples(self.kind, self.dims)

    @property
    def extents(self) -> np.ndarray:
        """Axis-aligned full extents in the body frame."""
        if self.kind == "box":
            return np.array(self.dims)
        if self.kind == "cylinder":
            r, h = self.dims
            return np.array([2 * r, 2 * r, h])
        r = self.dims[0]
        return np.array([2 * r, 2 * r, 2 * r])

    @property
    def max_extent(self) -> float:
        return float(np.max(self.extents))

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.extents) / 2.0)

    @property
    def volume(self) -> float:
        if self.kind == "box":
            ex, ey, ez = self.dims
            return ex * ey * ez
        if self.kind == "cylinder":
            r, h = self.dims
            return math.pi * r * r * h
        r = self.dims[0]
        return 4.0 / 3.0 * math.pi * r ** 3


@dataclass
class Trajectory:
    """Ordered pose sequence; the first entry is the pre-manipulation pose."""

    poses: list = field(default_factory=list)

    def __post_init__(self):
        if not self.poses:
            raise ValueError("trajectory must hold at least one pose")

    def append(self, pose: Pose6D):
        self.poses.append(pose)

    def __len__(self):
        return len(self.poses)


def convex_hull_volume(points) -> float:
    """Volume of the convex hull of a 3-D point set.

    Degenerate (coplanar/collinear) inputs yield 0.0; fewer than four points
    raise DegenerateInputError.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("expected an (N, 3) point array")
    if pts.shape[0] < 4:
        raise DegenerateInputError(f"need >= 4 points, got {pts.shape[0]}")
    try:
        return float(ConvexHull(pts).volume)
    except QhullError:
        return 0.0


def apply_pose_weights(p0: Pose6D, pi: Pose6D, w: WeightVector) -> Pose6D:
    """Scale the displacement from p0 to pi component-wise by w.

    Returns p0 + diag(w) * (pi - p0) over the 6-vector; angular components are
    differenced as raw Euler values and re-normalized afterwards.
    """
    a0, ai = p0.as_array(), pi.as_array()
    return Pose6D.from_array(a0 + w.as_array() * (ai - a0))


def swept_convex_volume(shape: ShapeModel, traj: Trajectory, w: WeightVector) -> float:
    """Weighted swept convex volume ratio of a shape along a trajectory.

    Surface samples are placed at every weight-adjusted pose; the volume of
    the hull over the accumulated cloud is divided by the hull volume at the
    first pose.  A static object therefore scores exactly 1.0.
    """
    p0 = traj.poses[0]
    base = transform_points(shape.surface_samples, p0)
    v0 = convex_hull_volume(base)
    if v0 <= 0.0:
        raise DegenerateShapeError(
            f"{shape.kind} hull at the initial pose has zero volume"
        )
    if len(traj) == 1:
        return 1.0
    clouds = [base]
    for pi in traj.poses[1:]:
        pw = apply_pose_weights(p0, pi, w)
        clouds.append(transform_points(shape.surface_samples, pw))
    return convex_hull_volume(np.concatenate(clouds, axis=0)) / v0


def max_weighted_scv(trajectories: dict, w: WeightVector) -> float:
    """Maximum weighted swept convex volume over a passive set.

    ``trajectories`` maps object id -> (ShapeModel, Trajectory).  An empty
    passive set returns the static baseline 1.0 (leaf-node convention).
    """
    if not trajectories:
        return 1.0
    return max(
        swept_convex_volume(shape, traj, w)
        for shape, traj in trajectories.values()
    )
