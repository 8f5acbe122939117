"""Convex collision helpers over sampled shape surfaces.

Separation tests project the 500 surface samples of each shape onto a
candidate axis set (body axes, their cross products, the centroid
difference).  A non-positive overlap on any axis proves separation; the
minimum-overlap axis approximates the minimum translation vector.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from shapely.geometry import MultiPoint, Polygon

from .geometry import Pose6D, ShapeModel, rotation_matrix, transform_points

_EPS = 1e-12


@lru_cache(maxsize=4096)
def _world_samples_cached(kind, dims, pose_tuple):
    pose = Pose6D.from_array(np.array(pose_tuple))
    pts = transform_points(_shape(kind, dims).surface_samples, pose)
    pts.setflags(write=False)
    return pts


@lru_cache(maxsize=256)
def _shape(kind, dims):
    return ShapeModel(kind, dims)


def world_samples(shape: ShapeModel, pose: Pose6D) -> np.ndarray:
    """World-frame surface samples, cached per (shape, pose)."""
    key = tuple(pose.as_array().tolist())
    return _world_samples_cached(shape.kind, shape.dims, key)


def aabb(shape: ShapeModel, pose: Pose6D):
    pts = world_samples(shape, pose)
    return pts.min(axis=0), pts.max(axis=0)


def candidate_axes(pose_a: Pose6D, pose_b: Pose6D) -> np.ndarray:
    ra = rotation_matrix(pose_a.roll, pose_a.pitch, pose_a.yaw)
    rb = rotation_matrix(pose_b.roll, pose_b.pitch, pose_b.yaw)
    axes = [ra[:, i] for i in range(3)] + [rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            c = np.cross(ra[:, i], rb[:, j])
            n = np.linalg.norm(c)
            if n > 1e-9:
                axes.append(c / n)
    d = pose_b.position - pose_a.position
    n = np.linalg.norm(d)
    if n > 1e-9:
        axes.append(d / n)
    return np.asarray(axes)


def separation(shape_a: ShapeModel, pose_a: Pose6D,
               shape_b: ShapeModel, pose_b: Pose6D):
    """Signed separation between two shapes.

    Returns (depth, axis): depth > 0 is the approximate penetration along
    ``axis`` (oriented a -> b, i.e. moving b along +axis separates);
    depth <= 0 is a lower bound on the surface gap (exact for box pairs).
    """
    pa = world_samples(shape_a, pose_a)
    pb = world_samples(shape_b, pose_b)
    axes = candidate_axes(pose_a, pose_b)
    proj_a = pa @ axes.T
    proj_b = pb @ axes.T
    min_a, max_a = proj_a.min(axis=0), proj_a.max(axis=0)
    min_b, max_b = proj_b.min(axis=0), proj_b.max(axis=0)
    # Overlap of the two projection intervals per axis.
    overlap = np.minimum(max_a, max_b) - np.maximum(min_a, min_b)
    k = int(np.argmin(overlap))
    axis = axes[k]
    # Orient from a toward b along the chosen axis.
    if (min_b[k] + max_b[k]) < (min_a[k] + max_a[k]):
        axis = -axis
    return float(overlap[k]), axis


def penetration_depth(shape_a, pose_a, shape_b, pose_b) -> float:
    d, _ = separation(shape_a, pose_a, shape_b, pose_b)
    return max(0.0, d)


def surface_gap(shape_a, pose_a, shape_b, pose_b) -> float:
    d, _ = separation(shape_a, pose_a, shape_b, pose_b)
    return max(0.0, -d)


def footprint(shape: ShapeModel, pose: Pose6D) -> Polygon:
    """Convex xy footprint polygon of the shape's world samples."""
    pts = world_samples(shape, pose)
    hull = MultiPoint(pts[:, :2]).convex_hull
    if isinstance(hull, Polygon):
        return hull
    return hull.buffer(1e-9)  # degenerate (line/point) footprint


def footprint_center(shape: ShapeModel, pose: Pose6D) -> np.ndarray:
    c = footprint(shape, pose).centroid
    return np.array([c.x, c.y])


# --- analytic ray casting -------------------------------------------------

def _ray_sphere(o, d, radius):
    b = np.dot(o, d)
    c = np.dot(o, o) - radius * radius
    disc = b * b - c
    if disc < 0:
        return math.inf
    s = math.sqrt(disc)
    for t in (-b - s, -b + s):
        if t > _EPS:
            return t
    return math.inf


def _ray_box(o, d, half):
    t0, t1 = -math.inf, math.inf
    for i in range(3):
        if abs(d[i]) < _EPS:
            if abs(o[i]) > half[i]:
                return math.inf
            continue
        ta = (-half[i] - o[i]) / d[i]
        tb = (half[i] - o[i]) / d[i]
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return math.inf
    if t1 < _EPS:
        return math.inf
    return t0 if t0 > _EPS else t1


def _ray_cylinder(o, d, radius, height):
    hz = height / 2.0
    hits = []
    a = d[0] * d[0] + d[1] * d[1]
    if a > _EPS:
        b = o[0] * d[0] + o[1] * d[1]
        c = o[0] * o[0] + o[1] * o[1] - radius * radius
        disc = b * b - a * c
        if disc >= 0:
            s = math.sqrt(disc)
            for t in ((-b - s) / a, (-b + s) / a):
                if t > _EPS and abs(o[2] + t * d[2]) <= hz + 1e-12:
                    hits.append(t)
    if abs(d[2]) > _EPS:
        for zc in (-hz, hz):
            t = (zc - o[2]) / d[2]
            if t > _EPS:
                x, y = o[0] + t * d[0], o[1] + t * d[1]
                if x * x + y * y <= radius * radius + 1e-12:
                    hits.append(t)
    return min(hits) if hits else math.inf


def ray_shape_intersection(shape: ShapeModel, pose: Pose6D,
                           origin, direction) -> float:
    """Smallest positive ray parameter hitting the shape, or inf."""
    R = rotation_matrix(pose.roll, pose.pitch, pose.yaw)
    o = R.T @ (np.asarray(origin, dtype=float) - pose.position)
    d = R.T @ np.asarray(direction, dtype=float)
    if shape.kind == "sphere":
        return _ray_sphere(o, d, shape.dims[0])
    if shape.kind == "box":
        return _ray_box(o, d, np.array(shape.dims) / 2.0)
    return _ray_cylinder(o, d, *shape.dims)
