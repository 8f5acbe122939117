import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seqrank.errors import DegenerateInputError
from seqrank.geometry import (Pose6D, ShapeModel, Trajectory, WeightVector,
                              apply_pose_weights, convex_hull_volume,
                              max_weighted_scv, normalize_angle,
                              rotation_matrix, swept_convex_volume,
                              transform_points)

UNIT = WeightVector.from_array([1, 1, 1, 1, 1, 1])


@given(st.floats(-50, 50))
def test_normalize_angle_range(a):
    v = normalize_angle(a)
    assert -math.pi < v <= math.pi
    assert math.isclose(math.cos(v), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(v), math.sin(a), abs_tol=1e-9)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_rotation_matrix_orthonormal(r, p, y):
    R = rotation_matrix(r, p, y)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert math.isclose(np.linalg.det(R), 1.0, abs_tol=1e-12)


def test_rotation_matrix_axis_order():
    # yaw then pitch then roll applied right-to-left: R = Rz @ Ry @ Rx
    R = rotation_matrix(0.0, 0.0, math.pi / 2)
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-12)
    R = rotation_matrix(math.pi / 2, 0.0, 0.0)
    assert np.allclose(R @ [0, 1, 0], [0, 0, 1], atol=1e-12)


def test_pose_roundtrip():
    p = Pose6D(0.1, -0.2, 0.3, 0.4, -0.5, 0.6)
    assert Pose6D.from_array(p.as_array()) == p


def test_shape_sample_counts():
    for shape in (ShapeModel("box", (0.1, 0.2, 0.3)),
                  ShapeModel("cylinder", (0.05, 0.12)),
                  ShapeModel("sphere", (0.04,))):
        assert shape.surface_samples.shape == (500, 3)


def test_box_samples_span_extents():
    s = ShapeModel("box", (0.1, 0.2, 0.3))
    pts = s.surface_samples
    assert np.allclose(pts.max(axis=0) - pts.min(axis=0), (0.1, 0.2, 0.3))


def test_shape_volumes():
    assert math.isclose(ShapeModel("box", (2, 3, 4)).volume, 24.0)
    assert math.isclose(ShapeModel("sphere", (1.0,)).volume,
                        4 * math.pi / 3, rel_tol=1e-9)
    assert math.isclose(ShapeModel("cylinder", (1.0, 2.0)).volume,
                        2 * math.pi, rel_tol=1e-9)


def test_hull_volume_unit_cube():
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1)
                        for z in (0, 1)], dtype=float)
    assert math.isclose(convex_hull_volume(corners), 1.0)


def test_hull_volume_degenerate():
    flat = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], float)
    assert convex_hull_volume(flat) == 0.0
    with pytest.raises(DegenerateInputError):
        convex_hull_volume(flat[:3])


def test_sampled_hulls_near_analytic():
    # 2% tolerance contract for sampled shells
    box = ShapeModel("box", (0.1, 0.2, 0.3))
    assert math.isclose(convex_hull_volume(box.surface_samples), box.volume,
                        rel_tol=0.02)
    sph = ShapeModel("sphere", (0.05,))
    assert math.isclose(convex_hull_volume(sph.surface_samples), sph.volume,
                        rel_tol=0.02)
    cyl = ShapeModel("cylinder", (0.05, 0.1))
    assert math.isclose(convex_hull_volume(cyl.surface_samples), cyl.volume,
                        rel_tol=0.02)


def test_transform_points_translation():
    pts = np.zeros((3, 3))
    out = transform_points(pts, Pose6D(1, 2, 3))
    assert np.allclose(out, [[1, 2, 3]] * 3)


def test_apply_pose_weights():
    p0 = Pose6D(0, 0, 0)
    pi = Pose6D(1, 0, -0.5, 0, 0, 0.2)
    w = WeightVector.from_array([1, 1, 2, 1, 1, 0])
    pw = apply_pose_weights(p0, pi, w)
    assert np.allclose(pw.as_array(), [1, 0, -1.0, 0, 0, 0])


def test_default_weights_double_z():
    assert np.allclose(WeightVector.default().as_array(), [1, 1, 2, 1, 1, 1])


def test_scv_translate_one_edge():
    cube = ShapeModel("box", (1.0, 1.0, 1.0))
    traj = Trajectory([Pose6D(0, 0, 0), Pose6D(1, 0, 0)])
    assert math.isclose(swept_convex_volume(cube, traj, UNIT), 2.0,
                        rel_tol=0.02)


def test_scv_drop_weighting():
    cube = ShapeModel("box", (1.0, 1.0, 1.0))
    traj = Trajectory([Pose6D(0, 0, 0), Pose6D(0, 0, -0.5)])
    assert math.isclose(swept_convex_volume(cube, traj, UNIT), 1.5,
                        rel_tol=0.02)
    assert math.isclose(
        swept_convex_volume(cube, traj, WeightVector.default()), 2.0,
        rel_tol=0.02)


def test_scv_static_is_one():
    cube = ShapeModel("box", (1.0, 1.0, 1.0))
    assert swept_convex_volume(cube, Trajectory([Pose6D(0, 0, 0)]),
                               UNIT) == 1.0


def test_scv_intermediate_poses_inside_hull():
    # a pose between the endpoints adds nothing to the hull
    cube = ShapeModel("box", (1.0, 1.0, 1.0))
    two = Trajectory([Pose6D(0, 0, 0), Pose6D(1, 0, 0)])
    three = Trajectory([Pose6D(0, 0, 0), Pose6D(0.5, 0, 0), Pose6D(1, 0, 0)])
    assert math.isclose(swept_convex_volume(cube, two, UNIT),
                        swept_convex_volume(cube, three, UNIT), rel_tol=1e-9)


def test_max_weighted_scv_empty_is_baseline():
    assert max_weighted_scv({}, UNIT) == 1.0


def test_max_weighted_scv_picks_max():
    cube = ShapeModel("box", (1.0, 1.0, 1.0))
    still = Trajectory([Pose6D(0, 0, 0)])
    moved = Trajectory([Pose6D(0, 0, 0), Pose6D(1, 0, 0)])
    v = max_weighted_scv({1: (cube, still), 2: (cube, moved)}, UNIT)
    assert math.isclose(v, 2.0, rel_tol=0.02)
