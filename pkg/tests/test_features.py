import math

import numpy as np
import pytest

from seqrank.errors import InsufficientDataError, UnknownClassError
from seqrank.features import (GmmEntry, VisibilityModel, _em_fit,
                              assemble_feature_vector, avs_score,
                              feature_length, fit_visibility_gmm,
                              visibility_density, visibility_ratio)
from seqrank.geometry import Pose6D
from seqrank.scene import generate_scene, shape_for_class

from conftest import build_scene


def test_visibility_ratio_bounds(container):
    s = build_scene(container, [(0, "cube", Pose6D(0.3, 0.2, 0.04))])
    r = visibility_ratio(s, 0)
    assert 0.0 < r < 1.0   # self-occlusion keeps it below 1


def test_visibility_ratio_occluded_is_zero(container):
    ball = shape_for_class("ball")
    s = build_scene(container, [(0, "ball", Pose6D(0.3, 0.2, ball.dims[0]))])
    cam = s.camera_pose.position
    tgt = s.objects[0].pose.position
    mid = (cam + tgt) / 2
    s.objects.append(type(s.objects[0])(1, "crate", shape_for_class("crate"),
                                        Pose6D(*mid)))
    # a big box square in the line of sight wipes out most of the cloud
    assert visibility_ratio(s, 0) < visibility_ratio(s.without({1}), 0)


def test_visibility_monotone_under_occlusion(container):
    s0 = build_scene(container, [(0, "ball", Pose6D(0.3, 0.2, 0.04))])
    cam = s0.camera_pose.position
    mid = (cam + s0.objects[0].pose.position) / 2
    ratios = []
    for cls in ("cube", "crate"):   # growing occluder footprint
        s = build_scene(container, [
            (0, "ball", Pose6D(0.3, 0.2, 0.04)),
            (1, cls, Pose6D(*mid)),
        ])
        ratios.append(visibility_ratio(s, 0))
    base = visibility_ratio(s0, 0)
    assert base >= ratios[0] >= 0.0


def test_gmm_requires_samples():
    with pytest.raises(InsufficientDataError):
        fit_visibility_gmm([0.5] * 19)


def test_gmm_unimodal_and_bimodal():
    rng = np.random.default_rng(0)
    uni = fit_visibility_gmm(rng.normal(0.6, 0.05, 1000), seed=1)
    assert uni.k == 1
    bi = fit_visibility_gmm(
        np.concatenate([rng.normal(0.3, 0.03, 500),
                        rng.normal(0.8, 0.03, 500)]), seed=1)
    assert bi.k == 2
    assert math.isclose(sum(bi.weights), 1.0, abs_tol=1e-9)
    assert min(bi.variances) >= 1e-6


def test_gmm_degenerate_constant():
    e = fit_visibility_gmm([0.4] * 50, seed=0)
    assert e.k == 1
    assert e.variances[0] == pytest.approx(1e-6)


def test_em_loglik_nondecreasing():
    rng = np.random.default_rng(3)
    x = np.concatenate([rng.normal(0.3, 0.05, 200),
                        rng.normal(0.7, 0.05, 200)])
    trace = []
    _em_fit(x, 2, np.random.default_rng(1), ll_trace=trace)
    diffs = np.diff(trace)
    assert (diffs >= -1e-8).all()


def test_density_peak_value():
    e = GmmEntry(1, (1.0,), (0.6,), (0.0025,), 100)
    assert math.isclose(visibility_density(e, 0.6),
                        1.0 / (0.05 * math.sqrt(2 * math.pi)), rel_tol=1e-12)
    assert visibility_density(e, 0.0) < 1e-10


def test_density_mixture_average():
    e = GmmEntry(2, (0.5, 0.5), (0.5, 0.5), (0.0025, 0.01), 200)
    d1 = visibility_density(GmmEntry(1, (1.0,), (0.5,), (0.0025,), 1), 0.5)
    d2 = visibility_density(GmmEntry(1, (1.0,), (0.5,), (0.01,), 1), 0.5)
    assert math.isclose(visibility_density(e, 0.5), (d1 + d2) / 2,
                        rel_tol=1e-12)


def test_avs_cardinal_directions(container):
    above = build_scene(container, [
        (0, "cube", Pose6D(0.3, 0.2, 0.04)),
        (1, "ball", Pose6D(0.3, 0.2, 0.3)),
    ])
    assert avs_score(above, 1, 0, "above") == pytest.approx(1.0, abs=1e-4)
    assert avs_score(above, 1, 0, "below") == pytest.approx(0.0, abs=1e-4)
    left = build_scene(container, [
        (0, "cube", Pose6D(0.3, 0.2, 0.04)),
        (1, "ball", Pose6D(0.3, 0.05, 0.04)),
    ])
    assert avs_score(left, 1, 0, "left") == pytest.approx(1.0, abs=1e-4)
    assert avs_score(left, 1, 0, "right") == pytest.approx(0.0, abs=1e-4)


def test_avs_above_below_complement(container):
    s = build_scene(container, [
        (0, "cube", Pose6D(0.30, 0.20, 0.04)),
        (1, "ball", Pose6D(0.38, 0.27, 0.21)),
    ])
    a = avs_score(s, 1, 0, "above")
    b = avs_score(s, 1, 0, "below")
    assert math.isclose(a + b, 1.0, abs_tol=1e-6)


def test_avs_diagonal_value(container):
    # 45 degrees between up and left: above = (1 + cos 45)/2
    s = build_scene(container, [
        (0, "ball", Pose6D(0.30, 0.20, 0.15)),
        (1, "ball", Pose6D(0.30, 0.10, 0.25)),
    ])
    val = avs_score(s, 1, 0, "above")
    assert math.isclose(val, (1 + math.cos(math.pi / 4)) / 2, abs_tol=0.02)


def test_avs_coincident_is_half(container):
    s = build_scene(container, [
        (0, "cube", Pose6D(0.3, 0.2, 0.04)),
        (1, "ball", Pose6D(0.3, 0.2, 0.04)),
    ])
    for p in ("above", "left", "behind"):
        assert avs_score(s, 1, 0, p) == 0.5


def test_feature_lengths(container, flat_vis):
    combos = {1: ["cube"], 2: ["cube", "can"], 3: ["crate", "can", "ball"],
              4: ["crate", "can", "cube", "ball"],
              5: ["crate", "can", "cube", "ball", "book"],
              6: ["crate", "can", "cube", "ball", "book", "barrel"]}
    for n, classes in combos.items():
        s = generate_scene(classes, container, seed=31)
        v = assemble_feature_vector(s, flat_vis)
        assert v.shape[0] == feature_length(n)
        assert np.isfinite(v).all()
    assert feature_length(4) == 194


def test_feature_vector_order_invariant(container, flat_vis):
    s = generate_scene(["crate", "can"], container, seed=33)
    v1 = assemble_feature_vector(s, flat_vis)
    s.objects.reverse()
    v2 = assemble_feature_vector(s, flat_vis)
    assert np.allclose(v1, v2)


def test_unknown_class_raises(container):
    s = generate_scene(["cube"], container, seed=34)
    with pytest.raises(UnknownClassError):
        assemble_feature_vector(s, VisibilityModel({}))


def test_vis_model_json_roundtrip(tmp_path, flat_vis):
    path = tmp_path / "vis.json"
    flat_vis.save(path)
    loaded = VisibilityModel.load(path)
    assert loaded.entries.keys() == flat_vis.entries.keys()
    assert loaded.entry("cube") == flat_vis.entry("cube")
