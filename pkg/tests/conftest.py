import numpy as np
import pytest

from seqrank.features import GmmEntry, VisibilityModel
from seqrank.geometry import Pose6D
from seqrank.scene import (ObjectInstance, Scene, default_camera,
                           default_gripper_origin, shape_for_class,
                           workspace_preset)


@pytest.fixture(scope="session")
def container():
    return workspace_preset("container")


@pytest.fixture(scope="session")
def shelf():
    return workspace_preset("shelf")


def build_scene(ws, specs):
    """specs: list of (id, class_label, Pose6D)."""
    objs = [ObjectInstance(i, c, shape_for_class(c), p) for i, c, p in specs]
    return Scene(ws, objs, default_camera(ws), default_gripper_origin(ws))


@pytest.fixture
def make_scene(container):
    def _make(specs, ws=None):
        return build_scene(ws or container, specs)
    return _make


@pytest.fixture
def stacked_pair(container):
    """Cube resting centered on a crate."""
    crate = shape_for_class("crate")
    cube = shape_for_class("cube")
    a = Pose6D(0.3, 0.2, crate.dims[2] / 2)
    b = Pose6D(0.3, 0.2, crate.dims[2] + cube.dims[2] / 2)
    return build_scene(container, [(0, "crate", a), (1, "cube", b)])


@pytest.fixture(scope="session")
def flat_vis():
    """Single-component visibility mixtures for every catalog class."""
    entry = GmmEntry(1, (1.0,), (0.5,), (0.01,), 100)
    classes = ("crate", "carton", "book", "cube", "can", "barrel", "ball")
    return VisibilityModel({c: entry for c in classes})


def separated_triple(ws):
    """Three objects placed so no extraction corridor touches the others.

    The gripper enters through the +x face at the workspace midline, so the
    two near objects sit at extreme y and the far one on the midline.
    """
    z = {c: shape_for_class(c) for c in ("cube", "can", "ball")}
    return build_scene(ws, [
        (0, "cube", Pose6D(0.45, 0.06, z["cube"].dims[2] / 2)),
        (1, "can", Pose6D(0.45, 0.34, z["can"].dims[1] / 2)),
        (2, "ball", Pose6D(0.15, 0.20, z["ball"].dims[0])),
    ])
