"""Scene data model, training-scene generation and noisy variants.

Scenes are generated by drawing a cluster centroid inside the workspace,
spawning objects at random poses within a radius derived from the summed
object extents, and projecting the result to a collision-free, settled
configuration.  Everything is deterministic given the seed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import collision
from .errors import (GenerationFailureError, ResolutionFailureError,
                     SettleFailureError)
from .geometry import Pose6D, ShapeModel

#: Maximum tolerated pairwise hull penetration, in workspace units.
EPSILON_PENETRATION = 1e-4

_FACES = ("+x", "-x", "+y", "-y")
_FACE_AXIS = {"+x": (0, 1.0), "-x": (0, -1.0), "+y": (1, 1.0), "-y": (1, -1.0)}


@dataclass(frozen=True)
class WorkspaceSpec:
    """Axis-aligned workspace box with an open face and optional drop edges."""

    min: tuple
    max: tuple
    open_face: str = "+x"
    drop_edges: tuple = ()
    floor_z: float = 0.0

    def __post_init__(self):
        lo, hi = np.asarray(self.min, float), np.asarray(self.max, float)
        if not np.all(lo < hi):
            raise ValueError("workspace min must be < max component-wise")
        if self.open_face not in _FACES:
            raise ValueError(f"open_face must be one of {_FACES}")
        for e in self.drop_edges:
            if e not in _FACES:
                raise ValueError(f"drop edge {e!r} not a lateral face")
        object.__setattr__(self, "min", tuple(lo.tolist()))
        object.__setattr__(self, "max", tuple(hi.tolist()))
        object.__setattr__(self, "drop_edges", tuple(self.drop_edges))

    @property
    def size(self) -> np.ndarray:
        return np.asarray(self.max) - np.asarray(self.min)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.size))

    @property
    def depth(self) -> float:
        """Extent along the open-face axis."""
        return float(self.size[_FACE_AXIS[self.open_face][0]])

    @property
    def width(self) -> float:
        return float(self.size[1 - _FACE_AXIS[self.open_face][0]])

    def face_plane(self, face: str):
        """(axis index, boundary coordinate, outward sign) of a lateral face."""
        axis, sign = _FACE_AXIS[face]
        coord = self.max[axis] if sign > 0 else self.min[axis]
        return axis, coord, sign


@dataclass
class ObjectInstance:
    id: int
    class_label: str
    shape: ShapeModel
    pose: Pose6D


@dataclass
class Scene:
    workspace: WorkspaceSpec
    objects: list
    camera_pose: Pose6D
    gripper_origin: tuple
    rng_seed: int = 0

    def object_by_id(self, oid: int) -> ObjectInstance:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(f"no object with id {oid}")

    def without(self, ids) -> "Scene":
        ids = set(ids) if not isinstance(ids, int) else {ids}
        return replace(self, objects=[o for o in self.objects if o.id not in ids])

    def copy(self) -> "Scene":
        return replace(self, objects=[replace(o) for o in self.objects])


# --- presets and the class catalog ----------------------------------------

def workspace_preset(name: str) -> WorkspaceSpec:
    if name == "container":
        return WorkspaceSpec(min=(0.0, 0.0, 0.0), max=(0.6, 0.4, 0.4),
                             open_face="+x", drop_edges=(), floor_z=0.0)
    if name == "shelf":
        return WorkspaceSpec(min=(0.0, 0.0, 0.0), max=(0.8, 0.35, 0.35),
                             open_face="+x", drop_edges=("+y", "-y"),
                             floor_z=0.0)
    raise ValueError(f"unknown workspace preset {name!r}")


def default_camera(workspace: WorkspaceSpec) -> Pose6D:
    axis, coord, sign = workspace.face_plane(workspace.open_face)
    center = (np.asarray(workspace.min) + np.asarray(workspace.max)) / 2.0
    pos = center.copy()
    pos[axis] = coord + sign * 0.6 * workspace.depth
    pos[2] = workspace.max[2] + 0.5 * workspace.size[2]
    return Pose6D(pos[0], pos[1], pos[2])


def default_gripper_origin(workspace: WorkspaceSpec) -> tuple:
    axis, coord, sign = workspace.face_plane(workspace.open_face)
    center = (np.asarray(workspace.min) + np.asarray(workspace.max)) / 2.0
    pos = center.copy()
    pos[axis] = coord + sign * 0.5 * workspace.depth
    pos[2] = workspace.min[2] + 0.5 * workspace.size[2]
    return tuple(pos.tolist())


_CATALOG = {
    "crate": ShapeModel("box", (0.12, 0.09, 0.07)),
    "carton": ShapeModel("box", (0.08, 0.08, 0.12)),
    "book": ShapeModel("box", (0.14, 0.10, 0.03)),
    "cube": ShapeModel("box", (0.08, 0.08, 0.08)),
    "can": ShapeModel("cylinder", (0.033, 0.11)),
    "barrel": ShapeModel("cylinder", (0.05, 0.08)),
    "ball": ShapeModel("sphere", (0.04,)),
}


def shape_for_class(label: str) -> ShapeModel:
    """Catalog lookup with a deterministic hash-derived fallback."""
    if label in _CATALOG:
        return _CATALOG[label]
    digest = hashlib.md5(label.encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    kind = ("box", "cylinder", "sphere")[rng.integers(3)]
    if kind == "box":
        return ShapeModel("box", tuple(rng.uniform(0.05, 0.13, 3).round(4)))
    if kind == "cylinder":
        return ShapeModel("cylinder", (round(rng.uniform(0.025, 0.05), 4),
                                       round(rng.uniform(0.06, 0.12), 4)))
    return ShapeModel("sphere", (round(rng.uniform(0.03, 0.05), 4),))


# --- validation -----------------------------------------------------------

def max_pairwise_penetration(scene: Scene) -> float:
    worst = 0.0
    objs = scene.objects
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            a, b = objs[i], objs[j]
            lo_a, hi_a = collision.aabb(a.shape, a.pose)
            lo_b, hi_b = collision.aabb(b.shape, b.pose)
            if np.any(lo_a > hi_b + EPSILON_PENETRATION) or \
               np.any(lo_b > hi_a + EPSILON_PENETRATION):
                continue
            worst = max(worst, collision.penetration_depth(
                a.shape, a.pose, b.shape, b.pose))
    return worst


def object_inside_workspace(obj: ObjectInstance, ws: WorkspaceSpec,
                            tol: float = EPSILON_PENETRATION) -> bool:
    lo, hi = collision.aabb(obj.shape, obj.pose)
    return bool(np.all(lo >= np.asarray(ws.min) - tol)
                and np.all(hi <= np.asarray(ws.max) + tol))


def validate_scene(scene: Scene) -> list:
    """Return a list of invariant violations (empty when valid)."""
    problems = []
    ids = [o.id for o in scene.objects]
    if len(ids) != len(set(ids)):
        problems.append("duplicate object ids")
    for o in scene.objects:
        if not object_inside_workspace(o, scene.workspace):
            problems.append(f"object {o.id} outside workspace")
    pen = max_pairwise_penetration(scene)
    if pen > EPSILON_PENETRATION:
        problems.append(f"pairwise penetration {pen:.2e} exceeds tolerance")
    return problems


# --- interpenetration resolution -------------------------------------------

def _clamp_into_workspace(obj: ObjectInstance, ws: WorkspaceSpec):
    lo, hi = collision.aabb(obj.shape, obj.pose)
    shift = np.zeros(3)
    lo_w, hi_w = np.asarray(ws.min), np.asarray(ws.max)
    for k in range(3):
        if lo[k] < lo_w[k]:
            shift[k] = lo_w[k] - lo[k]
        elif hi[k] > hi_w[k]:
            shift[k] = hi_w[k] - hi[k]
    if np.any(shift != 0.0):
        obj.pose = obj.pose.translated(*shift)


def resolve_interpenetration(scene: Scene, max_iters: int = 500) -> Scene:
    """Translate overlapping pairs apart until penetration is tolerable.

    Deepest pair first, both objects moved half the minimum translation
    vector each; objects pushed outside the workspace are pulled back in
    before the next iteration.
    """
    out = scene.copy()
    objs = out.objects
    for _ in range(max_iters):
        worst = (0.0, None, None, None)
        for i in range(len(objs)):
            for j in range(i + 1, len(objs)):
                a, b = objs[i], objs[j]
                depth, axis = collision.separation(a.shape, a.pose,
                                                   b.shape, b.pose)
                if depth > worst[0]:
                    worst = (depth, a, b, axis)
        depth, a, b, axis = worst
        if depth <= EPSILON_PENETRATION:
            return out
        push = (depth / 2.0 + 1e-5) * axis
        a.pose = a.pose.translated(*(-push))
        b.pose = b.pose.translated(*push)
        _clamp_into_workspace(a, out.workspace)
        _clamp_into_workspace(b, out.workspace)
    raise ResolutionFailureError(
        f"interpenetration unresolved after {max_iters} iterations")


# --- generation -------------------------------------------------------------

def _random_pose(rng, center, radius, ws, shape) -> Pose6D:
    ang = rng.uniform(0.0, 2 * math.pi)
    rad = radius * math.sqrt(rng.uniform())
    x = center[0] + rad * math.cos(ang)
    y = center[1] + rad * math.sin(ang)
    half = shape.max_extent / 2.0
    x = float(np.clip(x, ws.min[0] + half, ws.max[0] - half))
    y = float(np.clip(y, ws.min[1] + half, ws.max[1] - half))
    z = ws.floor_z + rng.uniform(half, max(half * 1.001, radius))
    yaw = rng.uniform(-math.pi, math.pi)
    # Near-stable starting orientations; settling handles the rest.
    roll, pitch = rng.choice([0.0, math.pi / 2, -math.pi / 2, math.pi], 2)
    return Pose6D(x, y, z, roll, pitch, yaw)


def generate_scene(classes, workspace: WorkspaceSpec, seed: int,
                   camera_pose: Pose6D | None = None,
                   gripper_origin=None, max_attempts: int = 1000) -> Scene:
    """Spawn one clustered, collision-free, settled scene."""
    from .dynamics import settle_scene  # avoid an import cycle

    if not 1 <= len(classes) <= 6:
        raise ValueError("need between 1 and 6 object classes")
    rng = np.random.default_rng(seed)
    shapes = [shape_for_class(c) for c in classes]
    radius = 0.75 * sum(s.max_extent for s in shapes)
    camera = camera_pose or default_camera(workspace)
    gripper = tuple(gripper_origin) if gripper_origin is not None \
        else default_gripper_origin(workspace)

    margin = max(s.max_extent for s in shapes) / 2.0
    lo = np.asarray(workspace.min) + margin
    hi = np.asarray(workspace.max) - margin
    for _ in range(max_attempts):
        center = rng.uniform(lo[:2], hi[:2])
        objects = [
            ObjectInstance(i, classes[i], shapes[i],
                           _random_pose(rng, center, radius, workspace,
                                        shapes[i]))
            for i in range(len(classes))
        ]
        scene = Scene(workspace, objects, camera, gripper, rng_seed=int(seed))
        try:
            scene = resolve_interpenetration(scene)
            scene = settle_scene(scene)
        except (ResolutionFailureError, SettleFailureError):
            continue
        if not validate_scene(scene):
            return scene
    raise GenerationFailureError(
        f"no valid placement after {max_attempts} attempts (seed={seed})")


def make_variants(scene: Scene, count: int = 5, sigma_pos: float | None = None,
                  sigma_ang: float = 0.05, seed: int = 0) -> list:
    """Collision-free noisy pose variants of a scene.

    Zero-mean Gaussian noise on x, y, z and yaw per object, then projection
    back to a collision-free, settled configuration.
    """
    from .dynamics import settle_scene

    if count < 1:
        raise ValueError("count must be >= 1")
    if sigma_pos is None:
        sigma_pos = 0.01 * scene.workspace.diagonal
    rng = np.random.default_rng(seed)
    variants = []
    for _ in range(count):
        var = scene.copy()
        for obj in var.objects:
            dx, dy, dz = rng.normal(0.0, sigma_pos, 3) if sigma_pos > 0 \
                else (0.0, 0.0, 0.0)
            dyaw = rng.normal(0.0, sigma_ang) if sigma_ang > 0 else 0.0
            p = obj.pose
            obj.pose = Pose6D(p.x + dx, p.y + dy, p.z + dz,
                              p.roll, p.pitch, p.yaw + dyaw)
            _clamp_into_workspace(obj, var.workspace)
        if sigma_pos > 0 or sigma_ang > 0:
            var = resolve_interpenetration(var)
            var = settle_scene(var)
        variants.append(var)
    return variants


# --- serialization ----------------------------------------------------------

SCENE_SCHEMA_VERSION = 1


def scene_to_dict(scene: Scene) -> dict:
    return {
        "version": SCENE_SCHEMA_VERSION,
        "workspace": {
            "min": list(scene.workspace.min),
            "max": list(scene.workspace.max),
            "open_face": scene.workspace.open_face,
            "drop_edges": list(scene.workspace.drop_edges),
            "floor_z": scene.workspace.floor_z,
        },
        "camera_pose": scene.camera_pose.as_array().tolist(),
        "gripper_origin": list(scene.gripper_origin),
        "seed": scene.rng_seed,
        "objects": [
            {
                "id": o.id,
                "class": o.class_label,
                "shape": {"kind": o.shape.kind, "dims": list(o.shape.dims)},
                "pose": o.pose.as_array().tolist(),
            }
            for o in scene.objects
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    if data.get("version") != SCENE_SCHEMA_VERSION:
        raise ValueError(f"unsupported scene file version {data.get('version')}")
    ws = WorkspaceSpec(
        min=tuple(data["workspace"]["min"]),
        max=tuple(data["workspace"]["max"]),
        open_face=data["workspace"]["open_face"],
        drop_edges=tuple(data["workspace"]["drop_edges"]),
        floor_z=data["workspace"]["floor_z"],
    )
    objects = [
        ObjectInstance(
            id=o["id"],
            class_label=o["class"],
            shape=ShapeModel(o["shape"]["kind"], tuple(o["shape"]["dims"])),
            pose=Pose6D.from_array(o["pose"]),
        )
        for o in data["objects"]
    ]
    return Scene(ws, objects, Pose6D.from_array(data["camera_pose"]),
                 tuple(data["gripper_origin"]), rng_seed=data["seed"])


def save_scene(scene: Scene, path):
    with open(path, "w") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2)


def load_scene(path) -> Scene:
    with open(path) as fh:
        return scene_from_dict(json.load(fh))
