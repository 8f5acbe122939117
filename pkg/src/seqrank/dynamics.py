"""Deterministic quasi-static surrogate for a physics engine.

Extraction sweeps, pushes, gravity settling with rolling, contact detection
and visible-point-cloud synthesis.  Every pose change during a simulated
extraction is recorded per object, which is all the downstream cost function
needs.  No forces or impulses are integrated; events are stepped in a fixed,
deterministic order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from shapely.geometry import MultiPoint
from shapely.ops import unary_union

from . import collision
from .errors import SettleFailureError
from .geometry import Pose6D, ShapeModel, Trajectory, rotation_matrix
from .scene import EPSILON_PENETRATION, Scene

_VTOL = 1e-3          # vertical contact tolerance
_CONTACT_BAND = 1e-3  # sample band used to build contact patches
_SLACK = 1e-5


@dataclass
class ContactRecord:
    pair: tuple
    point: np.ndarray
    normal: np.ndarray
    force: float = 0.0


@dataclass
class SimulationOutcome:
    trajectories: dict
    contacts: list
    active_moved: bool
    out_of_workspace: set
    plan_failure: bool
    final_scene: Scene


@dataclass(frozen=True)
class SimConfig:
    gripper_dims: tuple = (0.08, 0.08, 0.08)
    reach_radius_factor: float = 1.2
    reach_center_offset: tuple = (0.0, 0.0, 0.0)
    step_fraction: float = 0.02
    active_move_fraction: float = 0.5
    max_settle_passes: int = 100


def _bottom(obj) -> float:
    return float(collision.aabb(obj.shape, obj.pose)[0][2])


def _top(obj) -> float:
    return float(collision.aabb(obj.shape, obj.pose)[1][2])


def _contact_patch_polygon(obj):
    """xy hull of the samples within the contact band above the object base."""
    pts = collision.world_samples(obj.shape, obj.pose)
    bottom = pts[:, 2].min()
    low = pts[pts[:, 2] <= bottom + _CONTACT_BAND]
    return MultiPoint(low[:, :2]).convex_hull.buffer(1e-6)


def _is_rollable(obj) -> bool:
    if obj.shape.kind == "sphere":
        return True
    if obj.shape.kind == "cylinder":
        axis = rotation_matrix(obj.pose.roll, obj.pose.pitch, obj.pose.yaw)[:, 2]
        return abs(axis[2]) < 0.5
    return False


class _Recorder:
    """Collects per-object pose changes into trajectories."""

    def __init__(self, scene: Scene):
        self.paths = {o.id: [o.pose] for o in scene.objects}

    def set_pose(self, obj, pose: Pose6D):
        if pose != obj.pose:
            obj.pose = pose
            self.paths[obj.id].append(pose)


def _crossed_drop_edge(obj, ws):
    center = collision.footprint_center(obj.shape, obj.pose)
    for face in ws.drop_edges:
        axis, coord, sign = ws.face_plane(face)
        if sign * (center[axis] - coord) > 0:
            return face
    return None


def _eject(obj, ws, face, rec):
    """Place an object just outside a drop edge, resting at floor level."""
    axis, coord, sign = ws.face_plane(face)
    lo, hi = collision.aabb(obj.shape, obj.pose)
    half = (hi[axis] - lo[axis]) / 2.0
    pos = list(obj.pose.position)
    pos[axis] = coord + sign * (half + 0.05 * ws.size[axis])
    dz = ws.floor_z - lo[2]
    new = Pose6D(pos[0], pos[1], obj.pose.z + dz,
                 obj.pose.roll, obj.pose.pitch, obj.pose.yaw)
    rec.set_pose(obj, new)


def _clamp_walls(obj, ws, rec, exempt_faces=()):
    """Keep an object inside the workspace walls (drop edges stay open)."""
    lo, hi = collision.aabb(obj.shape, obj.pose)
    shift = np.zeros(3)
    for face in _ALL_FACES:
        if face in ws.drop_edges or face in exempt_faces:
            continue
        axis, coord, sign = ws.face_plane(face)
        over = sign * (hi[axis] if sign > 0 else lo[axis]) - sign * coord
        if over > 0:
            shift[axis] = -sign * over
    if lo[2] < ws.floor_z:
        shift[2] = ws.floor_z - lo[2]
    if np.any(shift != 0.0):
        rec.set_pose(obj, obj.pose.translated(*shift))


_ALL_FACES = ("+x", "-x", "+y", "-y")


def _push_apart(scene, rec, fixed_ids=(), exempt_faces=(), max_iters=60):
    """Resolve object-object penetrations by translating movable objects."""
    ws = scene.workspace
    for _ in range(max_iters):
        worst = (EPSILON_PENETRATION, None, None, None)
        objs = scene.objects
        for i in range(len(objs)):
            for j in range(i + 1, len(objs)):
                a, b = objs[i], objs[j]
                if a.id in fixed_ids and b.id in fixed_ids:
                    continue
                lo_a, hi_a = collision.aabb(a.shape, a.pose)
                lo_b, hi_b = collision.aabb(b.shape, b.pose)
                if np.any(lo_a > hi_b) or np.any(lo_b > hi_a):
                    continue
                depth, axis = collision.separation(a.shape, a.pose,
                                                   b.shape, b.pose)
                if depth > worst[0]:
                    worst = (depth, a, b, axis)
        depth, a, b, axis = worst
        if a is None:
            return
        push = (depth + _SLACK) * axis
        if a.id in fixed_ids:
            rec.set_pose(b, b.pose.translated(*push))
            _clamp_walls(b, ws, rec, exempt_faces)
        elif b.id in fixed_ids:
            rec.set_pose(a, a.pose.translated(*(-push)))
            _clamp_walls(a, ws, rec, exempt_faces)
        else:
            rec.set_pose(a, a.pose.translated(*(-push / 2.0)))
            rec.set_pose(b, b.pose.translated(*(push / 2.0)))
            _clamp_walls(a, ws, rec, exempt_faces)
            _clamp_walls(b, ws, rec, exempt_faces)


def _settle(scene, rec, out_ids, config, exclude_ids=(), roll_state=None):
    """Drop unsupported objects, slide under-supported ones, let round
    shapes keep rolling until blocked, over a drop edge, or capped."""
    ws = scene.workspace
    roll_state = roll_state if roll_state is not None else {}
    roll_cap = 0.5 * ws.width
    for _ in range(config.max_settle_passes):
        moved = False
        order = sorted(
            (o for o in scene.objects
             if o.id not in out_ids and o.id not in exclude_ids),
            key=lambda o: (_bottom(o), o.id),
        )
        for obj in order:
            if _step_object(obj, scene, rec, out_ids, roll_state, roll_cap,
                            exclude_ids):
                moved = True
        if not moved:
            return
    raise SettleFailureError("settling did not converge")


def _step_object(obj, scene, rec, out_ids, roll_state, roll_cap, exclude_ids):
    ws = scene.workspace
    bottom = _bottom(obj)
    on_floor = bottom <= ws.floor_z + _VTOL
    contact_fp = _contact_patch_polygon(obj)
    supporters = []
    for u in scene.objects:
        if u.id == obj.id or u.id in out_ids:
            continue
        if abs(_top(u) - bottom) <= _VTOL:
            inter = contact_fp.intersection(
                collision.footprint(u.shape, u.pose))
            if not inter.is_empty and inter.area > 1e-12:
                supporters.append((u, inter))

    moved = False
    if not on_floor and not supporters:
        # Free fall onto the highest surface under the contact zone.
        target = ws.floor_z
        for u in scene.objects:
            if u.id == obj.id or u.id in out_ids:
                continue
            top = _top(u)
            if top <= bottom + _VTOL:
                inter = contact_fp.intersection(
                    collision.footprint(u.shape, u.pose))
                if not inter.is_empty and inter.area > 1e-12:
                    target = max(target, top)
        drop = bottom - target
        if drop > 1e-9:
            rec.set_pose(obj, obj.pose.translated(dz=-drop))
            _push_apart(scene, rec,
                        fixed_ids=[o.id for o in scene.objects
                                   if o.id != obj.id],
                        exempt_faces=())
            moved = True
    elif supporters and not on_floor:
        patch = unary_union([i for _, i in supporters])
        area = contact_fp.area
        coverage = patch.area / area if area > 1e-12 else 1.0
        if coverage < 0.3:
            c = np.array([obj.pose.x, obj.pose.y])
            pc = np.array([patch.centroid.x, patch.centroid.y])
            d = c - pc
            norm = np.linalg.norm(d)
            if norm > 1e-9:
                moved = _slide(obj, d / norm, scene, rec, roll_state,
                               roll_cap, out_ids, exclude_ids)

    # Momentum: round shapes keep rolling once set in motion.
    if obj.id in roll_state and obj.id not in out_ids:
        direction, travelled = roll_state[obj.id]
        if travelled < roll_cap:
            if _slide(obj, direction, scene, rec, roll_state, roll_cap,
                      out_ids, exclude_ids):
                moved = True
            else:
                roll_state.pop(obj.id, None)
        else:
            roll_state.pop(obj.id, None)

    if obj.id not in out_ids:
        face = _crossed_drop_edge(obj, ws)
        if face is not None:
            _eject(obj, ws, face, rec)
            out_ids.add(obj.id)
            roll_state.pop(obj.id, None)
            moved = True
    return moved


def _slide(obj, direction, scene, rec, roll_state, roll_cap, out_ids,
           exclude_ids):
    """One lateral step; returns False when blocked."""
    ws = scene.workspace
    step = 0.25 * obj.shape.bounding_radius
    candidate = obj.pose.translated(direction[0] * step, direction[1] * step)
    for u in scene.objects:
        if u.id == obj.id or u.id in out_ids:
            continue
        if collision.penetration_depth(obj.shape, candidate,
                                       u.shape, u.pose) > EPSILON_PENETRATION:
            return False
    # Walls block sliding unless the face is a drop edge.
    lo, hi = collision.aabb(obj.shape, candidate)
    for face in _ALL_FACES:
        if face in ws.drop_edges:
            continue
        axis, coord, sign = ws.face_plane(face)
        if sign * ((hi if sign > 0 else lo)[axis] - coord) > 0:
            return False
    rec.set_pose(obj, candidate)
    if _is_rollable(obj):
        prev = roll_state.get(obj.id, (direction, 0.0))
        roll_state[obj.id] = (np.asarray(direction, float), prev[1] + step)
    return True


def settle_scene(scene: Scene, config: SimConfig | None = None) -> Scene:
    """Project a collision-free scene to a statically stable one."""
    config = config or SimConfig()
    out = scene.copy()
    rec = _Recorder(out)
    out_ids = set()
    _settle(out, rec, out_ids, config)
    return out


# --- contacts ---------------------------------------------------------------

def detect_contacts(scene: Scene) -> list:
    """Contact records for every touching pair of a settled scene.

    Point: centroid of the sample band around the separating plane.
    Normal: oriented from the lower toward the upper object.  Force: the
    upper object's volume (uniform density 1) split equally over its
    near-vertical supports; lateral contacts carry zero force.
    """
    records = []
    uppers = []
    objs = scene.objects
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            a, b = objs[i], objs[j]
            lo_a, hi_a = collision.aabb(a.shape, a.pose)
            lo_b, hi_b = collision.aabb(b.shape, b.pose)
            if np.any(lo_a > hi_b + _VTOL) or np.any(lo_b > hi_a + _VTOL):
                continue
            depth, axis = collision.separation(a.shape, a.pose,
                                               b.shape, b.pose)
            if depth < -_VTOL:
                continue
            pa = collision.world_samples(a.shape, a.pose)
            pb = collision.world_samples(b.shape, b.pose)
            proj_a, proj_b = pa @ axis, pb @ axis
            plane = (proj_a.max() + proj_b.min()) / 2.0
            band = max(2 * _VTOL, depth + _VTOL)
            near = np.concatenate([
                pa[proj_a >= plane - band],
                pb[proj_b <= plane + band],
            ])
            point = near.mean(axis=0)
            if b.pose.z >= a.pose.z:
                normal, upper = axis, b
            else:
                normal, upper = -axis, a
            records.append(ContactRecord((a.id, b.id), point, normal))
            uppers.append(upper.id)
    # Each object's weight (volume, density 1) splits equally over its
    # near-vertical supports; lateral contacts carry zero force.
    by_upper = {}
    for r, uid in zip(records, uppers):
        if abs(r.normal[2]) > 0.5:
            by_upper.setdefault(uid, []).append(r)
    for uid, recs in by_upper.items():
        share = scene.object_by_id(uid).shape.volume / len(recs)
        for r in recs:
            r.force = share
    return records


# --- extraction --------------------------------------------------------------

_GRIPPER_ID = -1


def simulate_extraction(scene: Scene, active_id: int,
                        config: SimConfig | None = None) -> SimulationOutcome:
    """Mentally extract one object and record what everything else does.

    Phases: reachability test, straight-line gripper approach with pushes,
    grasp, straight-line retraction of the grasped object with pushes, and a
    final settling pass.  Flags report events that invalidate the action;
    they are data, not errors.
    """
    config = config or SimConfig()
    work = scene.copy()
    ws = work.workspace
    contacts = detect_contacts(work)
    rec = _Recorder(work)
    active = work.object_by_id(active_id)
    start_pose = active.pose
    out_ids: set = set()
    roll_state: dict = {}

    def outcome(active_moved=False, plan_failure=False):
        final = work.without({active_id} | out_ids)
        return SimulationOutcome(
            trajectories={oid: (scene.object_by_id(oid).shape,
                                Trajectory(list(poses)))
                          for oid, poses in rec.paths.items()},
            contacts=contacts,
            active_moved=active_moved,
            out_of_workspace=set(out_ids),
            plan_failure=plan_failure,
            final_scene=final,
        )

    origin = np.asarray(work.gripper_origin, dtype=float)
    reach_center = origin + np.asarray(config.reach_center_offset)
    grasp = active.pose.position
    if np.linalg.norm(grasp - reach_center) > \
            config.reach_radius_factor * ws.diagonal:
        return outcome(plan_failure=True)

    gripper = ShapeModel("box", config.gripper_dims)
    line = grasp - origin
    length = float(np.linalg.norm(line))
    if length < 1e-9:
        return outcome(plan_failure=True)
    direction = line / length
    step = config.step_fraction * ws.depth
    move_limit = config.active_move_fraction * active.shape.bounding_radius

    # Approach: sweep the gripper box toward the grasp point.
    t = 0.0
    grasped = False
    while t < length:
        t = min(t + step, length)
        gpose = Pose6D(*(origin + direction * t))
        d_active, _ = collision.separation(gripper, gpose,
                                           active.shape, active.pose)
        if d_active >= -EPSILON_PENETRATION:
            grasped = True
            break
        pushed = False
        for obj in work.objects:
            if obj.id == active_id or obj.id in out_ids:
                continue
            lo_g, hi_g = collision.aabb(gripper, gpose)
            lo_o, hi_o = collision.aabb(obj.shape, obj.pose)
            if np.any(lo_g > hi_o) or np.any(lo_o > hi_g):
                continue
            depth, axis = collision.separation(gripper, gpose,
                                               obj.shape, obj.pose)
            if depth > EPSILON_PENETRATION:
                rec.set_pose(obj, obj.pose.translated(
                    *((depth + _SLACK) * axis)))
                _clamp_walls(obj, ws, rec)
                pushed = True
        if pushed:
            _push_apart(work, rec, fixed_ids=(), exempt_faces=())
            _settle(work, rec, out_ids, config, roll_state=roll_state)
            if np.linalg.norm(active.pose.position - start_pose.position) \
                    > move_limit:
                return outcome(active_moved=True)

    if not grasped:
        # Swept the full line without touching the target.
        return outcome(plan_failure=True)

    # Extraction: retrace the line outward with the object held rigidly.
    exit_budget = length + 2.0 * active.shape.bounding_radius
    travelled = 0.0
    while travelled < exit_budget:
        travelled += step
        rec.set_pose(active, active.pose.translated(*(-direction * step)))
        pushed = False
        for obj in work.objects:
            if obj.id == active_id or obj.id in out_ids:
                continue
            lo_a, hi_a = collision.aabb(active.shape, active.pose)
            lo_o, hi_o = collision.aabb(obj.shape, obj.pose)
            if np.any(lo_a > hi_o) or np.any(lo_o > hi_a):
                continue
            depth, axis = collision.separation(active.shape, active.pose,
                                               obj.shape, obj.pose)
            if depth > EPSILON_PENETRATION:
                rec.set_pose(obj, obj.pose.translated(
                    *((depth + _SLACK) * axis)))
                _clamp_walls(obj, ws, rec)
                pushed = True
        if pushed:
            _push_apart(work, rec, fixed_ids={active_id}, exempt_faces=())
        _settle(work, rec, out_ids, config, exclude_ids={active_id},
                roll_state=roll_state)
        lo, hi = collision.aabb(active.shape, active.pose)
        if np.any(hi < np.asarray(ws.min)) or np.any(lo > np.asarray(ws.max)):
            break

    # Release outside; the remaining scene settles once more.
    work.objects = [o for o in work.objects if o.id != active_id]
    _settle(work, rec, out_ids, config, roll_state=roll_state)
    return outcome()


# --- visibility --------------------------------------------------------------

def compute_visible_cloud(scene: Scene, target_id: int) -> np.ndarray:
    """Surface samples of the target visible from the scene camera.

    A sample survives when no other object, and no nearer part of the
    target's own surface, intersects the camera-to-sample segment.
    """
    target = scene.object_by_id(target_id)
    cam = scene.camera_pose.position
    samples = collision.world_samples(target.shape, target.pose)
    others = [o for o in scene.objects if o.id != target_id]
    visible = []
    for s in samples:
        d = s - cam
        dist = float(np.linalg.norm(d))
        if dist < 1e-12:
            continue
        u = d / dist
        tol = 1e-7 * dist + 1e-12
        t_self = collision.ray_shape_intersection(target.shape, target.pose,
                                                  cam, u)
        if t_self < dist - max(tol, 1e-9):
            continue
        blocked = False
        for o in others:
            t_o = collision.ray_shape_intersection(o.shape, o.pose, cam, u)
            if t_o < dist - max(tol, 1e-9):
                blocked = True
                break
        if not blocked:
            visible.append(s)
    return np.asarray(visible).reshape(-1, 3)
