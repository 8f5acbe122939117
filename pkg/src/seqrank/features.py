"""Scene feature extraction.

Produces the fixed-layout vector consumed by the ranking model: eight blocks
per object (23 numbers) and four blocks per object pair (17 numbers), so a
scene of n objects yields 23n + 17(n(n-1)/2) features.  Includes the
visibility scoring pipeline (ray-cast ratio plus a per-class 1-D Gaussian
mixture over that ratio) and a lightweight attention-vector-sum model for
spatial preposition scores.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import collision
from .dynamics import compute_visible_cloud, detect_contacts
from .errors import (DegenerateInputError, InsufficientDataError,
                     UnknownClassError)
from .geometry import convex_hull_volume
from .scene import Scene, WorkspaceSpec, generate_scene

PREPOSITIONS = ("in_front", "behind", "above", "below", "left", "right")

OBJECT_FEATURES = 23
PAIR_FEATURES = 17


def feature_length(n: int) -> int:
    return OBJECT_FEATURES * n + PAIR_FEATURES * (n * (n - 1) // 2)


# --- visibility -------------------------------------------------------------

def visibility_ratio(scene: Scene, target: int) -> float:
    """Hull-volume fraction of the target's surface visible to the camera."""
    obj = scene.object_by_id(target)
    full = collision.world_samples(obj.shape, obj.pose)
    visible = compute_visible_cloud(scene, target)
    if visible.shape[0] < 4:
        return 0.0
    try:
        v_vis = convex_hull_volume(visible)
    except DegenerateInputError:
        return 0.0
    v_full = convex_hull_volume(full)
    if v_full <= 0.0:
        return 0.0
    return min(1.0, v_vis / v_full)


@dataclass(frozen=True)
class GmmEntry:
    """1-D Gaussian mixture over visibility ratios for one object class."""
    k: int
    weights: tuple
    means: tuple
    variances: tuple
    n_samples: int


_VAR_FLOOR = 1e-6


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator):
    means = [x[rng.integers(len(x))]]
    for _ in range(k - 1):
        d2 = np.min((x[:, None] - np.array(means)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            means.append(x[rng.integers(len(x))])
        else:
            means.append(x[rng.choice(len(x), p=d2 / total)])
    return np.array(means, dtype=float)


def _log_gauss(x, mean, var):
    return -0.5 * (np.log(2 * np.pi * var) + (x - mean) ** 2 / var)


def _em_fit(x: np.ndarray, k: int, rng: np.random.Generator,
            iters: int = 100, ll_trace: list | None = None):
    n = len(x)
    means = _kmeanspp_init(x, k, rng)
    variances = np.full(k, max(x.var(), _VAR_FLOOR))
    weights = np.full(k, 1.0 / k)
    ll = -np.inf
    for _ in range(iters):
        log_p = (_log_gauss(x[:, None], means[None, :], variances[None, :])
                 + np.log(weights)[None, :])
        m = log_p.max(axis=1, keepdims=True)
        log_norm = m[:, 0] + np.log(np.exp(log_p - m).sum(axis=1))
        new_ll = float(log_norm.sum())
        if ll_trace is not None:
            ll_trace.append(new_ll)
        resp = np.exp(log_p - log_norm[:, None])
        nk = resp.sum(axis=0) + 1e-12
        weights = nk / n
        means = (resp * x[:, None]).sum(axis=0) / nk
        variances = np.maximum(
            (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / nk,
            _VAR_FLOOR)
        if new_ll - ll < 1e-10 and np.isfinite(ll):
            ll = new_ll
            break
        ll = new_ll
    return weights, means, variances, ll


def fit_visibility_gmm(samples, k_max: int = 5, seed: int = 0) -> GmmEntry:
    """Mixture over visibility ratios with the component count chosen by
    the information criterion -2*lnL + (3k-1)*ln N."""
    x = np.asarray(list(samples), dtype=float)
    if len(x) < 20:
        raise InsufficientDataError(
            f"need >= 20 samples, got {len(x)}")
    rng = np.random.default_rng(seed)
    best = None
    for k in range(1, k_max + 1):
        run = max((_em_fit(x, k, rng) for _ in range(5)),
                  key=lambda r: r[3])
        weights, means, variances, ll = run
        bic = -2.0 * ll + (3 * k - 1) * math.log(len(x))
        if best is None or bic < best[0]:
            best = (bic, k, weights, means, variances)
    _, k, weights, means, variances = best
    order = np.argsort(means)
    return GmmEntry(
        k=k,
        weights=tuple(float(v) for v in weights[order]),
        means=tuple(float(v) for v in means[order]),
        variances=tuple(float(v) for v in variances[order]),
        n_samples=len(x),
    )


def visibility_density(entry: GmmEntry, r: float) -> float:
    dens = 0.0
    for w, mu, var in zip(entry.weights, entry.means, entry.variances):
        dens += w * math.exp(-0.5 * (r - mu) ** 2 / var) \
            / math.sqrt(2 * math.pi * var)
    return dens


class VisibilityModel:
    """Per-class visibility mixtures, immutable once fitted."""

    def __init__(self, entries: dict):
        self.entries = dict(entries)

    def entry(self, class_label: str) -> GmmEntry:
        try:
            return self.entries[class_label]
        except KeyError:
            raise UnknownClassError(
                f"no visibility entry for class {class_label!r}") from None

    def density(self, class_label: str, r: float) -> float:
        return visibility_density(self.entry(class_label), r)

    def to_dict(self) -> dict:
        return {
            label: {
                "k": e.k,
                "weights": list(e.weights),
                "means": list(e.means),
                "variances": list(e.variances),
                "n_samples": e.n_samples,
            }
            for label, e in self.entries.items()
        }

    @staticmethod
    def from_dict(data: dict) -> "VisibilityModel":
        return VisibilityModel({
            label: GmmEntry(
                k=int(d["k"]),
                weights=tuple(d["weights"]),
                means=tuple(d["means"]),
                variances=tuple(d["variances"]),
                n_samples=int(d["n_samples"]),
            )
            for label, d in data.items()
        })

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @staticmethod
    def load(path) -> "VisibilityModel":
        with open(path) as fh:
            return VisibilityModel.from_dict(json.load(fh))


def fit_visibility_model(classes, workspace: WorkspaceSpec, seed: int,
                         scenes_per_class: int = 1000,
                         k_max: int = 5) -> VisibilityModel:
    """Fit the per-class mixtures from single-object random placements."""
    entries = {}
    for ci, label in enumerate(sorted(set(classes))):
        ratios = []
        for i in range(scenes_per_class):
            scene = generate_scene([label], workspace,
                                   seed=seed + 100_000 * ci + i)
            ratios.append(visibility_ratio(scene, scene.objects[0].id))
        entries[label] = fit_visibility_gmm(ratios, k_max=k_max, seed=seed)
    return VisibilityModel(entries)


# --- spatial prepositions ----------------------------------------------------

def robot_frame(workspace: WorkspaceSpec) -> dict:
    """Canonical direction per preposition, seen from the robot side.

    Forward points through the open face into the workspace; right is
    forward x up.  "in front" means between the robot and the landmark.
    """
    axis, _, sign = workspace.face_plane(workspace.open_face)
    forward = np.zeros(3)
    forward[axis] = -sign
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    return {
        "in_front": -forward,
        "behind": forward,
        "above": up,
        "below": -up,
        "left": -right,
        "right": right,
    }


def avs_score(scene: Scene, trajector: int, landmark: int,
              preposition: str) -> float:
    """Acceptability in [0, 1] of "trajector <preposition> landmark".

    Attention-weighted sum of directions from the landmark surface to the
    trajector centroid, mapped through (1 + cos angle-to-canonical-axis)/2.
    """
    if trajector == landmark:
        raise ValueError("trajector and landmark must differ")
    axes = robot_frame(scene.workspace)
    axis = axes[preposition]
    t_obj = scene.object_by_id(trajector)
    l_obj = scene.object_by_id(landmark)
    c = t_obj.pose.position
    if np.linalg.norm(c - l_obj.pose.position) < 1e-9:
        return 0.5
    pts = collision.world_samples(l_obj.shape, l_obj.pose)
    d_to_c = np.linalg.norm(pts - c, axis=1)
    nearest = pts[np.argmin(d_to_c)]
    scale = max(l_obj.shape.bounding_radius, 1e-9)
    attention = np.exp(-np.linalg.norm(pts - nearest, axis=1) / scale)
    vecs = c - pts
    norms = np.linalg.norm(vecs, axis=1)
    keep = norms > 1e-12
    v = (attention[keep, None] * vecs[keep] / norms[keep, None]).sum(axis=0)
    nv = np.linalg.norm(v)
    if nv < 1e-12:
        return 0.5
    return float((1.0 + np.dot(v / nv, axis)) / 2.0)


# --- assembly -----------------------------------------------------------------

def _free_space(scene: Scene, oid: int) -> float:
    obj = scene.object_by_id(oid)
    pts = collision.world_samples(obj.shape, obj.pose)
    others = [o for o in scene.objects if o.id != oid]
    if not others:
        return scene.workspace.diagonal
    tree = cKDTree(pts)
    best = math.inf
    for o in others:
        d, _ = tree.query(collision.world_samples(o.shape, o.pose))
        best = min(best, float(d.min()))
    return best


def assemble_feature_vector(scene: Scene, vis: VisibilityModel) -> np.ndarray:
    """Canonical feature vector of a scene.

    Objects are visited in ascending id; per object: pose (6), distance
    vectors to the workspace floor, to the closed back face and to the
    gripper origin (3 each), visibility density (1), axis-aligned and
    oriented box sizes (3 each), free space (1).  Pairs follow in
    lexicographic id order; per pair (i, j): centroid difference (3),
    Euclidean distance (1), strongest contact as point/normal/force (7,
    zero-filled when not touching), preposition scores of j relative to i
    (6).
    """
    ws = scene.workspace
    objs = sorted(scene.objects, key=lambda o: o.id)
    for o in objs:
        vis.entry(o.class_label)  # fail fast on unknown classes

    back_axis, back_coord, back_sign = ws.face_plane({
        "+x": "-x", "-x": "+x", "+y": "-y", "-y": "+y",
    }[ws.open_face])
    gripper = np.asarray(scene.gripper_origin, dtype=float)

    parts = []
    for o in objs:
        c = o.pose.position
        to_bottom = np.array([0.0, 0.0, ws.floor_z - c[2]])
        to_back = np.zeros(3)
        to_back[back_axis] = back_coord - c[back_axis]
        lo, hi = collision.aabb(o.shape, o.pose)
        parts.append(o.pose.as_array())
        parts.append(to_bottom)
        parts.append(to_back)
        parts.append(gripper - c)
        r = visibility_ratio(scene, o.id)
        parts.append([vis.density(o.class_label, r)])
        parts.append(hi - lo)
        parts.append(o.shape.extents)
        parts.append([_free_space(scene, o.id)])

    contacts = detect_contacts(scene)
    strongest = {}
    for rec in contacts:
        key = tuple(sorted(rec.pair))
        if key not in strongest or rec.force > strongest[key].force:
            strongest[key] = rec

    for a in range(len(objs)):
        for b in range(a + 1, len(objs)):
            oi, oj = objs[a], objs[b]
            ci, cj = oi.pose.position, oj.pose.position
            parts.append(cj - ci)
            parts.append([float(np.linalg.norm(cj - ci))])
            rec = strongest.get((min(oi.id, oj.id), max(oi.id, oj.id)))
            if rec is None:
                parts.append(np.zeros(7))
            else:
                parts.append(np.concatenate(
                    [rec.point, rec.normal, [rec.force]]))
            parts.append([avs_score(scene, oj.id, oi.id, p)
                          for p in PREPOSITIONS])

    vec = np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])
    assert vec.shape[0] == feature_length(len(objs))
    return vec
