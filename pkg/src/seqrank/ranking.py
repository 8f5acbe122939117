"""Label ranking by pairwise comparison.

One logistic unit per unordered label pair predicts the probability that the
first label precedes the second; the reverse direction is the complement.
Votes are aggregated per label (soft, binary, or preference-weighted) and the
labels are sorted by score.  Also provides Kendall's tau and its
preference-weighted variant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError

_STD_FLOOR = 1e-9


@dataclass(frozen=True)
class PreferenceSample:
    scene_id: int
    variant: int
    sample_idx: int
    features: np.ndarray
    sequence: tuple

    def __post_init__(self):
        object.__setattr__(self, "features",
                           np.asarray(self.features, dtype=float))
        object.__setattr__(self, "sequence", tuple(self.sequence))


@dataclass(frozen=True)
class Hyperparams:
    l2: float = 1e-3
    learning_rate: float = 0.1
    max_iters: int = 500
    grad_tol: float = 1e-6


@dataclass
class RpcModel:
    labels: tuple
    pairs: dict                     # (i, j) i<j -> (weights, bias)
    voting: str = "soft"
    use_pref_weights: bool = False
    mean: np.ndarray = None
    std: np.ndarray = None
    pref_weights: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def n_labels(self) -> int:
        return len(self.labels)


def scene_labels(scene) -> tuple:
    """Ranking labels of a scene: class plus occurrence index over
    id-sorted instances; returns (labels, id -> label map)."""
    counts = {}
    mapping = {}
    for o in sorted(scene.objects, key=lambda x: x.id):
        k = counts.get(o.class_label, 0)
        counts[o.class_label] = k + 1
        mapping[o.id] = f"{o.class_label}#{k}"
    return tuple(sorted(mapping.values())), mapping


def preference_weights(samples) -> np.ndarray:
    """w[i, j] = fraction of samples ranking label i before label j."""
    samples = list(samples)
    if not samples:
        raise InsufficientDataError("no samples for preference weights")
    labels = tuple(sorted(samples[0].sequence))
    index = {lab: i for i, lab in enumerate(labels)}
    n = len(labels)
    w = np.zeros((n, n))
    for s in samples:
        if tuple(sorted(s.sequence)) != labels:
            raise ValueError("samples do not share a label set")
        order = [index[lab] for lab in s.sequence]
        for a in range(n):
            for b in range(a + 1, n):
                w[order[a], order[b]] += 1.0
    w /= len(samples)
    return w


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _fit_logistic(X, y, hp: Hyperparams):
    m, d = X.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(hp.max_iters):
        p = _sigmoid(X @ w + b)
        err = p - y
        gw = X.T @ err / m + 2.0 * hp.l2 * w
        gb = err.mean()
        if np.sqrt(np.dot(gw, gw) + gb * gb) < hp.grad_tol:
            break
        w -= hp.learning_rate * gw
        b -= hp.learning_rate * gb
    return w, b


def rpc_train(samples, voting: str = "soft", use_pref_weights: bool = False,
              hyperparams: Hyperparams | None = None) -> RpcModel:
    """Fit the pairwise ranker on (features, sequence) samples.

    Features are z-scored on the training set; each unordered pair gets a
    logistic unit with target "first label precedes second".  Preference
    weights are computed per scene and averaged.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise InsufficientDataError("need at least 2 training samples")
    hp = hyperparams or Hyperparams()
    labels = tuple(sorted(samples[0].sequence))
    index = {lab: i for i, lab in enumerate(labels)}
    dim = samples[0].features.shape[0]
    for s in samples:
        if tuple(sorted(s.sequence)) != labels:
            raise ValueError("samples do not share a label set")
        if s.features.shape[0] != dim:
            raise ValueError("feature length mismatch")

    X = np.stack([s.features for s in samples])
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), _STD_FLOOR)
    Z = (X - mean) / std

    positions = np.empty((len(samples), len(labels)), dtype=int)
    for si, s in enumerate(samples):
        for rank, lab in enumerate(s.sequence):
            positions[si, index[lab]] = rank

    pairs = {}
    n = len(labels)
    for i in range(n):
        for j in range(i + 1, n):
            y = (positions[:, i] < positions[:, j]).astype(float)
            pairs[(i, j)] = _fit_logistic(Z, y, hp)

    by_scene = {}
    for s in samples:
        by_scene.setdefault(s.scene_id, []).append(s)
    per_scene = [preference_weights(group) for group in by_scene.values()]
    pref = np.mean(per_scene, axis=0)

    return RpcModel(labels=labels, pairs=pairs, voting=voting,
                    use_pref_weights=use_pref_weights, mean=mean, std=std,
                    pref_weights=pref,
                    meta={"trained_scenes": len(by_scene)})


def pairwise_confidences(model: RpcModel, x) -> np.ndarray:
    """Full C matrix with C[j, i] = 1 - C[i, j]."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != model.mean.shape[0]:
        raise ValueError("feature length mismatch")
    z = (x - model.mean) / model.std
    n = model.n_labels
    C = np.zeros((n, n))
    for (i, j), (w, b) in model.pairs.items():
        c = float(_sigmoid(z @ w + b))
        C[i, j] = c
        C[j, i] = 1.0 - c
    return C


def rpc_predict(model: RpcModel, x):
    """Predicted sequence and per-label scores for a feature vector."""
    C = pairwise_confidences(model, x)
    n = model.n_labels
    scores = np.zeros(n)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            c = C[i, j]
            if model.use_pref_weights:
                scores[i] += model.pref_weights[i, j] * c if c > 0.5 else 0.0
            elif model.voting == "binary":
                scores[i] += 1.0 if c > 0.5 else 0.0
            else:
                scores[i] += c
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    return tuple(model.labels[i] for i in order), scores


# --- rank correlation ---------------------------------------------------------

def _discordant_pairs(pi, pi_ref):
    if set(pi) != set(pi_ref) or len(set(pi)) != len(pi):
        raise ValueError("rankings must permute the same label set")
    pos = {lab: k for k, lab in enumerate(pi)}
    ref = {lab: k for k, lab in enumerate(pi_ref)}
    labs = sorted(pi)
    out = []
    for a in range(len(labs)):
        for b in range(a + 1, len(labs)):
            la, lb = labs[a], labs[b]
            if (pos[la] - pos[lb]) * (ref[la] - ref[lb]) < 0:
                out.append((la, lb))
    return out


def kendall_tau(pi, pi_ref) -> float:
    """1 - 4*discordant/(n(n-1))."""
    n = len(pi)
    if n < 2:
        raise ValueError("need at least 2 labels")
    disc = len(_discordant_pairs(pi, pi_ref))
    return 1.0 - 4.0 * disc / (n * (n - 1))


def weighted_kendall_tau(pi, pi_ref, w, labels=None,
                         eq13_literal: bool = False) -> float:
    """Preference-weighted rank correlation.

    Each discordant pair contributes d = max(w_ij, w_ji) - 0.5, doubled by
    default so the value equals 1 at uninformative weights (0.5) and matches
    the unweighted statistic at fully informative weights (1.0); the literal
    un-doubled form is available via ``eq13_literal``.
    """
    n = len(pi)
    if n < 2:
        raise ValueError("need at least 2 labels")
    labels = tuple(labels) if labels is not None else tuple(sorted(pi))
    index = {lab: i for i, lab in enumerate(labels)}
    w = np.asarray(w, dtype=float)
    for i in range(n):
        for j in range(n):
            if i != j and abs(w[i, j] + w[j, i] - 1.0) > 1e-9:
                raise ValueError("weights must satisfy w_ij + w_ji = 1")
    factor = 1.0 if eq13_literal else 2.0
    lw = 0.0
    for la, lb in _discordant_pairs(pi, pi_ref):
        i, j = index[la], index[lb]
        lw += factor * (max(w[i, j], w[j, i]) - 0.5)
    return 1.0 - 4.0 * lw / (n * (n - 1))


# --- serialization -------------------------------------------------------------

def model_to_dict(model: RpcModel) -> dict:
    return {
        "version": 1,
        "labels": list(model.labels),
        "voting": model.voting,
        "use_pref_weights": model.use_pref_weights,
        "standardization": {
            "mean": model.mean.tolist(),
            "std": model.std.tolist(),
        },
        "pairs": [
            {"i": i, "j": j, "weights": w.tolist(), "bias": float(b)}
            for (i, j), (w, b) in sorted(model.pairs.items())
        ],
        "pref_weights": model.pref_weights.tolist(),
        "meta": dict(model.meta),
    }


def model_from_dict(data: dict) -> RpcModel:
    pairs = {
        (int(p["i"]), int(p["j"])): (np.asarray(p["weights"], dtype=float),
                                     float(p["bias"]))
        for p in data["pairs"]
    }
    return RpcModel(
        labels=tuple(data["labels"]),
        pairs=pairs,
        voting=data["voting"],
        use_pref_weights=bool(data["use_pref_weights"]),
        mean=np.asarray(data["standardization"]["mean"], dtype=float),
        std=np.asarray(data["standardization"]["std"], dtype=float),
        pref_weights=np.asarray(data["pref_weights"], dtype=float),
        meta=dict(data.get("meta", {})),
    )


def save_model(model: RpcModel, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> RpcModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
