"""Self-supervised strategy optimization.

Generates scenes, plans removal sequences under pose noise, and keeps
retraining the ranking model on the growing dataset.  A batch of new samples
is kept only when the median preference-weighted rank correlation on the
held-out scenes does not drop; the current model snapshot is always valid
(atomic replace), so the loop can be interrupted at any point.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (GenerationFailureError, InsufficientDataError,
                     NoViableSequenceError, SeqrankError)
from .features import VisibilityModel, assemble_feature_vector
from .geometry import WeightVector
from .planner import plan_min_cost_sequence
from .ranking import (PreferenceSample, kendall_tau, preference_weights,
                      rpc_predict, rpc_train, save_model, scene_labels,
                      weighted_kendall_tau)
from .scene import WorkspaceSpec, generate_scene, make_variants, workspace_preset


@dataclass
class Dataset:
    samples: list = field(default_factory=list)
    split: dict = field(default_factory=dict)   # scene_id -> "train"|"test"
    label_multiset: tuple = ()

    def assign_split(self, scene_id: int) -> str:
        train = sum(1 for v in self.split.values() if v == "train")
        test = sum(1 for v in self.split.values() if v == "test")
        side = "train" if train <= 2 * test else "test"
        self.split[scene_id] = side
        return side

    def subset(self, side: str) -> list:
        return [s for s in self.samples if self.split.get(s.scene_id) == side]

    def copy(self) -> "Dataset":
        return Dataset(list(self.samples), dict(self.split),
                       self.label_multiset)


@dataclass
class PipelineConfig:
    seed: int
    workspace: WorkspaceSpec | str = "container"
    classes: tuple = ("crate", "can", "cube", "ball")
    scenes: int = 10
    variants: int = 5
    samples_per_variant: int = 100
    weights: WeightVector = field(default_factory=WeightVector.default)
    voting: str = "soft"
    use_pref_weights: bool = False
    eq13_literal: bool = False
    workers: int = 1
    out_dir: str | None = None
    sigma_pos: float | None = None
    sigma_ang: float = 0.05
    vis_model: VisibilityModel | None = None
    vis_scenes_per_class: int = 50
    sample_source: object = None    # callable(scene_id, seed) -> samples
    max_skip_fraction: float = 0.5
    # scenes ingested together before the first keep-or-discard decision;
    # larger values stabilize the first test-split median
    bootstrap_scenes: int = 2
    # optional early stop once the accepted dataset holds this many scenes
    # (the generated-scene budget `scenes` still bounds total work)
    target_scenes: int | None = None

    def resolved_workspace(self) -> WorkspaceSpec:
        if isinstance(self.workspace, str):
            return workspace_preset(self.workspace)
        return self.workspace


@dataclass
class OptimizationState:
    config: PipelineConfig
    dataset: Dataset
    current_model: object = None
    history: list = field(default_factory=list)
    discarded_batches: int = 0
    failed_scenes: int = 0
    next_scene_id: int = 0
    pref_by_scene: dict = field(default_factory=dict)

    @property
    def scene_count(self) -> int:
        return len(self.dataset.split)

    def accepted_medians(self) -> list:
        return [h[2] for h in self.history if h[3] and not math.isnan(h[2])]


def collect_samples(scene, scene_id: int, variants: int,
                    samples_per_variant: int, w: WeightVector,
                    vis: VisibilityModel, seed: int,
                    sigma_pos: float | None = None, sigma_ang: float = 0.05,
                    max_skip_fraction: float = 0.5) -> list:
    """Planned removal sequences under re-drawn pose noise.

    Each scene variant contributes one shared feature vector and up to
    `samples_per_variant` best sequences, each planned on a freshly
    perturbed copy so simulator noise is sampled rather than trusted.
    """
    labels, id_map = scene_labels(scene)
    base_variants = make_variants(scene, variants, sigma_pos, sigma_ang,
                                  seed=seed)
    out = []
    skipped = 0
    total = variants * samples_per_variant
    for v, variant in enumerate(base_variants):
        x = assemble_feature_vector(variant, vis)
        for run in range(samples_per_variant):
            run_seed = seed + 7919 * (v + 1) + run + 1
            noisy = make_variants(variant, 1, sigma_pos, sigma_ang,
                                  seed=run_seed)[0]
            try:
                result = plan_min_cost_sequence(noisy, w)
            except (NoViableSequenceError, SeqrankError):
                skipped += 1
                continue
            seq = tuple(id_map[oid] for oid in result.best)
            out.append(PreferenceSample(scene_id, v, run, x, seq))
    if skipped > max_skip_fraction * total:
        raise GenerationFailureError(
            f"scene {scene_id} rejected: {skipped}/{total} planner failures")
    return out


def _default_producer(config: PipelineConfig, vis: VisibilityModel):
    ws = config.resolved_workspace()

    def produce(scene_id: int, seed: int):
        scene = generate_scene(list(config.classes), ws,
                               seed=seed + 9973 * (scene_id + 1))
        return collect_samples(
            scene, scene_id, config.variants, config.samples_per_variant,
            config.weights, vis, seed=seed + 104_729 * (scene_id + 1),
            sigma_pos=config.sigma_pos, sigma_ang=config.sigma_ang,
            max_skip_fraction=config.max_skip_fraction)

    return produce


def _canonical(samples) -> list:
    return sorted(samples, key=lambda s: (s.scene_id, s.variant,
                                          s.sample_idx))


def evaluate_model(model, test_samples, pref_by_scene,
                   eq13_literal: bool = False) -> dict:
    """tau / tau_w statistics of a model over held-out samples."""
    if not test_samples:
        raise InsufficientDataError("empty test split")
    taus, tau_ws = [], []
    for s in test_samples:
        predicted, _ = rpc_predict(model, s.features)
        taus.append(kendall_tau(predicted, s.sequence))
        w = pref_by_scene[s.scene_id]
        tau_ws.append(weighted_kendall_tau(predicted, s.sequence, w,
                                           labels=model.labels,
                                           eq13_literal=eq13_literal))
    t, tw = np.asarray(taus), np.asarray(tau_ws)
    return {
        "n": len(test_samples),
        "tau": {"mean": float(t.mean()), "median": float(np.median(t)),
                "q1": float(np.percentile(t, 25)),
                "q3": float(np.percentile(t, 75))},
        "tau_w": {"mean": float(tw.mean()), "median": float(np.median(tw)),
                  "q1": float(np.percentile(tw, 25)),
                  "q3": float(np.percentile(tw, 75))},
    }


def _snapshot(state: OptimizationState):
    if state.config.out_dir is None or state.current_model is None:
        return
    os.makedirs(state.config.out_dir, exist_ok=True)
    path = os.path.join(state.config.out_dir, "model.json")
    tmp = path + ".tmp"
    save_model(state.current_model, tmp)
    os.replace(tmp, path)   # readers never see a partial file


def _append_history(state: OptimizationState, median: float, accepted: bool):
    state.history.append((len(state.history), state.scene_count,
                          median, accepted))
    if state.config.out_dir is not None:
        os.makedirs(state.config.out_dir, exist_ok=True)
        path = os.path.join(state.config.out_dir, "history.csv")
        new = not os.path.exists(path)
        with open(path, "a", newline="") as fh:
            wtr = csv.writer(fh)
            if new:
                wtr.writerow(["iteration", "scenes", "tau_w_median",
                              "accepted"])
            it, scenes, med, acc = state.history[-1]
            wtr.writerow([it, scenes, med, int(acc)])


def ingest_batch(state: OptimizationState, batches) -> bool:
    """Tentatively extend the dataset with per-scene sample batches,
    retrain, and keep or discard by the held-out median tau_w."""
    config = state.config
    trial = state.dataset.copy()
    trial_pref = dict(state.pref_by_scene)
    for scene_id, samples in batches:
        if not samples:
            continue
        if not trial.label_multiset:
            trial.label_multiset = tuple(sorted(samples[0].sequence))
        trial.assign_split(scene_id)
        trial.samples.extend(samples)
        trial_pref[scene_id] = preference_weights(samples)
    train = _canonical(trial.subset("train"))
    test = _canonical(trial.subset("test"))
    if not train:
        return False
    model = rpc_train(train, voting=config.voting,
                      use_pref_weights=config.use_pref_weights)
    if test:
        report = evaluate_model(model, test, trial_pref,
                                eq13_literal=config.eq13_literal)
        median = report["tau_w"]["median"]
    else:
        median = math.nan
    previous = state.accepted_medians()
    if previous and not math.isnan(median) and median < previous[-1]:
        state.discarded_batches += 1
        _append_history(state, median, False)
        return False
    state.dataset = trial
    state.pref_by_scene = trial_pref
    state.current_model = model
    model.meta["test_tau_w"] = None if math.isnan(median) else median
    _append_history(state, median, True)
    _snapshot(state)
    return True


def optimization_step(state: OptimizationState, new_scene_count: int = 1,
                      producer=None) -> OptimizationState:
    """One generate / collect / retrain / keep-or-discard cycle."""
    config = state.config
    if producer is None:
        producer = _resolve_producer(config)
    batches = []
    for _ in range(new_scene_count):
        scene_id = state.next_scene_id
        state.next_scene_id += 1
        try:
            batches.append((scene_id, producer(scene_id, config.seed)))
        except GenerationFailureError:
            state.failed_scenes += 1
    if batches:
        ingest_batch(state, batches)
    return state


def _resolve_producer(config: PipelineConfig):
    if config.sample_source is not None:
        return config.sample_source
    vis = config.vis_model
    if vis is None:
        from .features import fit_visibility_model
        vis = fit_visibility_model(config.classes,
                                   config.resolved_workspace(),
                                   seed=config.seed,
                                   scenes_per_class=config.vis_scenes_per_class)
        config.vis_model = vis
    return _default_producer(config, vis)


def run_optimization_loop(config: PipelineConfig) -> OptimizationState:
    """Anytime optimization until the scene budget is spent.

    Producers may run concurrently but their batches are consumed strictly
    in scene-id order, so the accepted dataset does not depend on the
    worker count.
    """
    state = OptimizationState(config=config, dataset=Dataset())
    if config.scenes <= 0:
        return state
    producer = _resolve_producer(config)

    first = min(max(2, config.bootstrap_scenes), config.scenes)
    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
        futures = {
            sid: pool.submit(producer, sid, config.seed)
            for sid in range(config.scenes)
        }
        # The first ingest bundles enough scenes to populate both splits;
        # afterwards every scene is judged on its own.
        pending = []
        bootstrapped = False
        for sid in range(config.scenes):
            if config.target_scenes is not None and \
                    state.scene_count >= config.target_scenes:
                futures[sid].cancel()
                continue
            state.next_scene_id = sid + 1
            try:
                batch = (sid, futures[sid].result())
            except GenerationFailureError:
                state.failed_scenes += 1
                continue
            pending.append(batch)
            if bootstrapped or len(pending) >= first:
                ingest_batch(state, pending)
                pending = []
                bootstrapped = True
        if pending:
            ingest_batch(state, pending)
    if config.out_dir is not None:
        save_dataset(state.dataset,
                     os.path.join(config.out_dir, "dataset.jsonl"))
    return state


# --- dataset persistence -------------------------------------------------------

def save_dataset(dataset: Dataset, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        for s in _canonical(dataset.samples):
            fh.write(json.dumps({
                "scene_id": s.scene_id,
                "variant": s.variant,
                "sample_idx": s.sample_idx,
                "features": [float(v) for v in s.features],
                "sequence": list(s.sequence),
            }) + "\n")
    with open(_manifest_path(path), "w") as fh:
        json.dump({
            "label_multiset": list(dataset.label_multiset),
            "split": {str(k): v for k, v in dataset.split.items()},
        }, fh, indent=2)


def load_dataset(path) -> Dataset:
    samples = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            samples.append(PreferenceSample(
                d["scene_id"], d["variant"], d["sample_idx"],
                np.asarray(d["features"], dtype=float),
                tuple(d["sequence"])))
    with open(_manifest_path(path)) as fh:
        man = json.load(fh)
    return Dataset(samples=samples,
                   split={int(k): v for k, v in man["split"].items()},
                   label_multiset=tuple(man["label_multiset"]))


def _manifest_path(path) -> str:
    return str(path) + ".manifest.json"
