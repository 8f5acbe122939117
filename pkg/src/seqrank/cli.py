"""Command-line entry points.

Every generating subcommand requires an explicit --seed so runs are pure
functions of their inputs.  Exit codes: 0 success, 1 usage error, 2 domain
error.  Set SEQRANK_LOG to a logging level name for diagnostics.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import features as feat
from . import pipeline as pipe
from . import planner, ranking, scene
from .errors import SeqrankError
from .geometry import WeightVector

log = logging.getLogger("seqrank")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here is 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_weights(text: str) -> WeightVector:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 6:
        raise ValueError("expected 6 comma-separated weights")
    return WeightVector.from_array(parts)


def _parse_classes(text: str) -> list:
    out = [c.strip() for c in text.split(",") if c.strip()]
    if not out:
        raise ValueError("expected at least one class")
    return out


def build_parser() -> _Parser:
    p = _Parser(prog="seqrank",
                description="Damage-minimizing removal-sequence planning "
                            "and strategy learning.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text, seed_required=False):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--seed", type=int, required=seed_required)
        return sp

    sp = add("gen-scenes", "generate random scene files", seed_required=True)
    sp.add_argument("--workspace", choices=("container", "shelf"),
                    default="container")
    sp.add_argument("--classes", type=_parse_classes, required=True)
    sp.add_argument("--scenes", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = add("plan", "plan the minimum-cost removal sequence for a scene")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--weights", type=_parse_weights,
                    default=WeightVector.default())
    sp.add_argument("--no-prune", action="store_true")
    sp.add_argument("--out")

    sp = add("features", "extract the feature vector of a scene")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--vis", required=True,
                    help="visibility model JSON file")
    sp.add_argument("--out")

    sp = add("fit-vis", "fit the per-class visibility mixture model",
             seed_required=True)
    sp.add_argument("--workspace", choices=("container", "shelf"),
                    default="container")
    sp.add_argument("--classes", type=_parse_classes, required=True)
    sp.add_argument("--samples", type=int, default=1000,
                    help="placements per class")
    sp.add_argument("--out", required=True)

    sp = add("train", "train the pairwise ranking model on a dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--voting", choices=("soft", "binary"), default="soft")
    sp.add_argument("--pref-weights", action="store_true")
    sp.add_argument("--out", required=True)

    sp = add("eval", "evaluate a model on a dataset's test split")
    sp.add_argument("--model", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--eq13-literal", action="store_true")
    sp.add_argument("--out")

    sp = add("optimize", "run the self-supervised optimization loop",
             seed_required=True)
    sp.add_argument("--workspace", choices=("container", "shelf"),
                    default="container")
    sp.add_argument("--classes", type=_parse_classes, required=True)
    sp.add_argument("--scenes", type=int, default=10)
    sp.add_argument("--variants", type=int, default=5)
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--weights", type=_parse_weights,
                    default=WeightVector.default())
    sp.add_argument("--voting", choices=("soft", "binary"), default="soft")
    sp.add_argument("--pref-weights", action="store_true")
    sp.add_argument("--eq13-literal", action="store_true")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--vis-samples", type=int, default=50)
    sp.add_argument("--out", required=True)

    sp = add("stats", "print search-tree size statistics")
    sp.add_argument("--tree-size", type=int, required=True)

    return p


def _emit(payload: dict, out_path):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _cmd_gen_scenes(args) -> int:
    ws = scene.workspace_preset(args.workspace)
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.scenes):
        s = scene.generate_scene(args.classes, ws, seed=args.seed + i)
        path = os.path.join(args.out, f"scene_{i:04d}.json")
        scene.save_scene(s, path)
        log.info("wrote %s", path)
    return 0


def _cmd_plan(args) -> int:
    s = scene.load_scene(args.scene)
    result = planner.plan_min_cost_sequence(
        s, args.weights, prune=not args.no_prune,
        use_memo=not args.no_prune)
    _emit(planner.plan_report(result), args.out)
    return 0


def _cmd_features(args) -> int:
    s = scene.load_scene(args.scene)
    vis = feat.VisibilityModel.load(args.vis)
    vec = feat.assemble_feature_vector(s, vis)
    _emit({"length": int(vec.shape[0]), "values": vec.tolist()}, args.out)
    return 0


def _cmd_fit_vis(args) -> int:
    ws = scene.workspace_preset(args.workspace)
    model = feat.fit_visibility_model(args.classes, ws, seed=args.seed,
                                      scenes_per_class=args.samples)
    model.save(args.out)
    log.info("wrote %s", args.out)
    return 0


def _cmd_train(args) -> int:
    dataset = pipe.load_dataset(args.dataset)
    train = dataset.subset("train") or dataset.samples
    model = ranking.rpc_train(train, voting=args.voting,
                              use_pref_weights=args.pref_weights)
    ranking.save_model(model, args.out)
    log.info("wrote %s", args.out)
    return 0


def _cmd_eval(args) -> int:
    model = ranking.load_model(args.model)
    dataset = pipe.load_dataset(args.dataset)
    test = dataset.subset("test") or dataset.samples
    by_scene = {}
    for s in test:
        by_scene.setdefault(s.scene_id, []).append(s)
    pref = {sid: ranking.preference_weights(group)
            for sid, group in by_scene.items()}
    report = pipe.evaluate_model(model, test, pref,
                                 eq13_literal=args.eq13_literal)
    _emit(report, args.out)
    return 0


def _cmd_optimize(args) -> int:
    config = pipe.PipelineConfig(
        seed=args.seed,
        workspace=args.workspace,
        classes=tuple(args.classes),
        scenes=args.scenes,
        variants=args.variants,
        samples_per_variant=args.samples,
        weights=args.weights,
        voting=args.voting,
        use_pref_weights=args.pref_weights,
        eq13_literal=args.eq13_literal,
        workers=args.workers,
        vis_scenes_per_class=args.vis_samples,
        out_dir=args.out,
    )
    state = pipe.run_optimization_loop(config)
    print(json.dumps({
        "scenes": state.scene_count,
        "samples": len(state.dataset.samples),
        "discarded_batches": state.discarded_batches,
        "failed_scenes": state.failed_scenes,
        "final_tau_w_median": (state.accepted_medians() or [None])[-1],
    }, indent=2))
    return 0


def _cmd_stats(args) -> int:
    n = args.tree_size
    tree = planner.build_search_tree(range(n))
    print(f"objects: {n}")
    print(f"total nodes: {planner.node_count_formula(n)}")
    print("level sizes: " + ",".join(str(v) for v in tree.levels))
    return 0


_COMMANDS = {
    "gen-scenes": _cmd_gen_scenes,
    "plan": _cmd_plan,
    "features": _cmd_features,
    "fit-vis": _cmd_fit_vis,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "optimize": _cmd_optimize,
    "stats": _cmd_stats,
}


def main(argv=None) -> int:
    level = os.environ.get("SEQRANK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except SeqrankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
