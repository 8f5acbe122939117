"""Removal-order planning over a factorial search tree.

The root holds every object of the scene; each child removes one object and
inherits the simulated end state of its parent.  A depth-first traversal with
memoization, incumbent bounding and failure-flag cutoffs finds the removal
sequence whose summed disturbance cost is minimal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dynamics import SimConfig, simulate_extraction
from .errors import (DegenerateInputError, NoViableSequenceError,
                     SettleFailureError)
from .geometry import WeightVector, max_weighted_scv
from .scene import Scene

PRUNE_CAUSES = (
    "known_subtree",
    "cost_exceeds_best",
    "active_moved",
    "out_of_workspace",
    "plan_failure",
)

_POSE_QUANTUM = 1e-3
SIGNIFICANT_COST = 2.0


@dataclass
class SearchNode:
    level: int
    objects: tuple
    active: int | None = None
    entry_scene: Scene | None = None
    cost: float | None = None
    prune_cause: str | None = None
    children: list = field(default_factory=list)


@dataclass
class SearchTree:
    root: SearchNode
    levels: tuple

    @property
    def total_nodes(self) -> int:
        return sum(self.levels)


@dataclass
class PruneStats:
    total_nodes: int = 0
    simulated_nodes: int = 0
    pruned: dict = field(default_factory=lambda: {c: 0 for c in PRUNE_CAUSES})
    significant_movement_nodes: int = 0

    @property
    def pruned_total(self) -> int:
        return sum(self.pruned.values())


@dataclass
class PlanResult:
    ranked: list
    stats: PruneStats
    best: tuple

    @property
    def best_cost(self) -> float:
        return self.ranked[0][1]


def node_count_formula(n: int) -> int:
    """Total node count of the removal tree for n objects."""
    if n < 1:
        raise DegenerateInputError("need at least one object")
    return sum(math.factorial(n) // math.factorial(n - i) for i in range(n))


def build_search_tree(objects) -> SearchTree:
    """Materialize the full removal tree (no simulation).

    Level i holds n!/(n-i)! nodes of n-i objects each; leaves keep exactly
    one object.
    """
    ids = tuple(sorted(objects))
    n = len(ids)
    if n == 0:
        raise DegenerateInputError("cannot build a tree for an empty scene")
    if n > 8:
        raise DegenerateInputError("practical bound is 8 objects")
    root = SearchNode(level=0, objects=ids)
    levels = [0] * n
    stack = [root]
    while stack:
        node = stack.pop()
        levels[node.level] += 1
        if len(node.objects) <= 1:
            continue
        for active in node.objects:
            child = SearchNode(
                level=node.level + 1,
                objects=tuple(o for o in node.objects if o != active),
                active=active,
            )
            node.children.append(child)
            stack.append(child)
    return SearchTree(root=root, levels=tuple(levels))


def _quantized_config(scene: Scene, ids) -> tuple:
    key = []
    for oid in sorted(ids):
        pose = scene.object_by_id(oid).pose.as_array()
        key.append((oid,) + tuple(int(round(v / _POSE_QUANTUM)) for v in pose))
    return tuple(key)


def _node_cost(outcome, active_id: int, w: WeightVector) -> float:
    passives = {oid: st for oid, st in outcome.trajectories.items()
                if oid != active_id}
    return max_weighted_scv(passives, w)


def _flag_cause(outcome) -> str | None:
    if outcome.plan_failure:
        return "plan_failure"
    if outcome.active_moved:
        return "active_moved"
    if outcome.out_of_workspace:
        return "out_of_workspace"
    return None


class _Planner:
    def __init__(self, w, prune, use_memo, sim_config):
        self.w = w
        self.prune = prune
        self.use_memo = use_memo
        self.sim_config = sim_config or SimConfig()
        self.memo = {}
        self.stats = PruneStats()
        self.best_cost = math.inf
        self.completed = []

    def _simulate(self, scene, remaining, active):
        """Simulation result for removing `active`, memoized on the
        quantized configuration of the remaining objects."""
        key = (_quantized_config(scene, remaining), active)
        if self.use_memo and key in self.memo:
            return self.memo[key], True
        try:
            outcome = simulate_extraction(scene, active, self.sim_config)
        except SettleFailureError:
            # a non-converging settle means this branch cannot be
            # predicted; treat it like any other failed plan
            entry = (math.inf, "plan_failure", scene.without(active))
            if self.use_memo:
                self.memo[key] = entry
            return entry, False
        cause = _flag_cause(outcome)
        if cause is not None:
            cost = math.inf
        else:
            cost = _node_cost(outcome, active, self.w)
        entry = (cost, cause, outcome.final_scene)
        if self.use_memo:
            self.memo[key] = entry
        return entry, False

    def run(self, scene: Scene) -> PlanResult:
        ids = tuple(sorted(o.id for o in scene.objects))
        if not ids:
            raise DegenerateInputError("cannot plan an empty scene")
        self.stats.total_nodes = node_count_formula(len(ids))
        self.stats.simulated_nodes = 1  # root carries no action
        self._recurse(scene, ids, 0.0, ())
        if not self.completed:
            raise NoViableSequenceError(
                "every root branch was pruned", stats=self.stats)
        self.completed.sort(key=lambda e: (e[1], e[0]))
        ranked = [(seq, cost) for seq, cost in self.completed]
        return PlanResult(ranked=ranked, stats=self.stats, best=ranked[0][0])

    def _recurse(self, scene, remaining, prefix_cost, prefix_seq):
        if len(remaining) == 1:
            self._finish(scene, remaining[0], prefix_cost, prefix_seq)
            return
        for active in remaining:
            rest = tuple(o for o in remaining if o != active)
            subtree = node_count_formula(len(rest))
            if self.prune and prefix_cost >= self.best_cost:
                self.stats.pruned["cost_exceeds_best"] += subtree
                continue
            (cost, cause, final_scene), from_memo = self._simulate(
                scene, remaining, active)
            if cause is not None and self.prune:
                self.stats.pruned[cause] += subtree
                continue
            if from_memo:
                self.stats.pruned["known_subtree"] += 1
            else:
                self.stats.simulated_nodes += 1
                if math.isfinite(cost) and cost > SIGNIFICANT_COST:
                    self.stats.significant_movement_nodes += 1
            new_cost = prefix_cost + cost
            if self.prune and new_cost >= self.best_cost:
                self.stats.pruned["cost_exceeds_best"] += subtree - 1
                continue
            self._recurse(final_scene, rest, new_cost, prefix_seq + (active,))

    def _finish(self, scene, last_id, prefix_cost, prefix_seq):
        """Cost the forced removal of the final object, completing a path."""
        (cost, cause, _), _ = self._simulate(scene, (last_id,), last_id)
        total = prefix_cost + cost
        seq = prefix_seq + (last_id,)
        if cause is not None or not math.isfinite(total):
            return
        self.completed.append((seq, total))
        if total < self.best_cost:
            self.best_cost = total


def plan_min_cost_sequence(scene: Scene, w: WeightVector | None = None, *,
                           prune: bool = True, use_memo: bool = True,
                           sim_config: SimConfig | None = None) -> PlanResult:
    """Minimum-disturbance removal sequence for every object of a scene.

    Each node's cost is the worst weighted swept-volume ratio among the
    objects not being removed; path cost is the sum along the branch.  With
    ``prune=False`` and ``use_memo=False`` every permutation is evaluated
    (the brute-force reference mode).
    """
    w = w if w is not None else WeightVector.default()
    planner = _Planner(w, prune, use_memo, sim_config)
    return planner.run(scene)


def plan_report(result: PlanResult) -> dict:
    """JSON-ready summary of a planning run."""
    stats = result.stats
    total = max(stats.total_nodes, 1)
    return {
        "ranked": [{"sequence": list(seq), "cost": cost}
                   for seq, cost in result.ranked],
        "best": {"sequence": list(result.best), "cost": result.best_cost},
        "nodes": {
            "total": stats.total_nodes,
            "simulated": stats.simulated_nodes,
        },
        "pruned_percent": {
            cause: 100.0 * count / total
            for cause, count in stats.pruned.items()
        },
        "significant_movement_fraction": (
            stats.significant_movement_nodes / max(stats.simulated_nodes, 1)
        ),
    }
