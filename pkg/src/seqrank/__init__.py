"""Damage-minimizing manipulation-sequence planning and strategy learning.

Plans the removal order of clustered objects by mentally simulating each
extraction and costing unintended motion with weighted swept convex volumes,
then learns ranking strategies from the planner's own output so future
sequences come from a fast classifier instead of a search.
"""

from .errors import (DegenerateInputError, DegenerateShapeError,
                     GenerationFailureError, InsufficientDataError,
                     NoViableSequenceError, ResolutionFailureError,
                     SeqrankError, SettleFailureError, UnknownClassError)
from .features import (VisibilityModel, assemble_feature_vector, avs_score,
                       fit_visibility_gmm, fit_visibility_model,
                       visibility_density, visibility_ratio)
from .geometry import (Pose6D, ShapeModel, Trajectory, WeightVector,
                       convex_hull_volume, max_weighted_scv,
                       swept_convex_volume)
from .pipeline import (Dataset, OptimizationState, PipelineConfig,
                       collect_samples, evaluate_model, load_dataset,
                       optimization_step, run_optimization_loop,
                       save_dataset)
from .planner import (PlanResult, PruneStats, SearchNode, SearchTree,
                      build_search_tree, node_count_formula, plan_report,
                      plan_min_cost_sequence)
from .ranking import (PreferenceSample, RpcModel, kendall_tau, load_model,
                      preference_weights, rpc_predict, rpc_train, save_model,
                      scene_labels, weighted_kendall_tau)
from .scene import (ObjectInstance, Scene, WorkspaceSpec, generate_scene,
                    load_scene, make_variants, save_scene, workspace_preset)
from .dynamics import (ContactRecord, SimConfig, SimulationOutcome,
                       compute_visible_cloud, detect_contacts,
                       settle_scene, simulate_extraction)

__version__ = "0.1.0"
