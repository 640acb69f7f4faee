"""Counterfactual two-agent conflict analysis producing fractional collisions.

A logged conflict is replayed with the responder's post-reaction motion
replaced by every cell of a weighted reaction-parameter lattice; the crash
outcomes of all cells form a probability mass over severity levels.
"""

from __future__ import annotations

from .behavior import (
    BehaviorModel,
    ParameterCell,
    ReactionParams,
    default_behavior_model,
    enumerate_cells,
    load_behavior_model,
    nrm_response,
    single_cell_model,
    synthesize_response,
)
from .config import EngineConfig, load_config
from .conflict import (
    ConflictThresholds,
    RoleAssignment,
    assign_roles,
    classify_conflict,
    detect_por,
    resolve_roles,
)
from .enums import AgentClass, ConflictType, SeverityLevel
from .mechanics import CrashOutcome, CrashParams, assess_tracks, detect_collision, gt_outcome, solve_impulse
from .risk import (
    CorpusReport,
    FractionalCollisionResult,
    aggregate_corpus,
    aggregate_match_test,
    evaluate_scene,
    qa_scene,
    relative_risk,
)
from .scene import AgentTrack, Annotations, ConflictScene, parse_scene, resample_scene, serialize_scene, validate_scene
from .synth import SyntheticScenarioSpec, generate_corpus, generate_scene

__version__ = "0.1.0"

__all__ = [
    "AgentClass",
    "AgentTrack",
    "Annotations",
    "BehaviorModel",
    "ConflictScene",
    "ConflictThresholds",
    "ConflictType",
    "CorpusReport",
    "CrashOutcome",
    "CrashParams",
    "EngineConfig",
    "FractionalCollisionResult",
    "ParameterCell",
    "ReactionParams",
    "RoleAssignment",
    "SeverityLevel",
    "SyntheticScenarioSpec",
    "aggregate_corpus",
    "aggregate_match_test",
    "assess_tracks",
    "assign_roles",
    "classify_conflict",
    "default_behavior_model",
    "detect_collision",
    "detect_por",
    "enumerate_cells",
    "evaluate_scene",
    "generate_corpus",
    "generate_scene",
    "gt_outcome",
    "load_behavior_model",
    "load_config",
    "nrm_response",
    "parse_scene",
    "qa_scene",
    "relative_risk",
    "resample_scene",
    "resolve_roles",
    "serialize_scene",
    "single_cell_model",
    "solve_impulse",
    "synthesize_response",
    "validate_scene",
]
