"""
AffordLab - learning multi-object effects for compound building and planning
"""

from .errors import AffordLabError

from .geometry import (
    Aabb, ObjectKind, ObjectSpec, Orientation, Pose, Ray,
    bounding_box, catalog_by_name, catalog_nonlinear, catalog_standard, ray_intersect,
)
from .renderer import DepthImage, NormalizedImage, normalize, render_object
from .simulator import (
    CompoundState, Placement, PlacementOnCollapsed, SettleKind, SimulationMode,
    check_collapse, place, run_episode,
)
from .effects import EffectTriple, compute_e1, compute_e2, compute_e3, effect_row
from .dataset import (
    CSVDataSource, EmptyDataset, InteractionRecord, JSONLinesDataSource, LabelDrift,
    generate_dataset, read_records, split_by_episode, summarize_sizes, write_records,
)
from .neuralnet import EmptyGraph, NonFiniteValue, ShapeMismatch, SnapshotError
from .encoder import FeatureBank, LatentFeature, ModelNotLoaded, ObjectEncoder, train_autoencoder
from .mogan import (
    BadQueryIndex, CompoundGraph, EmptyCompound, MoganModel, TrainingConfig,
    edge_creation, predict_candidate, prepare_samples, train_mogan,
)
from .baseline import BaselineModel, CompoundTooLarge, train_baseline
from .evaluation import error_table, size_errors, success_table
from .planner import (
    LearnedPredictor, NoFeasiblePlan, OraclePredictor, Plan, Task,
    execute_and_verify, expand, score, search,
)
from .config import ConfigError, RunConfig, resolve_config
from .reporters import ConsoleReporter, CSVReporter, JSONReporter, MultiReporter, SVGChartReporter
from .metric_assertions import MetricAssertionGroup, run_metric_assertions

__all__ = [
    "AffordLabError",
    # geometry and rendering
    "Aabb", "ObjectKind", "ObjectSpec", "Orientation", "Pose", "Ray",
    "bounding_box", "catalog_by_name", "catalog_nonlinear", "catalog_standard", "ray_intersect",
    "DepthImage", "NormalizedImage", "normalize", "render_object",
    # simulation and effects
    "CompoundState", "Placement", "PlacementOnCollapsed", "SettleKind", "SimulationMode",
    "check_collapse", "place", "run_episode",
    "EffectTriple", "compute_e1", "compute_e2", "compute_e3", "effect_row",
    # data
    "CSVDataSource", "EmptyDataset", "InteractionRecord", "JSONLinesDataSource", "LabelDrift",
    "generate_dataset", "read_records", "split_by_episode", "summarize_sizes", "write_records",
    # models
    "EmptyGraph", "NonFiniteValue", "ShapeMismatch", "SnapshotError",
    "FeatureBank", "LatentFeature", "ModelNotLoaded", "ObjectEncoder", "train_autoencoder",
    "BadQueryIndex", "CompoundGraph", "EmptyCompound", "MoganModel", "TrainingConfig",
    "edge_creation", "predict_candidate", "prepare_samples", "train_mogan",
    "BaselineModel", "CompoundTooLarge", "train_baseline",
    "error_table", "size_errors", "success_table",
    # planning
    "LearnedPredictor", "NoFeasiblePlan", "OraclePredictor", "Plan", "Task",
    "execute_and_verify", "expand", "score", "search",
    # run plumbing
    "ConfigError", "RunConfig", "resolve_config",
    "ConsoleReporter", "CSVReporter", "JSONReporter", "MultiReporter", "SVGChartReporter",
    "MetricAssertionGroup", "run_metric_assertions",
]

__version__ = "0.1.0"
