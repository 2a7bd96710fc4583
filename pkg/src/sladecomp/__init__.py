"""Per-domain SLA acceptance risk models and end-to-end SLA decomposition."""

from .config import DomainConfig, ExperimentConfig, load_config
from .decompose import DecomposeConfig, DecompositionResult, decompose
from .harness import ExperimentReport, run_experiment, run_repetition
from .preprocess import cse_filter, po_labels
from .serialize import load_model, save_model
from .slo import FeatureSpec, Ordering, SloVector, compare_partial, compose_e2e, precedes
from .synth import Dataset, DomainGroundTruth, generate_dataset, optimal_decomposition
from .train import MethodKind, RiskModel, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DecomposeConfig", "DecompositionResult", "DomainConfig", "DomainGroundTruth",
    "ExperimentConfig", "ExperimentReport", "FeatureSpec", "MethodKind", "Ordering", "RiskModel",
    "SloVector", "TrainConfig", "compare_partial", "compose_e2e", "cse_filter", "decompose",
    "generate_dataset", "load_config", "load_model", "optimal_decomposition", "po_labels",
    "precedes", "run_experiment", "run_repetition", "save_model", "train",
]
