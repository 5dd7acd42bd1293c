"""Joint Case->Case / Case->Law citation prediction on enriched heterogeneous graphs."""

from .enrichment import EnrichmentSpec, MetaFeature, enrich
from .graph import CITES_CASE, CITES_LAW, HeteroGraph, Relation, build_graph, induce_node_subset
from .data import Homophily, generate_synthetic, generate_synthetic_graph, load_dataset, save_dataset
from .experiment import ExperimentConfig, run_experiment, summarize
from .metrics import MetricReport, aggregate, auc_roc, average_precision
from .model import EncoderConfig, ModelParams, encode, init_params, joint_loss
from .report import emit_report
from .splits import SplitConfig, build_fold, make_test_split
from .training import TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "CITES_CASE",
    "CITES_LAW",
    "EncoderConfig",
    "EnrichmentSpec",
    "ExperimentConfig",
    "HeteroGraph",
    "Homophily",
    "MetaFeature",
    "MetricReport",
    "ModelParams",
    "Relation",
    "SplitConfig",
    "TrainConfig",
    "aggregate",
    "auc_roc",
    "average_precision",
    "build_fold",
    "build_graph",
    "emit_report",
    "encode",
    "enrich",
    "evaluate",
    "generate_synthetic",
    "generate_synthetic_graph",
    "induce_node_subset",
    "init_params",
    "joint_loss",
    "load_dataset",
    "make_test_split",
    "run_experiment",
    "save_dataset",
    "summarize",
    "train",
]
