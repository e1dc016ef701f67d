"""Self-supervised learning workbench for noisy text-derived knowledge graphs."""

__version__ = "0.1.0"

from .graph import (
    KnowledgeGraph, Triple, TopologyStats, GraphFormatError,
    load_triples, save_triples, load_features, load_relation_features,
    save_features, load_roles, save_roles, load_gold, save_gold,
    topology_stats, neighbors, normalize_label, average_degree,
)
from .refine import (
    RefinementLog, Verdict, Validator, AcceptAllValidator, RejectAllValidator,
    HeuristicMockValidator, VerdictFileValidator, RemoteValidator,
    RemoteValidationError, CleaningAborted,
    derive_isa_without_of, derive_isa_with_of, derive_isa,
    enrich, clean, combined_refine, validate,
)
from .autodiff import Tensor, Tape, Adam, AdamState, NumericError, backward, grad_check, seeded_init
from .sampling import Block, SampledBatch, full_graph_batch, sample_neighbors
from .layers import Encoder, EncoderSpec, LayerSpec, MessagePassingLayer, encoder_spec
from .pretext import (
    AugmentSpec, DistMultDecoder, GNNDecoder, MLPDecoder, augment_view,
    contrastive_scoring, distmult_score, feature_reconstruction_loss,
    infonce_loss, relation_reconstruction_loss,
)
from .typing_eval import (
    MetricsReport, TypingResult, assign_types, baseline_typing,
    compute_metrics, transition_matrix,
)
from .estimator import GSSLTermTyper, default_batch_size
from .experiment import (
    GapReport, GridReport, ModelConfig, RunRecord, TrainSettings,
    dual_gap_report, run_experiment, run_grid,
)
from .synth import SyntheticPair, SyntheticSpec, generate, schema_violations

__all__ = [
    "KnowledgeGraph", "Triple", "TopologyStats", "GraphFormatError",
    "load_triples", "save_triples", "load_features", "load_relation_features",
    "save_features", "load_roles", "save_roles", "load_gold", "save_gold",
    "topology_stats", "neighbors", "normalize_label", "average_degree",
    "RefinementLog", "Verdict", "Validator", "AcceptAllValidator",
    "RejectAllValidator", "HeuristicMockValidator", "VerdictFileValidator",
    "RemoteValidator", "RemoteValidationError", "CleaningAborted",
    "derive_isa_without_of", "derive_isa_with_of", "derive_isa",
    "enrich", "clean", "combined_refine", "validate",
    "Tensor", "Tape", "Adam", "AdamState", "NumericError",
    "backward", "grad_check", "seeded_init",
    "Block", "SampledBatch", "full_graph_batch", "sample_neighbors",
    "Encoder", "EncoderSpec", "LayerSpec", "MessagePassingLayer", "encoder_spec",
    "AugmentSpec", "DistMultDecoder", "GNNDecoder", "MLPDecoder", "augment_view",
    "contrastive_scoring", "distmult_score", "feature_reconstruction_loss",
    "infonce_loss", "relation_reconstruction_loss",
    "MetricsReport", "TypingResult", "assign_types", "baseline_typing",
    "compute_metrics", "transition_matrix",
    "GSSLTermTyper", "default_batch_size",
    "GapReport", "GridReport", "ModelConfig", "RunRecord", "TrainSettings",
    "dual_gap_report", "run_experiment", "run_grid",
    "SyntheticPair", "SyntheticSpec", "generate", "schema_violations",
    "__version__",
]
