"""Diversity-aware reward adjustment (DRA) for group-relative policy optimization."""

__version__ = "0.1.0"

from .adjust import DraWeights, NonPositiveDenominator, adjust_group, adjust_rewards, dra_weights
from .advantage import ClipConfig, clipped_surrogate, group_advantages, policy_gradient_step
from .analyzer import AnalysisRecord, analyze_dataset, pairwise_distances, spearman
from .core import AdvantageMode, AdvantageVector, CompletionGroup, SimilarityMatrix, validate_group
from .smi import SmiKind, cosine_similarity_matrix, graph_cut_row_sums, graph_cut_smi, logdet_smi

__all__ = [
    "AdvantageMode",
    "AdvantageVector",
    "AnalysisRecord",
    "ClipConfig",
    "CompletionGroup",
    "DraWeights",
    "NonPositiveDenominator",
    "SimilarityMatrix",
    "SmiKind",
    "adjust_group",
    "adjust_rewards",
    "analyze_dataset",
    "clipped_surrogate",
    "cosine_similarity_matrix",
    "dra_weights",
    "graph_cut_row_sums",
    "graph_cut_smi",
    "group_advantages",
    "logdet_smi",
    "pairwise_distances",
    "policy_gradient_step",
    "spearman",
    "validate_group",
]
