"""Diversity-aware reward adjustment.

Each completion's reward is divided by one plus its SMI with the rest of the
group, so redundant completions share their credit and isolated ones keep
theirs. With the Graph-Cut SMI and a cosine kernel the denominator is simply
the row sum of the similarity matrix::

    weights = 1 / (L.sum(axis=1) + epsilon)
    adjusted = rewards * weights

``epsilon`` defaults to 1e-6 (the value used by the reference batch code);
``epsilon=0`` gives the unregularized ``R / (1 + SMI)`` form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CompletionGroup, DraError, LengthMismatch, NonFiniteValue, SimilarityMatrix
from .smi import GRAPH_CUT, SmiKind, SmiVariant, cosine_similarity_matrix, graph_cut_row_sums, logdet_smi_all

DEFAULT_EPSILON = 1e-6


class NonPositiveDenominator(DraError):
    """1 + SMI + epsilon is not positive for some completion.

    Only reachable with strongly negative cosine similarities. The group is
    rejected instead of clamped because clamping would change the estimator.
    """


@dataclass(frozen=True)
class DraWeights:
    values: np.ndarray
    kind: SmiKind
    epsilon: float

    def __len__(self) -> int:
        return len(self.values)


def dra_weights(
    matrix: SimilarityMatrix,
    kind: SmiKind = GRAPH_CUT,
    epsilon: float = DEFAULT_EPSILON,
) -> DraWeights:
    """Per-completion multiplicative factors ``1 / (1 + SMI_i + epsilon)``."""
    if not epsilon >= 0.0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if kind.variant is SmiVariant.GRAPH_CUT:
        denom = graph_cut_row_sums(matrix) + epsilon
    else:
        denom = 1.0 + logdet_smi_all(matrix, kind.jitter) + epsilon
    bad = np.flatnonzero(~(denom > 0.0))
    if bad.size:
        raise NonPositiveDenominator(
            f"non-positive adjustment denominator {denom[bad[0]]:.6g} at completion {int(bad[0])}"
        )
    values = 1.0 / denom
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue("adjustment weights are not finite")
    values.setflags(write=False)
    return DraWeights(values=values, kind=kind, epsilon=float(epsilon))


def adjust_rewards(rewards: Sequence[float] | np.ndarray, weights: DraWeights) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    if r.shape != weights.values.shape:
        raise LengthMismatch(f"{r.shape[0] if r.ndim else 0} rewards for {len(weights)} weights")
    return r * weights.values


def adjust_group(
    group: CompletionGroup,
    kind: SmiKind = GRAPH_CUT,
    epsilon: float = DEFAULT_EPSILON,
) -> tuple[DraWeights, np.ndarray]:
    """Weights and adjusted rewards for a validated group."""
    weights = dra_weights(cosine_similarity_matrix(group.embeddings), kind, epsilon)
    return weights, adjust_rewards(group.rewards, weights)
