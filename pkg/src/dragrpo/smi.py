"""Cosine kernel and submodular mutual information between one completion and the rest of its group.

Two instantiations are provided:

* Graph-Cut: ``sum_{j != i} L[i, j]``. All G values come from a single row-sum
  over the matrix, O(G^2) per group.
* LogDet: ``logdet L[i, i] + logdet L[-i, -i] - logdet L``. Each value needs its
  own Cholesky factorization of a (G-1) x (G-1) minor, plus one shared
  factorization of the full matrix.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor

from .core import DimensionMismatch, DraError, SimilarityMatrix, _stack_embeddings

DEFAULT_JITTER = 1e-8
FALLBACK_JITTER = 1e-6
MAX_JITTER = 1e-3


class NotPositiveDefinite(DraError):
    """Cholesky failed even after raising the diagonal jitter.

    Usually means the group contains duplicate or near-duplicate embeddings
    and the caller passed ``jitter=0``, or the matrix is not a valid kernel.
    """


class SmiVariant(str, enum.Enum):
    GRAPH_CUT = "graphcut"
    LOG_DET = "logdet"


@dataclass(frozen=True)
class SmiKind:
    variant: SmiVariant = SmiVariant.GRAPH_CUT
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        object.__setattr__(self, "variant", SmiVariant(self.variant))
        if not 0.0 <= self.jitter <= MAX_JITTER:
            raise ValueError(f"jitter must lie in [0, {MAX_JITTER}], got {self.jitter}")

    @classmethod
    def parse(cls, name: str, jitter: float = DEFAULT_JITTER) -> "SmiKind":
        key = name.strip().lower().replace("-", "").replace("_", "")
        return cls(SmiVariant(key), jitter)


GRAPH_CUT = SmiKind(SmiVariant.GRAPH_CUT)
LOG_DET = SmiKind(SmiVariant.LOG_DET)


def cosine_similarity_matrix(embeddings: Sequence[Sequence[float]] | np.ndarray) -> SimilarityMatrix:
    """Gram matrix of unit-norm embeddings.

    The diagonal is pinned to exactly 1 and the result symmetrized, so
    rounding in the product never leaks into the SMI values.
    """
    emb = _stack_embeddings(embeddings)
    if emb.ndim != 2:
        raise DimensionMismatch(f"embeddings must form a (G, d) array, got shape {emb.shape}")
    m = emb @ emb.T
    m = 0.5 * (m + m.T)
    np.fill_diagonal(m, 1.0)
    np.clip(m, -1.0, 1.0, out=m)
    return SimilarityMatrix(m)


def graph_cut_smi(matrix: SimilarityMatrix, i: int) -> float:
    """Total similarity of item ``i`` to every other item (correctly rounded sum)."""
    i = matrix.check_index(i)
    row = matrix.entries[i]
    return math.fsum(row[j] for j in range(matrix.size) if j != i)


def graph_cut_row_sums(matrix: SimilarityMatrix) -> np.ndarray:
    """Row sums of the similarity matrix, i.e. ``1 + graph_cut_smi`` for every row."""
    return matrix.entries.sum(axis=1)


# A squared Cholesky pivot below this marks a near-singular kernel (duplicate
# completions); float64 rounding then costs ~eps/pivot in the log-determinant.
_REFINE_PIVOT = 1e-3
_EXTENDED = np.finfo(np.longdouble).eps < np.finfo(np.float64).eps


def _cholesky_logdet_extended(a: np.ndarray) -> float:
    """Column Cholesky in extended precision (80-bit on x86), for near-singular inputs."""
    n = a.shape[0]
    low = np.array(a, dtype=np.longdouble)
    total = np.longdouble(0)
    for k in range(n):
        pivot = low[k, k] - np.dot(low[k, :k], low[k, :k])
        if not pivot > 0:
            raise LinAlgError("matrix is not positive definite")
        root = np.sqrt(pivot)
        low[k, k] = root
        low[k + 1 :, k] = (low[k + 1 :, k] - low[k + 1 :, :k] @ low[k, :k]) / root
        total += 2 * np.log(root)
    return float(total)


def _cholesky_logdet(a: np.ndarray) -> float:
    c, _ = cho_factor(a, lower=True, check_finite=False)
    diag = np.diag(c)
    if _EXTENDED and float(diag.min()) ** 2 < _REFINE_PIVOT:
        return _cholesky_logdet_extended(a)
    return 2.0 * float(np.sum(np.log(diag)))


def _jitter_schedule(jitter: float) -> tuple[float, ...]:
    # jitter=0 asks for the exact kernel, so there is no silent retry
    if 0.0 < jitter < FALLBACK_JITTER:
        return (jitter, FALLBACK_JITTER)
    return (jitter,)


def _logdet_smi_with(m: np.ndarray, indices: Sequence[int], jitter: float) -> np.ndarray:
    g = m.shape[0]
    lj = m + jitter * np.eye(g)
    full = _cholesky_logdet(lj)
    out = np.empty(len(indices))
    keep = np.ones(g, dtype=bool)
    for k, i in enumerate(indices):
        keep[i] = False
        minor = lj[np.ix_(keep, keep)]
        keep[i] = True
        rest = _cholesky_logdet(minor) if g > 1 else 0.0
        out[k] = np.log(lj[i, i]) + rest - full
    return out


def _logdet_smi_many(matrix: SimilarityMatrix, indices: Sequence[int], jitter: float) -> np.ndarray:
    if not 0.0 <= jitter <= MAX_JITTER:
        raise ValueError(f"jitter must lie in [0, {MAX_JITTER}], got {jitter}")
    last = None
    for jit in _jitter_schedule(jitter):
        try:
            return _logdet_smi_with(matrix.entries, indices, jit)
        except LinAlgError as exc:
            last = exc
    raise NotPositiveDefinite(
        f"similarity matrix is not positive definite even with jitter {_jitter_schedule(jitter)[-1]:g}"
    ) from last


def logdet_smi(matrix: SimilarityMatrix, i: int, jitter: float = DEFAULT_JITTER) -> float:
    """LogDet SMI of item ``i`` against the rest of the group.

    ``jitter * I`` is added to the kernel before factorizing; when the first
    attempt fails and ``jitter`` is positive but below 1e-6 the factorization
    is retried once with 1e-6 (``jitter=0`` factorizes the exact kernel, no retry). The self term uses the jittered diagonal ``1 + jitter``,
    which makes the result exactly the SMI of the regularized kernel and hence
    non-negative up to rounding.
    """
    i = matrix.check_index(i)
    return float(_logdet_smi_many(matrix, [i], jitter)[0])


def logdet_smi_all(matrix: SimilarityMatrix, jitter: float = DEFAULT_JITTER) -> np.ndarray:
    """``logdet_smi`` for every item, sharing the full-matrix factorization."""
    return _logdet_smi_many(matrix, range(matrix.size), jitter)


def smi_values(matrix: SimilarityMatrix, kind: SmiKind = GRAPH_CUT) -> np.ndarray:
    if kind.variant is SmiVariant.GRAPH_CUT:
        return np.array([graph_cut_smi(matrix, i) for i in range(matrix.size)])
    return logdet_smi_all(matrix, kind.jitter)
