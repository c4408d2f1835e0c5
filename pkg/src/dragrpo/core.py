"""Domain types shared by the rest of the package.

Everything here is immutable after construction. ``validate_group`` is the
single entry point that turns raw (possibly unnormalized) completion data into
a group the other modules can trust.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

ZERO_NORM = 1e-12
# Vectors whose norm is already this close to 1 are left untouched so that
# validation is an exact fixed point (idempotence and lossless round-trips).
_UNIT_SLACK = 1e-12
_MATRIX_TOL = 1e-9


class DraError(ValueError):
    """Base class for all domain errors raised by this package."""


class GroupTooSmall(DraError):
    pass


class ZeroNormEmbedding(DraError):
    pass


class NonFiniteValue(DraError):
    pass


class DimensionMismatch(DraError):
    pass


class LengthMismatch(DraError):
    pass


class InvalidMatrix(DraError):
    pass


class IndexOutOfRange(DraError, IndexError):
    pass


class AdvantageMode(str, enum.Enum):
    GRPO = "GRPO"
    DRGRPO = "DRGRPO"


def normalize_embedding(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Return ``values`` scaled to unit Euclidean norm.

    Raises ``NonFiniteValue`` for NaN/Inf entries and ``ZeroNormEmbedding``
    when the norm is below 1e-12.
    """
    vec = np.array(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise DimensionMismatch(f"embedding must be a non-empty vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise NonFiniteValue("embedding contains NaN or Inf")
    norm = float(np.linalg.norm(vec))
    if norm < ZERO_NORM:
        raise ZeroNormEmbedding(f"embedding norm {norm:.3g} is below {ZERO_NORM}")
    if abs(norm - 1.0) <= _UNIT_SLACK:
        return vec
    return vec / norm


@dataclass(frozen=True)
class CompletionGroup:
    """The G completions sampled for one prompt.

    ``embeddings`` is a (G, d) array. Construct through ``validate_group`` (or
    ``CompletionGroup.build``) to get unit-norm rows and checked invariants.
    """

    prompt_id: str
    completion_ids: tuple[str, ...]
    rewards: np.ndarray
    embeddings: np.ndarray
    texts: Optional[tuple[str, ...]] = None

    @property
    def size(self) -> int:
        return len(self.completion_ids)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    @classmethod
    def build(
        cls,
        prompt_id: str,
        completion_ids: Sequence[str],
        rewards: Sequence[float] | np.ndarray,
        embeddings: Sequence[Sequence[float]] | np.ndarray,
        texts: Optional[Sequence[Optional[str]]] = None,
    ) -> "CompletionGroup":
        """Assemble a group from plain Python data and validate it."""
        raw = cls(
            prompt_id=str(prompt_id),
            completion_ids=tuple(str(c) for c in completion_ids),
            rewards=np.asarray(rewards, dtype=np.float64),
            embeddings=_stack_embeddings(embeddings),
            texts=None if texts is None else tuple("" if t is None else str(t) for t in texts),
        )
        return validate_group(raw)


def _stack_embeddings(embeddings) -> np.ndarray:
    if isinstance(embeddings, np.ndarray):
        arr = np.array(embeddings, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionMismatch(f"embeddings must be 2-D, got shape {arr.shape}")
        return arr
    rows = [np.asarray(e, dtype=np.float64) for e in embeddings]
    dims = {r.shape for r in rows}
    if len(dims) > 1:
        raise DimensionMismatch(f"embeddings have unequal dimensions: {sorted(d[0] if d else 0 for d in dims)}")
    if not rows:
        return np.zeros((0, 0))
    return np.vstack(rows)


def validate_group(group: CompletionGroup) -> CompletionGroup:
    """Check group invariants and return a copy with unit-norm embeddings.

    Validating an already-valid group returns an equal group (the operation is
    idempotent), and renormalization never changes pairwise cosines.
    """
    g = len(group.completion_ids)
    if g < 2:
        raise GroupTooSmall(f"group {group.prompt_id!r} has {g} completion(s); at least 2 are required")
    rewards = np.array(group.rewards, dtype=np.float64).reshape(-1)
    emb = _stack_embeddings(group.embeddings)
    if rewards.shape[0] != g:
        raise LengthMismatch(f"group {group.prompt_id!r}: {rewards.shape[0]} rewards for {g} completions")
    if emb.ndim != 2 or emb.shape[0] != g:
        raise LengthMismatch(f"group {group.prompt_id!r}: embeddings shape {emb.shape} for {g} completions")
    if emb.shape[1] < 1:
        raise DimensionMismatch(f"group {group.prompt_id!r}: embeddings have dimension 0")
    if group.texts is not None and len(group.texts) != g:
        raise LengthMismatch(f"group {group.prompt_id!r}: {len(group.texts)} texts for {g} completions")
    if not np.all(np.isfinite(rewards)):
        raise NonFiniteValue(f"group {group.prompt_id!r}: non-finite reward")
    rows = [normalize_embedding(row) for row in emb]
    emb = np.vstack(rows)
    rewards.setflags(write=False)
    emb.setflags(write=False)
    return CompletionGroup(
        prompt_id=group.prompt_id,
        completion_ids=tuple(group.completion_ids),
        rewards=rewards,
        embeddings=emb,
        texts=None if group.texts is None else tuple(group.texts),
    )


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric G x G cosine-kernel matrix with unit diagonal."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.entries, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise InvalidMatrix(f"similarity matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NonFiniteValue("similarity matrix contains NaN or Inf")
        if np.max(np.abs(m - m.T)) > _MATRIX_TOL:
            raise InvalidMatrix("similarity matrix is not symmetric")
        if np.max(np.abs(np.diag(m) - 1.0)) > _MATRIX_TOL:
            raise InvalidMatrix("similarity matrix diagonal is not 1")
        if np.max(np.abs(m)) > 1.0 + _MATRIX_TOL:
            raise InvalidMatrix("similarity entries must lie in [-1, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    def check_index(self, i: int) -> int:
        if not isinstance(i, (int, np.integer)) or not 0 <= i < self.size:
            raise IndexOutOfRange(f"index {i!r} outside [0, {self.size})")
        return int(i)


@dataclass(frozen=True)
class AdvantageVector:
    values: np.ndarray
    mode: AdvantageMode

    def __len__(self) -> int:
        return len(self.values)
