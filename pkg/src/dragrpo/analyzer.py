"""Per-prompt rank correlation between reward gaps and semantic distances.

For every prompt, the strict upper triangles of two G x G matrices are
paired up: ``|R_i - R_j|`` and ``1 - cos(e_i, e_j)``. Spearman's rho of those
G(G-1)/2 pairs, with a p-value, is one ``AnalysisRecord``.

Note that matrix entries are not independent samples (each completion
appears in G-1 pairs), so nominal p-values are approximate.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .core import CompletionGroup, DraError, GroupTooSmall, LengthMismatch

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05
N_BINS = 20
EXACT_MAX_N = 10
DEFAULT_PERMUTATIONS = 10_000


class DegenerateInput(DraError):
    pass


class EmptyDataset(DraError):
    pass


class PValueMethod(str, enum.Enum):
    T_APPROX = "tapprox"
    PERMUTATION = "permutation"


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    p_value: float
    n: int
    degenerate: bool = False


@dataclass(frozen=True)
class AnalysisRecord:
    prompt_id: str
    n_completions: int
    n_pairs: int
    rho: float
    p_value: float
    method: PValueMethod
    degenerate: bool = False


@dataclass
class AnalysisResult:
    records: list[AnalysisRecord]
    fraction_insignificant: float
    fraction_degenerate: float
    histogram: list[tuple[float, float, int]]
    alpha: float
    errors: list[tuple[str, str]] = field(default_factory=list)


def pairwise_distances(group: CompletionGroup) -> tuple[np.ndarray, np.ndarray]:
    """``(reward_diffs, embed_dists)`` over the strict upper triangle, row-major."""
    g = group.size
    if g < 3:
        raise GroupTooSmall(f"group {group.prompt_id!r} has {g} completions; pairwise analysis needs 3")
    iu, ju = np.triu_indices(g, k=1)
    rewards = np.asarray(group.rewards, dtype=np.float64)
    emb = np.asarray(group.embeddings, dtype=np.float64)
    cos = np.einsum("kd,kd->k", emb[iu], emb[ju])
    return np.abs(rewards[iu] - rewards[ju]), 1.0 - cos


def _midranks(x: np.ndarray) -> np.ndarray:
    return stats.rankdata(x, method="average")


def _t_pvalue(rho: float, n: int) -> float:
    if abs(rho) >= 1.0:
        return 0.0
    df = n - 2
    t = rho * math.sqrt(df / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), df)))


@lru_cache(maxsize=None)
def _half_permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64)


@lru_cache(maxsize=None)
def _subsets(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    chosen = np.array(list(itertools.combinations(range(n), k)), dtype=np.int64)
    rest = np.array([[j for j in range(n) if j not in set(c)] for c in chosen], dtype=np.int64)
    return chosen, rest


def _exact_permutation_pvalue(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sided exact p-value of ``sum_i a_i b_pi(i)`` over all n! permutations.

    Positions are split into two halves; for each way of sending k values of
    ``b`` to the first half, the achievable partial sums of both halves are
    enumerated separately and paired with a sorted search, which touches
    C(n, k) * k! * (n - k)! = n! combinations without materializing them.
    """
    n = len(a)
    obs = float(a @ b)
    tol = 1e-9 * max(1.0, float(np.abs(a).sum() * np.abs(b).max()))
    k = n // 2
    a1, a2 = a[:k], a[k:]
    p1, p2 = _half_permutations(k), _half_permutations(n - k)
    chosen, rest = _subsets(n, k)
    thr = abs(obs) - tol
    if thr <= 0:
        return 1.0
    extreme = 0
    for c, r in zip(chosen, rest):
        s1 = (b[c][p1] * a1).sum(axis=1)
        s2 = np.sort((b[r][p2] * a2).sum(axis=1))
        # pairs with s1 + s2 >= thr, plus pairs with s1 + s2 <= -thr
        hi = len(s2) - np.searchsorted(s2, thr - s1, side="left")
        lo = np.searchsorted(s2, -thr - s1, side="right")
        extreme += int(np.sum(hi) + np.sum(lo))
    return extreme / math.factorial(n)


def _monte_carlo_pvalue(a: np.ndarray, b: np.ndarray, n_perm: int, rng: np.random.Generator) -> float:
    obs = abs(float(a @ b))
    tol = 1e-9 * max(1.0, obs)
    perms = rng.permuted(np.tile(b, (n_perm, 1)), axis=1)
    hits = int(np.sum(np.abs(perms @ a) >= obs - tol))
    return (hits + 1) / (n_perm + 1)


def spearman(
    x: Sequence[float] | np.ndarray,
    y: Sequence[float] | np.ndarray,
    method: PValueMethod | str = PValueMethod.T_APPROX,
    n_permutations: int = DEFAULT_PERMUTATIONS,
    seed: int | np.random.Generator = 0,
    strict: bool = False,
) -> SpearmanResult:
    """Spearman's rho with midranks for ties and a two-sided p-value.

    ``tapprox`` uses t = rho * sqrt((n-2)/(1-rho^2)) on n-2 degrees of freedom.
    ``permutation`` is exact for n <= 10 and Monte-Carlo (seeded) above.
    A constant input has no defined rho: the result is flagged
    ``degenerate`` with rho = 0 and p = 1, or ``DegenerateInput`` is raised
    when ``strict``.
    """
    method = PValueMethod(method)
    xa = np.asarray(x, dtype=np.float64).reshape(-1)
    ya = np.asarray(y, dtype=np.float64).reshape(-1)
    if xa.shape != ya.shape:
        raise LengthMismatch(f"inputs have lengths {xa.size} and {ya.size}")
    n = xa.size
    if n < 3:
        raise GroupTooSmall(f"spearman needs at least 3 pairs, got {n}")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise ValueError("inputs must be finite")
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        if strict:
            raise DegenerateInput("one input is constant; rank correlation is undefined")
        return SpearmanResult(0.0, 1.0, n, degenerate=True)
    ra = _midranks(xa)
    rb = _midranks(ya)
    a = ra - ra.mean()
    b = rb - rb.mean()
    rho = float(a @ b / math.sqrt(float(a @ a) * float(b @ b)))
    rho = min(1.0, max(-1.0, rho))
    if method is PValueMethod.T_APPROX:
        p = _t_pvalue(rho, n)
    elif n <= EXACT_MAX_N:
        p = _exact_permutation_pvalue(a, b)
    else:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        p = _monte_carlo_pvalue(a, b, n_permutations, rng)
    return SpearmanResult(rho, float(min(1.0, max(0.0, p))), n)


def analyze_group(
    group: CompletionGroup,
    method: PValueMethod | str = PValueMethod.T_APPROX,
    seed: int | np.random.Generator = 0,
) -> AnalysisRecord:
    reward_diffs, embed_dists = pairwise_distances(group)
    res = spearman(reward_diffs, embed_dists, method=method, seed=seed)
    return AnalysisRecord(
        prompt_id=group.prompt_id,
        n_completions=group.size,
        n_pairs=len(reward_diffs),
        rho=res.rho,
        p_value=res.p_value,
        method=PValueMethod(method),
        degenerate=res.degenerate,
    )


def pvalue_histogram(p_values: Sequence[float], bins: int = N_BINS) -> list[tuple[float, float, int]]:
    counts, edges = np.histogram(np.asarray(p_values, dtype=np.float64), bins=bins, range=(0.0, 1.0))
    return [(float(edges[k]), float(edges[k + 1]), int(counts[k])) for k in range(bins)]


def analyze_dataset(
    groups: Iterable[CompletionGroup],
    alpha: float = DEFAULT_ALPHA,
    method: PValueMethod | str = PValueMethod.T_APPROX,
    seed: int = 0,
) -> AnalysisResult:
    """Analyze every prompt; a bad group is recorded in ``errors`` and skipped."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    records: list[AnalysisRecord] = []
    errors: list[tuple[str, str]] = []
    for group in groups:
        try:
            records.append(analyze_group(group, method, rng))
        except DraError as exc:
            log.warning("skipping prompt %s: %s", group.prompt_id, exc)
            errors.append((group.prompt_id, str(exc)))
    if not records:
        raise EmptyDataset("no analyzable prompts")
    p = np.array([r.p_value for r in records])
    return AnalysisResult(
        records=records,
        fraction_insignificant=float(np.mean(p > alpha)),
        fraction_degenerate=float(np.mean([r.degenerate for r in records])),
        histogram=pvalue_histogram(p),
        alpha=alpha,
        errors=errors,
    )
