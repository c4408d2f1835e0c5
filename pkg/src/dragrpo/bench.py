"""Wall-clock cost of computing adjustment weights, Graph-Cut vs LogDet.

For each G on a doubling grid starting at 8, one random unit-embedding
similarity matrix is built and ``dra_weights`` is timed ``repetitions``
times per variant. The reported statistic is the median in microseconds;
one untimed warm-up call precedes each series.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .adjust import DEFAULT_EPSILON, dra_weights
from .smi import GRAPH_CUT, LOG_DET, SmiKind, cosine_similarity_matrix

EMBED_DIM = 512


@dataclass(frozen=True)
class BenchRow:
    group_size: int
    graphcut_us: float
    logdet_us: float


@dataclass
class BenchResult:
    rows: list[BenchRow]
    graphcut_slope: float
    logdet_slope: float

    def to_csv(self) -> str:
        lines = ["G,graphcut_us,logdet_us"]
        for r in self.rows:
            lines.append(f"{r.group_size},{r.graphcut_us:.17g},{r.logdet_us:.17g}")
        return "\n".join(lines) + "\n"


def doubling_grid(max_g: int, start: int = 8) -> list[int]:
    if max_g < start:
        raise ValueError(f"max G must be >= {start}")
    grid, g = [], start
    while g <= max_g:
        grid.append(g)
        g *= 2
    return grid


def _median_us(matrix, kind: SmiKind, repetitions: int) -> float:
    dra_weights(matrix, kind, DEFAULT_EPSILON)
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        dra_weights(matrix, kind, DEFAULT_EPSILON)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples) * 1e6


def loglog_slope(sizes, times) -> float:
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])


def run_bench(max_g: int = 64, repetitions: int = 50, seed: int = 0) -> BenchResult:
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    rng = np.random.default_rng(seed)
    rows = []
    for g in doubling_grid(max_g):
        # non-negative directions keep cosines positive, as with typical sentence encoders
        emb = np.abs(rng.normal(size=(g, EMBED_DIM)))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        matrix = cosine_similarity_matrix(emb)
        rows.append(BenchRow(g, _median_us(matrix, GRAPH_CUT, repetitions), _median_us(matrix, LOG_DET, repetitions)))
    sizes = [r.group_size for r in rows]
    return BenchResult(
        rows=rows,
        graphcut_slope=loglog_slope(sizes, [r.graphcut_us for r in rows]),
        logdet_slope=loglog_slope(sizes, [r.logdet_us for r in rows]),
    )
