"""Tabular autoregressive policy over fixed-length token sequences.

The state at position ``t`` is the full prefix ``o_<t``, encoded as a base-V
integer, so ``logits[t]`` has shape ``(V**t, V)``. At V=8, L=3 this is 73
states, small enough to enumerate every trajectory probability exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np


class BadTrajectory(ValueError):
    pass


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    top = np.max(z, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore"):
        e = np.exp(z - top)
    return e / e.sum(axis=-1, keepdims=True)


def encode(trajectory: Sequence[int], vocab_size: int) -> int:
    """Base-V index of a token sequence (lexicographic order)."""
    idx = 0
    for tok in trajectory:
        idx = idx * vocab_size + int(tok)
    return idx


def decode(index: int, vocab_size: int, seq_len: int) -> tuple[int, ...]:
    out = []
    for _ in range(seq_len):
        index, tok = divmod(index, vocab_size)
        out.append(tok)
    return tuple(reversed(out))


def all_trajectories(vocab_size: int, seq_len: int) -> np.ndarray:
    """Every length-L sequence, row ``k`` being ``decode(k)``."""
    grids = np.indices((vocab_size,) * seq_len).reshape(seq_len, -1).T
    return grids.astype(np.int64)


@dataclass(frozen=True)
class ToyPolicy:
    vocab_size: int
    seq_len: int
    logits: tuple[np.ndarray, ...]
    temperature: float = 1.0
    _probs: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.vocab_size < 2 or self.seq_len < 1:
            raise ValueError("need vocab_size >= 2 and seq_len >= 1")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if len(self.logits) != self.seq_len:
            raise ValueError(f"expected {self.seq_len} logit tables, got {len(self.logits)}")
        tables = []
        for t, table in enumerate(self.logits):
            arr = np.array(table, dtype=np.float64)
            if arr.shape != (self.vocab_size**t, self.vocab_size):
                raise ValueError(f"logits[{t}] has shape {arr.shape}")
            if np.any(np.isnan(arr)) or np.any(arr == np.inf):
                raise ValueError(f"logits[{t}] contains NaN or +inf")
            arr.setflags(write=False)
            tables.append(arr)
        object.__setattr__(self, "logits", tuple(tables))
        probs = []
        for arr in tables:
            p = _softmax_rows(arr / self.temperature)
            p.setflags(write=False)
            probs.append(p)
        object.__setattr__(self, "_probs", tuple(probs))

    # -- constructors ---------------------------------------------------
    @classmethod
    def uniform(cls, vocab_size: int, seq_len: int, temperature: float = 1.0) -> "ToyPolicy":
        tables = tuple(np.zeros((vocab_size**t, vocab_size)) for t in range(seq_len))
        return cls(vocab_size, seq_len, tables, temperature)

    @classmethod
    def biased(
        cls,
        vocab_size: int,
        seq_len: int,
        trajectory: Sequence[int],
        prob: float,
    ) -> "ToyPolicy":
        """Uniform policy whose logits along one path are raised so that the
        path is generated with probability ``prob`` (every other state stays uniform)."""
        if not 0.0 < prob < 1.0:
            raise ValueError("prob must lie in (0, 1)")
        if len(trajectory) != seq_len:
            raise BadTrajectory(f"trajectory length {len(trajectory)} != {seq_len}")
        step = prob ** (1.0 / seq_len)
        if step <= 1.0 / vocab_size:
            bias = 0.0
        else:
            bias = float(np.log(step * (vocab_size - 1) / (1.0 - step)))
        tables = [np.zeros((vocab_size**t, vocab_size)) for t in range(seq_len)]
        prefix = 0
        for t, tok in enumerate(trajectory):
            tables[t][prefix, int(tok)] = bias
            prefix = prefix * vocab_size + int(tok)
        return cls(vocab_size, seq_len, tuple(tables))

    @classmethod
    def from_distribution(
        cls,
        vocab_size: int,
        seq_len: int,
        dist: Mapping[tuple[int, ...], float],
    ) -> "ToyPolicy":
        """Policy that generates exactly the given trajectory distribution.

        Conditionals are ``mass(prefix + tok) / mass(prefix)``; unreachable
        states get uniform logits. Zero-mass tokens get ``-inf`` logits.
        """
        total = float(sum(dist.values()))
        if total <= 0 or any(p < 0 for p in dist.values()):
            raise ValueError("distribution must be non-negative with positive mass")
        mass = [np.zeros(vocab_size ** (t + 1)) for t in range(seq_len)]
        for traj, p in dist.items():
            if len(traj) != seq_len:
                raise BadTrajectory(f"trajectory {traj} has length {len(traj)} != {seq_len}")
            idx = 0
            for t, tok in enumerate(traj):
                if not 0 <= tok < vocab_size:
                    raise BadTrajectory(f"token {tok} out of range")
                idx = idx * vocab_size + tok
                mass[t][idx] += p / total
        tables = []
        for t in range(seq_len):
            child = mass[t].reshape(vocab_size**t, vocab_size)
            parent = child.sum(axis=1, keepdims=True)
            with np.errstate(divide="ignore", invalid="ignore"):
                table = np.where(parent > 0, np.log(child / np.where(parent > 0, parent, 1.0)), 0.0)
            tables.append(table)
        return cls(vocab_size, seq_len, tuple(tables))

    # -- evaluation -----------------------------------------------------
    def state_probs(self, t: int) -> np.ndarray:
        return self._probs[t]

    def check_trajectories(self, trajectories) -> np.ndarray:
        trajs = np.asarray(trajectories, dtype=np.int64)
        if trajs.ndim == 1:
            trajs = trajs[None, :]
        if trajs.ndim != 2 or trajs.shape[1] != self.seq_len:
            raise BadTrajectory(f"trajectories must have shape (n, {self.seq_len}), got {trajs.shape}")
        if trajs.size and (trajs.min() < 0 or trajs.max() >= self.vocab_size):
            raise BadTrajectory(f"tokens must lie in [0, {self.vocab_size})")
        return trajs

    def prefix_indices(self, trajectories) -> np.ndarray:
        """State index (encoded prefix) visited at each position, shape (n, L)."""
        trajs = self.check_trajectories(trajectories)
        out = np.zeros_like(trajs)
        for t in range(1, self.seq_len):
            out[:, t] = out[:, t - 1] * self.vocab_size + trajs[:, t - 1]
        return out

    def token_probs(self, trajectories) -> np.ndarray:
        """pi(o_t | o_<t) for every position of every trajectory, shape (n, L)."""
        trajs = self.check_trajectories(trajectories)
        states = self.prefix_indices(trajs)
        out = np.empty(trajs.shape, dtype=np.float64)
        for t in range(self.seq_len):
            out[:, t] = self.state_probs(t)[states[:, t], trajs[:, t]]
        return out

    def distribution(self) -> np.ndarray:
        """Probability of every trajectory, indexed by ``encode``."""
        probs = np.ones(1)
        for t in range(self.seq_len):
            probs = (probs[:, None] * self.state_probs(t)).reshape(-1)
        return probs

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        out = np.zeros((n, self.seq_len), dtype=np.int64)
        state = np.zeros(n, dtype=np.int64)
        for t in range(self.seq_len):
            cdf = np.cumsum(self.state_probs(t)[state], axis=1)
            u = rng.random(n) * cdf[:, -1]
            tok = (u[:, None] >= cdf).sum(axis=1)
            tok = np.minimum(tok, self.vocab_size - 1)
            out[:, t] = tok
            state = state * self.vocab_size + tok
        return out

    # -- parameter plumbing ---------------------------------------------
    def with_logits(self, tables: Iterable[np.ndarray]) -> "ToyPolicy":
        return ToyPolicy(self.vocab_size, self.seq_len, tuple(tables), self.temperature)

    def flat(self) -> np.ndarray:
        return np.concatenate([t.reshape(-1) for t in self.logits])

    def from_flat(self, flat: np.ndarray) -> "ToyPolicy":
        tables, k = [], 0
        for t in self.logits:
            tables.append(np.asarray(flat[k : k + t.size], dtype=np.float64).reshape(t.shape))
            k += t.size
        return self.with_logits(tables)


@dataclass(frozen=True)
class Rollout:
    """Sampled trajectories with their advantages and the old-policy token
    probabilities recorded at sampling time (``None`` if never recorded)."""

    trajectories: np.ndarray
    advantages: np.ndarray
    old_token_probs: Optional[np.ndarray] = None
