"""Desk-scale multi-modal environment for studying mode collapse.

A handful of token sequences ("modes") carry reward; everything else is worth
zero. The initial policy puts most of its mass on one dominant mode. Each
trajectory gets a deterministic synthetic embedding: mode members sit near
their mode's center (centers are mutually orthogonal), everything else lives
in the orthogonal complement of the centers. All coordinates are
non-negative, so every cosine similarity is >= 0.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .adjust import DEFAULT_EPSILON, adjust_group, adjust_rewards, dra_weights
from .advantage import DEFAULT_CLIP, ClipConfig, group_advantages, policy_gradient_step
from .core import AdvantageMode, CompletionGroup, DraError, GroupTooSmall
from .policy import BadTrajectory, Rollout, ToyPolicy, all_trajectories, encode
from .smi import GRAPH_CUT, SmiKind, cosine_similarity_matrix

DEFAULT_GROUP_SIZE = 6
DEFAULT_EVAL_INTERVAL = 10
DEFAULT_EVAL_BATCH = 256


class GeometryNotExact(DraError):
    """The IPS check needs noiseless, single-trajectory modes."""


class Algorithm(str, enum.Enum):
    GRPO = "GRPO"
    DRGRPO = "DRGRPO"
    DRA_GRPO = "DRA_GRPO"
    DRA_DRGRPO = "DRA_DRGRPO"

    @property
    def uses_dra(self) -> bool:
        return self.value.startswith("DRA_")

    @property
    def advantage_mode(self) -> AdvantageMode:
        return AdvantageMode.DRGRPO if self.value.endswith("DRGRPO") else AdvantageMode.GRPO

    @classmethod
    def parse(cls, name: str) -> "Algorithm":
        key = name.strip().upper().replace("-", "_").replace(".", "")
        return cls(key)


def default_mode_trajectories(vocab_size: int, seq_len: int, n_modes: int) -> list[tuple[int, ...]]:
    """Mode ``m`` is ``(0, ..., 0, m)``; mode 0 (all zeros) is the dominant one.

    Every mode hangs off the dominant path at the last position, so the
    competition between modes is a single categorical choice that the
    policy can either spread or collapse.
    """
    if n_modes > vocab_size:
        raise ValueError(f"at most {vocab_size} modes fit this layout, asked for {n_modes}")
    return [(0,) * (seq_len - 1) + (m,) for m in range(n_modes)]


def _hash_seed(*parts: int) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(int(p).to_bytes(8, "little", signed=True))
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class ToyEnvironment:
    vocab_size: int
    seq_len: int
    modes: tuple[frozenset, ...]
    mode_rewards: tuple[float, ...]
    mode_centers: np.ndarray
    within_mode_noise: float = 0.0
    dominant_mode: int = 0
    dominant_prob: float = 0.7
    embed_seed: int = 0
    _lookup: dict = field(default=None, repr=False, compare=False)
    _table: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.vocab_size < 2 or self.seq_len < 1:
            raise ValueError("need vocab_size >= 2 and seq_len >= 1")
        modes = tuple(frozenset(tuple(int(x) for x in t) for t in m) for m in self.modes)
        object.__setattr__(self, "modes", modes)
        if len(self.mode_rewards) != len(modes):
            raise ValueError("one reward per mode is required")
        lookup = {}
        for m, members in enumerate(modes):
            if not members:
                raise ValueError(f"mode {m} is empty")
            for traj in members:
                if len(traj) != self.seq_len or min(traj) < 0 or max(traj) >= self.vocab_size:
                    raise BadTrajectory(f"mode {m} member {traj} is not a valid trajectory")
                if traj in lookup:
                    raise ValueError(f"trajectory {traj} belongs to modes {lookup[traj]} and {m}")
                lookup[traj] = m
        if len(lookup) >= self.vocab_size**self.seq_len:
            raise ValueError("modes must leave at least one unrewarded trajectory")
        centers = np.array(self.mode_centers, dtype=np.float64)
        if centers.ndim != 2 or centers.shape[0] != len(modes):
            raise ValueError("need one center per mode")
        if centers.shape[1] <= len(modes):
            raise ValueError("embedding dimension must exceed the number of modes")
        if np.max(np.abs(centers @ centers.T - np.eye(len(modes)))) > 1e-9:
            raise ValueError("mode centers must be orthonormal")
        if not 0.0 <= self.within_mode_noise < 0.5:
            raise ValueError("within_mode_noise must lie in [0, 0.5)")
        if not 0 <= self.dominant_mode < len(modes):
            raise ValueError("dominant_mode out of range")
        if not 0.0 < self.dominant_prob < 1.0:
            raise ValueError("dominant_prob must lie in (0, 1)")
        centers.setflags(write=False)
        object.__setattr__(self, "mode_centers", centers)
        object.__setattr__(self, "_lookup", lookup)
        if self.vocab_size**self.seq_len <= 1 << 16:
            table = np.vstack([self._embed(tuple(t)) for t in all_trajectories(self.vocab_size, self.seq_len)])
            table.setflags(write=False)
            object.__setattr__(self, "_table", table)

    @classmethod
    def default(
        cls,
        vocab_size: int = 8,
        seq_len: int = 3,
        n_modes: int = 5,
        mode_reward: float = 1.0,
        within_mode_noise: float = 0.1,
        embed_dim: int = 16,
        dominant_mode: int = 0,
        dominant_prob: float = 0.7,
        embed_seed: int = 0,
    ) -> "ToyEnvironment":
        trajs = default_mode_trajectories(vocab_size, seq_len, n_modes)
        return cls(
            vocab_size=vocab_size,
            seq_len=seq_len,
            modes=tuple(frozenset([t]) for t in trajs),
            mode_rewards=(float(mode_reward),) * n_modes,
            mode_centers=np.eye(n_modes, embed_dim),
            within_mode_noise=within_mode_noise,
            dominant_mode=dominant_mode,
            dominant_prob=dominant_prob,
            embed_seed=embed_seed,
        )

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def embed_dim(self) -> int:
        return int(self.mode_centers.shape[1])

    def mode_of(self, trajectory: Sequence[int]) -> int:
        """Mode index of a trajectory, or -1 if it is unrewarded."""
        return self._lookup.get(tuple(int(x) for x in trajectory), -1)

    def modes_of(self, trajectories: np.ndarray) -> np.ndarray:
        return np.array([self.mode_of(t) for t in trajectories], dtype=np.int64)

    def reward(self, trajectory: Sequence[int]) -> float:
        m = self.mode_of(trajectory)
        return 0.0 if m < 0 else float(self.mode_rewards[m])

    def initial_policy(self, temperature: float = 1.0) -> ToyPolicy:
        """Uniform policy tilted so the dominant mode's first member has probability ``dominant_prob``."""
        anchor = min(self.modes[self.dominant_mode])
        policy = ToyPolicy.biased(self.vocab_size, self.seq_len, anchor, self.dominant_prob)
        if temperature != 1.0:
            policy = ToyPolicy(policy.vocab_size, policy.seq_len, policy.logits, temperature)
        return policy

    def _embed(self, traj: tuple[int, ...]) -> np.ndarray:
        rng = np.random.default_rng(_hash_seed(self.embed_seed, *traj))
        m = self._lookup.get(traj, -1)
        d = self.embed_dim
        direction = np.abs(rng.standard_normal(d))
        if m >= 0:
            if self.within_mode_noise == 0.0:
                return self.mode_centers[m].copy()
            v = self.mode_centers[m] + self.within_mode_noise * direction / np.linalg.norm(direction)
            return v / np.linalg.norm(v)
        # project out the (non-negative, orthonormal) centers
        direction = direction - self.mode_centers.T @ (self.mode_centers @ direction)
        direction = np.maximum(direction, 0.0)
        return direction / np.linalg.norm(direction)


def trajectory_embedding(env: ToyEnvironment, trajectory: Sequence[int]) -> np.ndarray:
    traj = tuple(int(x) for x in trajectory)
    if len(traj) != env.seq_len or any(not 0 <= x < env.vocab_size for x in traj):
        raise BadTrajectory(f"{traj} is not a length-{env.seq_len} sequence over {env.vocab_size} tokens")
    if env._table is not None:
        return env._table[encode(traj, env.vocab_size)].copy()
    return env._embed(traj)


@dataclass(frozen=True)
class SampledGroup:
    group: CompletionGroup
    trajectories: np.ndarray
    old_token_probs: np.ndarray
    modes: np.ndarray

    def rollout(self, advantages: Sequence[float] | np.ndarray) -> Rollout:
        return Rollout(self.trajectories, np.asarray(advantages, dtype=np.float64), self.old_token_probs)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_group(
    policy: ToyPolicy,
    env: ToyEnvironment,
    group_size: int = DEFAULT_GROUP_SIZE,
    seed: int | np.random.Generator = 0,
    prompt_id: str = "toy",
) -> SampledGroup:
    """Draw ``group_size`` i.i.d. trajectories and record their old-policy token probabilities."""
    if group_size < 2:
        raise GroupTooSmall(f"group size {group_size} < 2")
    rng = _as_rng(seed)
    trajs = policy.sample(group_size, rng)
    modes = env.modes_of(trajs)
    rewards = np.array([0.0 if m < 0 else env.mode_rewards[m] for m in modes])
    if env._table is not None:
        emb = env._table[[encode(t, env.vocab_size) for t in trajs]]
    else:
        emb = np.vstack([trajectory_embedding(env, t) for t in trajs])
    group = CompletionGroup.build(
        prompt_id=prompt_id,
        completion_ids=[f"c{i}" for i in range(group_size)],
        rewards=rewards,
        embeddings=emb,
        texts=[" ".join(map(str, t)) for t in trajs],
    )
    return SampledGroup(group, trajs, policy.token_probs(trajs), modes)


@dataclass(frozen=True)
class RunMetrics:
    step: int
    algorithm: str
    seed: int
    mode_recall: int
    mode_entropy: float
    mean_reward: float
    visits: tuple[int, ...]


def mode_statistics(env: ToyEnvironment, modes: np.ndarray) -> tuple[int, float, tuple[int, ...]]:
    """Recall, entropy (nats) and histogram of mode visits; unrewarded samples (-1) are ignored."""
    visits = np.bincount(modes[modes >= 0], minlength=env.n_modes)[: env.n_modes]
    recall = int(sum(1 for m in range(env.n_modes) if visits[m] > 0 and env.mode_rewards[m] > 0))
    total = visits.sum()
    if total == 0:
        entropy = 0.0
    else:
        p = visits[visits > 0] / total
        entropy = float(max(0.0, -np.sum(p * np.log(p))))
    return recall, entropy, tuple(int(v) for v in visits)


def evaluate(
    policy: ToyPolicy,
    env: ToyEnvironment,
    n: int,
    rng: np.random.Generator,
    step: int = 0,
    algorithm: str = "",
    seed: int = 0,
) -> RunMetrics:
    trajs = policy.sample(n, rng)
    modes = env.modes_of(trajs)
    recall, entropy, visits = mode_statistics(env, modes)
    rewards = np.array([0.0 if m < 0 else env.mode_rewards[m] for m in modes])
    return RunMetrics(step, algorithm, seed, recall, entropy, float(rewards.mean()), visits)


@dataclass
class TrainResult:
    metrics: list[RunMetrics]
    policy: ToyPolicy


def run_training(
    env: ToyEnvironment,
    algorithm: Algorithm | str = Algorithm.GRPO,
    steps: int = 500,
    group_size: int = DEFAULT_GROUP_SIZE,
    learning_rate: float = 1.0,
    clip: float = DEFAULT_CLIP,
    seed: int = 0,
    smi: SmiKind = GRAPH_CUT,
    epsilon: float = DEFAULT_EPSILON,
    eval_interval: int = DEFAULT_EVAL_INTERVAL,
    eval_batch: int = DEFAULT_EVAL_BATCH,
    temperature: float = 1.0,
    policy: Optional[ToyPolicy] = None,
) -> TrainResult:
    """Sample -> (optionally adjust) -> advantage -> one clipped step, repeated.

    Evaluation batches come from their own random stream, so two algorithms
    run with the same seed are scored on identically-seeded evaluation draws.
    """
    algorithm = Algorithm.parse(algorithm) if isinstance(algorithm, str) else algorithm
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if eval_interval < 1 or eval_batch < 1:
        raise ValueError("eval_interval and eval_batch must be positive")
    if not learning_rate > 0:
        raise ValueError("learning_rate must be positive")
    config = ClipConfig(epsilon=clip, mode=algorithm.advantage_mode)
    train_ss, eval_ss = np.random.SeedSequence(seed).spawn(2)
    train_rng, eval_rng = np.random.default_rng(train_ss), np.random.default_rng(eval_ss)
    if policy is None:
        policy = env.initial_policy(temperature)
    metrics: list[RunMetrics] = []
    for step in range(steps + 1):
        if step % eval_interval == 0 or step == steps:
            metrics.append(evaluate(policy, env, eval_batch, eval_rng, step, algorithm.value, seed))
        if step == steps:
            break
        sampled = sample_group(policy, env, group_size, train_rng)
        rewards = sampled.group.rewards
        if algorithm.uses_dra:
            _, rewards = adjust_group(sampled.group, smi, epsilon)
        adv = group_advantages(rewards, config.mode, config.std_floor)
        policy = policy_gradient_step(policy, sampled.rollout(adv.values), config, learning_rate)
    return TrainResult(metrics, policy)


def train(env: ToyEnvironment, algorithm: Algorithm | str = Algorithm.GRPO, steps: int = 500, **kwargs) -> list[RunMetrics]:
    return run_training(env, algorithm, steps, **kwargs).metrics


METRIC_FIELDS = ("step", "algorithm", "seed", "mode_recall", "mode_entropy", "mean_reward")


def metrics_header(n_modes: int) -> list[str]:
    return list(METRIC_FIELDS) + [f"visits_{m}" for m in range(n_modes)]


def write_metrics_csv(metrics: Iterable[RunMetrics], stream: TextIO, n_modes: int) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(metrics_header(n_modes))
    for m in metrics:
        writer.writerow(
            [m.step, m.algorithm, m.seed, m.mode_recall, format(m.mode_entropy, ".17g"), format(m.mean_reward, ".17g")]
            + list(m.visits)
        )


def metrics_to_csv(metrics: Sequence[RunMetrics], n_modes: int) -> str:
    buf = io.StringIO()
    write_metrics_csv(metrics, buf, n_modes)
    return buf.getvalue()


@dataclass(frozen=True)
class IpsReport:
    target: float
    vanilla_mean: float
    dra_mean: float
    vanilla_se: float
    dra_se: float
    vanilla_bias: float
    dra_bias: float
    trials: int


def ips_debias_check(
    env: ToyEnvironment,
    policy: ToyPolicy,
    group_size: int = DEFAULT_GROUP_SIZE,
    trials: int = 10_000,
    seed: int = 0,
    epsilon: float = 0.0,
) -> IpsReport:
    """Compare the plain group-mean reward and the DRA group sum against the
    uniform-sum target ``sum over modes of R(mode)``.

    With noiseless one-trajectory modes every row sum is exactly the
    multiplicity of that trajectory in the group, so the DRA sum counts each
    distinct rewarded item once.
    """
    if env.within_mode_noise != 0.0 or any(len(m) != 1 for m in env.modes):
        raise GeometryNotExact("IPS check requires within_mode_noise == 0 and single-trajectory modes")
    if group_size < 2:
        raise GroupTooSmall(f"group size {group_size} < 2")
    if trials < 2:
        raise ValueError("need at least 2 trials")
    rng = np.random.default_rng(seed)
    trajs = policy.sample(trials * group_size, rng)
    modes = env.modes_of(trajs).reshape(trials, group_size)
    rewards = np.where(modes >= 0, np.asarray(env.mode_rewards)[np.maximum(modes, 0)], 0.0)
    if env._table is not None:
        emb = env._table[[encode(t, env.vocab_size) for t in trajs]]
    else:
        emb = np.vstack([trajectory_embedding(env, t) for t in trajs])
    emb = emb.reshape(trials, group_size, -1)
    vanilla = rewards.mean(axis=1)
    dra = np.empty(trials)
    for k in range(trials):
        weights = dra_weights(cosine_similarity_matrix(emb[k]), GRAPH_CUT, epsilon)
        dra[k] = adjust_rewards(rewards[k], weights).sum()
    target = float(sum(env.mode_rewards))
    vm, dm = float(vanilla.mean()), float(dra.mean())
    return IpsReport(
        target=target,
        vanilla_mean=vm,
        dra_mean=dm,
        vanilla_se=float(vanilla.std(ddof=1) / math.sqrt(trials)),
        dra_se=float(dra.std(ddof=1) / math.sqrt(trials)),
        vanilla_bias=abs(vm - target),
        dra_bias=abs(dm - target),
        trials=trials,
    )
