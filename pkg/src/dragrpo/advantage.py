"""Group-relative advantages and the clipped surrogate objective (no KL term).

The surrogate for one group is::

    J = 1/G * sum_i w_i * sum_t min(r_it * A_i, clip(r_it, 1 - eps, 1 + eps) * A_i)

with ``r_it = pi(o_it | s_it) / pi_old(o_it | s_it)``. GRPO uses the length
normalization ``w_i = 1 / |o_i|``; DR.GRPO drops it (``w_i = 1``) and also
drops the std division in the advantage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import AdvantageMode, AdvantageVector, DraError, GroupTooSmall, NonFiniteValue
from .policy import Rollout, ToyPolicy

DEFAULT_CLIP = 0.2
DEFAULT_STD_FLOOR = 1e-8


class NonPositiveRatio(DraError):
    pass


class StaleSnapshot(DraError):
    """A trajectory has no recorded old-policy probabilities."""


@dataclass(frozen=True)
class ClipConfig:
    epsilon: float = DEFAULT_CLIP
    mode: AdvantageMode = AdvantageMode.GRPO
    std_floor: float = DEFAULT_STD_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "mode", AdvantageMode(self.mode))
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"clip epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.std_floor >= 0.0:
            raise ValueError("std_floor must be >= 0")


def group_advantages(
    rewards: Sequence[float] | np.ndarray,
    mode: AdvantageMode | str = AdvantageMode.GRPO,
    std_floor: float = DEFAULT_STD_FLOOR,
) -> AdvantageVector:
    """Mean-centered rewards, divided by the population std in GRPO mode.

    A group without spread carries no learning signal: constant rewards give
    all-zero advantages in both modes, as does a GRPO group whose std falls
    below ``std_floor``.
    """
    mode = AdvantageMode(mode)
    r = np.asarray(rewards, dtype=np.float64).reshape(-1)
    if r.size < 2:
        raise GroupTooSmall(f"need at least 2 rewards, got {r.size}")
    if not np.all(np.isfinite(r)):
        raise NonFiniteValue("rewards must be finite")
    zeros = AdvantageVector(np.zeros_like(r), mode)
    if np.all(r == r[0]):
        return zeros
    centered = r - r.mean()
    if mode is AdvantageMode.DRGRPO:
        return AdvantageVector(centered, mode)
    std = float(np.sqrt(np.mean(centered**2)))
    if std < std_floor:
        return zeros
    return AdvantageVector(centered / std, mode)


def clipped_surrogate(ratio: float, advantage: float, config: ClipConfig | float = DEFAULT_CLIP) -> float:
    eps = config.epsilon if isinstance(config, ClipConfig) else float(config)
    if not (np.isfinite(ratio) and ratio > 0):
        raise NonPositiveRatio(f"importance ratio must be finite and positive, got {ratio}")
    clipped = min(max(ratio, 1.0 - eps), 1.0 + eps)
    return min(ratio * advantage, clipped * advantage)


def _checked_snapshot(policy: ToyPolicy, rollout: Rollout) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    trajs = policy.check_trajectories(rollout.trajectories)
    adv = np.asarray(rollout.advantages, dtype=np.float64).reshape(-1)
    if adv.shape[0] != trajs.shape[0]:
        raise ValueError(f"{adv.shape[0]} advantages for {trajs.shape[0]} trajectories")
    if rollout.old_token_probs is None:
        raise StaleSnapshot("rollout carries no old-policy probabilities")
    old = np.asarray(rollout.old_token_probs, dtype=np.float64)
    if old.shape != trajs.shape:
        raise StaleSnapshot(f"old-policy probabilities have shape {old.shape}, expected {trajs.shape}")
    bad = np.flatnonzero(~np.all(np.isfinite(old) & (old > 0), axis=1))
    if bad.size:
        raise StaleSnapshot(f"no valid old-policy probabilities recorded for trajectory {int(bad[0])}")
    return trajs, adv, old


def _sequence_weights(n: int, seq_len: int, mode: AdvantageMode) -> float:
    if mode is AdvantageMode.GRPO:
        return 1.0 / (n * seq_len)
    return 1.0 / n


def surrogate_objective(policy: ToyPolicy, rollout: Rollout, config: ClipConfig) -> float:
    trajs, adv, old = _checked_snapshot(policy, rollout)
    ratio = policy.token_probs(trajs) / old
    a = adv[:, None]
    clipped = np.clip(ratio, 1.0 - config.epsilon, 1.0 + config.epsilon)
    terms = np.minimum(ratio * a, clipped * a)
    return float(_sequence_weights(len(trajs), policy.seq_len, config.mode) * terms.sum())


def surrogate_gradient(policy: ToyPolicy, rollout: Rollout, config: ClipConfig) -> tuple[np.ndarray, ...]:
    """Analytic gradient of ``surrogate_objective`` with respect to every logit table.

    Where the clipped branch is active the term is flat in the parameters and
    contributes nothing; elsewhere d(r*A) = r*A * d log pi(o_t | s_t), and
    d log softmax(z/T)_o / dz = (onehot(o) - p) / T.
    """
    trajs, adv, old = _checked_snapshot(policy, rollout)
    states = policy.prefix_indices(trajs)
    new = policy.token_probs(trajs)
    ratio = new / old
    a = adv[:, None]
    eps = config.epsilon
    active = ~(((a > 0) & (ratio > 1.0 + eps)) | ((a < 0) & (ratio < 1.0 - eps)))
    coef = _sequence_weights(len(trajs), policy.seq_len, config.mode) * ratio * a * active
    grads = []
    for t in range(policy.seq_len):
        probs = policy.state_probs(t)
        g = np.zeros_like(policy.logits[t])
        c = coef[:, t]
        live = c != 0
        if np.any(live):
            s, tok, c = states[live, t], trajs[live, t], c[live]
            np.add.at(g, (s, tok), c)
            np.add.at(g, s, -c[:, None] * probs[s])
        grads.append(g / policy.temperature)
    return tuple(grads)


def policy_gradient_step(
    policy: ToyPolicy,
    rollout: Rollout,
    config: ClipConfig,
    learning_rate: float,
) -> ToyPolicy:
    """One gradient-ascent step on the clipped surrogate; returns a new policy."""
    grads = surrogate_gradient(policy, rollout, config)
    if not any(np.any(g) for g in grads):
        return policy
    return policy.with_logits(z + learning_rate * g for z, g in zip(policy.logits, grads))
