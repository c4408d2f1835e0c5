"""Rule-based completion rewards (string-level stand-ins for the math-RL rewards).

The composed reward used for training is ``format_weight * format +
cosine_weight * cosine`` with default weights 1.0 and 2.0.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional

THINK_CLOSE = "\n</think>\n"
_THINK_CLOSE_RE = re.compile(r"(?=\n</think>\n)")


class UnknownComponent(KeyError):
    pass


class LengthOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    weights: Mapping[str, float] = field(default_factory=lambda: {"format": 1.0, "cosine": 2.0})
    max_len: int = 1000
    cosine_correct_range: tuple[float, float] = (0.5, 1.0)
    cosine_wrong_range: tuple[float, float] = (-1.0, -0.5)

    def __post_init__(self):
        object.__setattr__(self, "weights", dict(self.weights))
        if any(not w >= 0 for w in self.weights.values()):
            raise ValueError("reward weights must be non-negative")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        lo_c, hi_c = self.cosine_correct_range
        lo_w, hi_w = self.cosine_wrong_range
        if hi_c < lo_c:
            raise ValueError("cosine_correct_range must be (min, max) with max >= min")
        if not lo_w <= hi_w <= 0:
            raise ValueError("cosine_wrong_range must satisfy min <= max <= 0")


def _normalize_answer(s: str) -> str:
    return s.strip().casefold()


def accuracy_reward(answer: str, ground_truth: str) -> float:
    """1.0 when the answers agree after trimming and case-folding."""
    return 1.0 if _normalize_answer(answer) == _normalize_answer(ground_truth) else 0.0


def count_think_close(text: str) -> int:
    """Occurrences (overlapping) of the ``\\n</think>\\n`` sequence."""
    return len(_THINK_CLOSE_RE.findall(text))


def format_reward(text: str) -> float:
    # the opening <think> tag is part of the prompt, only the closing one is counted
    return 1.0 if count_think_close(text) == 1 else 0.0


def cosine_reward(correct: bool, length: int, config: RewardConfig = RewardConfig()) -> float:
    """Length-scheduled correctness reward.

    Short correct completions score close to the top of the correct range and
    short wrong ones close to the bottom of the wrong range; both move toward
    the other end of their range as ``length`` approaches ``max_len``.
    """
    if not 0 <= length <= config.max_len:
        raise LengthOutOfRange(f"length {length} outside [0, {config.max_len}]")
    c = 0.5 * (1.0 + math.cos(math.pi * length / config.max_len))
    if correct:
        lo, hi = config.cosine_correct_range
        return lo + (hi - lo) * c
    lo, hi = config.cosine_wrong_range
    return hi + (lo - hi) * c


def combined_reward(components: Mapping[str, float], config: RewardConfig = RewardConfig()) -> float:
    total = 0.0
    for name, value in components.items():
        if name not in config.weights:
            raise UnknownComponent(name)
        total += config.weights[name] * float(value)
    return total


def extract_answer(text: str) -> str:
    """Whatever follows the last closing think tag (the whole text if there is none)."""
    idx = text.rfind("</think>")
    return text if idx < 0 else text[idx + len("</think>") :]


def score_completion(
    text: str,
    ground_truth: str,
    config: RewardConfig = RewardConfig(),
    answer: Optional[str] = None,
) -> float:
    """Format + cosine reward of a raw completion; length is counted in characters, clipped to ``max_len``."""
    if answer is None:
        answer = extract_answer(text)
    correct = accuracy_reward(answer, ground_truth) == 1.0
    length = min(len(text), config.max_len)
    return combined_reward(
        {"format": format_reward(text), "cosine": cosine_reward(correct, length, config)},
        config,
    )
