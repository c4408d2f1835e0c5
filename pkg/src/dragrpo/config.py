"""Flat JSON run configuration for ``dragrpo simulate``."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields

from .adjust import DEFAULT_EPSILON
from .rewards import RewardConfig
from .sim import Algorithm, ToyEnvironment
from .smi import DEFAULT_JITTER, MAX_JITTER, SmiKind, SmiVariant


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "DRA_GRPO"
    smi: str = "graphcut"
    jitter: float = DEFAULT_JITTER
    epsilon: float = DEFAULT_EPSILON
    group_size: int = 6
    steps: int = 500
    learning_rate: float = 1.0
    clip_epsilon: float = 0.2
    seed: int = 0
    temperature: float = 1.0
    eval_interval: int = 10
    eval_batch: int = 256
    # environment
    vocab_size: int = 8
    seq_len: int = 3
    n_modes: int = 5
    mode_reward: float = 1.0
    within_mode_noise: float = 0.1
    embed_dim: int = 16
    dominant_mode: int = 0
    dominant_prob: float = 0.7
    embed_seed: int = 0
    # rewards (used when scoring raw text; the simulator rewards by mode)
    format_weight: float = 1.0
    cosine_weight: float = 2.0
    max_len: int = 1000
    cosine_correct_min: float = 0.5
    cosine_correct_max: float = 1.0
    cosine_wrong_min: float = -1.0
    cosine_wrong_max: float = -0.5

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type == "int":
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f.name, f"expected an integer, got {value!r}")
            elif f.type == "float":
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f.name, f"expected a number, got {value!r}")
                object.__setattr__(self, f.name, float(value))
            elif not isinstance(value, str):
                raise ConfigError(f.name, f"expected a string, got {value!r}")
        self._check_ranges()

    def _check_ranges(self):
        def need(ok: bool, name: str, msg: str):
            if not ok:
                raise ConfigError(name, msg)

        try:
            Algorithm.parse(self.algorithm)
        except ValueError:
            raise ConfigError("algorithm", f"unknown algorithm {self.algorithm!r}") from None
        try:
            SmiVariant(self.smi.lower())
        except ValueError:
            raise ConfigError("smi", f"unknown SMI {self.smi!r} (graphcut or logdet)") from None
        need(0.0 <= self.jitter <= MAX_JITTER, "jitter", f"must lie in [0, {MAX_JITTER}]")
        need(self.epsilon >= 0.0, "epsilon", "must be >= 0")
        need(self.group_size >= 2, "group_size", "must be >= 2")
        need(self.steps >= 0, "steps", "must be >= 0")
        need(self.learning_rate > 0.0, "learning_rate", "must be > 0")
        need(0.0 < self.clip_epsilon < 1.0, "clip_epsilon", "must lie in (0, 1)")
        need(self.seed >= 0, "seed", "must be >= 0")
        need(self.temperature > 0.0, "temperature", "must be > 0")
        need(self.eval_interval >= 1, "eval_interval", "must be >= 1")
        need(self.eval_batch >= 1, "eval_batch", "must be >= 1")
        need(self.vocab_size >= 2, "vocab_size", "must be >= 2")
        need(self.seq_len >= 1, "seq_len", "must be >= 1")
        need(1 <= self.n_modes <= self.vocab_size, "n_modes", "must lie in [1, vocab_size]")
        need(self.vocab_size**self.seq_len > self.n_modes, "n_modes", "modes must not cover every trajectory")
        need(0.0 <= self.within_mode_noise < 0.5, "within_mode_noise", "must lie in [0, 0.5)")
        need(self.embed_dim > self.n_modes, "embed_dim", "must exceed n_modes")
        need(0 <= self.dominant_mode < self.n_modes, "dominant_mode", "must index a mode")
        need(0.0 < self.dominant_prob < 1.0, "dominant_prob", "must lie in (0, 1)")
        need(self.format_weight >= 0.0, "format_weight", "must be >= 0")
        need(self.cosine_weight >= 0.0, "cosine_weight", "must be >= 0")
        need(self.max_len >= 1, "max_len", "must be >= 1")
        need(self.cosine_correct_max >= self.cosine_correct_min, "cosine_correct_max", "must be >= cosine_correct_min")
        need(self.cosine_wrong_min <= self.cosine_wrong_max, "cosine_wrong_min", "must be <= cosine_wrong_max")
        need(self.cosine_wrong_max <= 0.0, "cosine_wrong_max", "must be <= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a flat JSON object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        return cls(**data)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc.msg} (line {exc.lineno})") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    # -- derived objects ------------------------------------------------
    @property
    def algorithm_enum(self) -> Algorithm:
        return Algorithm.parse(self.algorithm)

    @property
    def smi_kind(self) -> SmiKind:
        return SmiKind.parse(self.smi, self.jitter)

    def environment(self) -> ToyEnvironment:
        return ToyEnvironment.default(
            vocab_size=self.vocab_size,
            seq_len=self.seq_len,
            n_modes=self.n_modes,
            mode_reward=self.mode_reward,
            within_mode_noise=self.within_mode_noise,
            embed_dim=self.embed_dim,
            dominant_mode=self.dominant_mode,
            dominant_prob=self.dominant_prob,
            embed_seed=self.embed_seed,
        )

    def reward_config(self) -> RewardConfig:
        return RewardConfig(
            weights={"format": self.format_weight, "cosine": self.cosine_weight},
            max_len=self.max_len,
            cosine_correct_range=(self.cosine_correct_min, self.cosine_correct_max),
            cosine_wrong_range=(self.cosine_wrong_min, self.cosine_wrong_max),
        )
