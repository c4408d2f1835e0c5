import json

import pytest

from dragrpo.config import ConfigError, RunConfig
from dragrpo.sim import Algorithm
from dragrpo.smi import SmiVariant


def test_defaults():
    c = RunConfig()
    assert c.group_size == 6 and c.epsilon == 1e-6 and c.clip_epsilon == 0.2
    assert c.algorithm_enum is Algorithm.DRA_GRPO
    assert c.smi_kind.variant is SmiVariant.GRAPH_CUT
    assert c.reward_config().weights == {"format": 1.0, "cosine": 2.0}
    env = c.environment()
    assert env.n_modes == 5 and env.vocab_size == 8


def test_round_trip_dict():
    c = RunConfig(algorithm="GRPO", steps=10, smi="logdet", jitter=1e-6)
    assert RunConfig.from_dict(c.to_dict()) == c


@pytest.mark.parametrize(
    "field, value",
    [
        ("group_size", 1),
        ("group_size", 2.5),
        ("steps", -1),
        ("clip_epsilon", 1.0),
        ("learning_rate", 0),
        ("jitter", 1e-2),
        ("epsilon", -1e-6),
        ("algorithm", "PPO"),
        ("smi", "facility"),
        ("within_mode_noise", 0.5),
        ("n_modes", 9),
        ("embed_dim", 5),
        ("dominant_prob", 1.0),
        ("max_len", 0),
        ("cosine_wrong_max", 0.1),
        ("seed", True),
        ("temperature", "hot"),
    ],
)
def test_bad_field_named(field, value):
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict({field: value})
    assert exc.value.field == field


def test_unknown_field(tmp_path):
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict({"stepz": 3})
    assert exc.value.field == "stepz"
    p = tmp_path / "c.json"
    p.write_text("{oops")
    with pytest.raises(ConfigError):
        RunConfig.load(p)
    p.write_text(json.dumps([1, 2]))
    with pytest.raises(ConfigError):
        RunConfig.load(p)


def test_int_accepted_for_float():
    assert RunConfig.from_dict({"learning_rate": 1}).learning_rate == 1.0
