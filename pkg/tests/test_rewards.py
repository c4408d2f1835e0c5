import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dragrpo.rewards import (
    THINK_CLOSE,
    LengthOutOfRange,
    RewardConfig,
    UnknownComponent,
    accuracy_reward,
    combined_reward,
    cosine_reward,
    count_think_close,
    extract_answer,
    format_reward,
    score_completion,
)


def test_accuracy_fixtures():
    assert accuracy_reward("1007", "1007") == 1.0
    assert accuracy_reward("1007 ", "1007") == 1.0
    assert accuracy_reward("1006", "1007") == 0.0
    assert accuracy_reward("ABC", " abc\n") == 1.0


def test_format_fixtures():
    assert format_reward("reasoning\n</think>\nanswer") == 1.0
    assert format_reward("a\n</think>\nb\n</think>\nc") == 0.0
    assert format_reward("reasoning </think> answer") == 0.0
    assert format_reward("") == 0.0


def test_cosine_fixtures():
    cfg = RewardConfig()
    assert cosine_reward(True, 0, cfg) == 1.0
    assert cosine_reward(True, 1000, cfg) == pytest.approx(0.5, abs=1e-15)
    mid = RewardConfig(cosine_correct_range=(0.0, 1.0), max_len=1000)
    assert cosine_reward(True, 500, mid) == pytest.approx(0.5, abs=1e-15)
    assert cosine_reward(False, 0, cfg) == -1.0
    assert cosine_reward(False, 1000, cfg) == pytest.approx(-0.5, abs=1e-15)
    with pytest.raises(LengthOutOfRange):
        cosine_reward(True, 1001, cfg)
    with pytest.raises(LengthOutOfRange):
        cosine_reward(True, -1, cfg)


def test_combined_fixtures():
    assert combined_reward({"format": 1.0, "cosine": 0.891}) == pytest.approx(2.782, abs=1e-12)
    assert combined_reward({"format": 0.0, "cosine": 0.0}) == 0.0
    assert combined_reward({"format": 1.0, "cosine": 0.0}) == 1.0
    with pytest.raises(UnknownComponent):
        combined_reward({"accuracy": 1.0})


def test_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(weights={"format": -1.0})
    with pytest.raises(ValueError):
        RewardConfig(max_len=0)
    with pytest.raises(ValueError):
        RewardConfig(cosine_correct_range=(1.0, 0.5))
    with pytest.raises(ValueError):
        RewardConfig(cosine_wrong_range=(-0.5, 0.1))


def test_score_completion():
    text = "let me think\n</think>\n1007"
    assert extract_answer(text) == "\n1007"
    cfg = RewardConfig()
    c = 0.5 * (1 + math.cos(math.pi * len(text) / 1000))
    assert score_completion(text, "1007") == pytest.approx(1.0 + 2.0 * (0.5 + 0.5 * c), abs=1e-15)
    assert score_completion(text, "1006", cfg) == pytest.approx(1.0 + 2.0 * (-0.5 - 0.5 * c), abs=1e-15)
    assert score_completion("no tags", "x", cfg, answer="x") > 0


alphabet = st.sampled_from(["\n", "</think>", "a", " ", "<", "/think>", "\n</think>\n"])


@given(st.lists(alphabet, max_size=12).map("".join))
def test_format_depends_on_tag_count(text):
    count = sum(1 for i in range(len(text)) if text.startswith(THINK_CLOSE, i))
    assert count_think_close(text) == count
    assert format_reward(text) == (1.0 if count == 1 else 0.0)


@given(st.integers(0, 999), st.booleans())
def test_cosine_monotone(length, correct):
    cfg = RewardConfig()
    a, b = cosine_reward(correct, length, cfg), cosine_reward(correct, length + 1, cfg)
    if correct:
        assert b <= a
    else:
        assert b >= a


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_combined_linear(f, c, df, k):
    base = combined_reward({"format": f, "cosine": c})
    moved = combined_reward({"format": f + k * df, "cosine": c})
    assert moved - base == pytest.approx(k * df * 1.0, abs=1e-9)
