import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dragrpo.policy import BadTrajectory, ToyPolicy, all_trajectories, decode, encode


@given(st.integers(2, 9), st.integers(1, 4), st.data())
def test_encode_decode_roundtrip(v, l, data):
    idx = data.draw(st.integers(0, v**l - 1))
    assert encode(decode(idx, v, l), v) == idx


def test_all_trajectories_order():
    trajs = all_trajectories(3, 2)
    assert trajs.shape == (9, 2)
    assert [encode(t, 3) for t in trajs] == list(range(9))


@given(st.integers(2, 6), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_state_rows_are_distributions(v, l, seed):
    rng = np.random.default_rng(seed)
    p = ToyPolicy(v, l, tuple(3 * rng.normal(size=(v**t, v)) for t in range(l)))
    for t in range(l):
        assert np.allclose(p.state_probs(t).sum(axis=1), 1.0, atol=1e-9)
    assert p.distribution().sum() == pytest.approx(1.0, abs=1e-9)


def test_biased_hits_requested_probability():
    p = ToyPolicy.biased(8, 3, (0, 0, 2), 0.7)
    assert p.distribution()[encode((0, 0, 2), 8)] == pytest.approx(0.7, abs=1e-12)


def test_from_distribution_is_exact():
    dist = {(0, 1): 0.5, (1, 1): 0.25, (1, 0): 0.25}
    p = ToyPolicy.from_distribution(2, 2, dist)
    full = p.distribution()
    for traj, q in dist.items():
        assert full[encode(traj, 2)] == pytest.approx(q, abs=1e-15)
    assert full[encode((0, 0), 2)] == 0.0


def test_token_probs_match_distribution():
    rng = np.random.default_rng(0)
    p = ToyPolicy(3, 3, tuple(rng.normal(size=(3**t, 3)) for t in range(3)))
    trajs = all_trajectories(3, 3)
    assert np.allclose(p.token_probs(trajs).prod(axis=1), p.distribution(), atol=1e-15)


def test_sampling_frequencies():
    p = ToyPolicy.biased(4, 2, (1, 3), 0.5)
    samples = p.sample(40000, np.random.default_rng(1))
    freq = np.bincount([encode(t, 4) for t in samples], minlength=16) / 40000
    assert np.max(np.abs(freq - p.distribution())) < 0.01


def test_temperature_flattens():
    p = ToyPolicy.biased(4, 1, (2,), 0.9)
    hot = ToyPolicy(4, 1, p.logits, temperature=10.0)
    assert hot.distribution().max() < p.distribution().max()


def test_bad_inputs():
    p = ToyPolicy.uniform(3, 2)
    with pytest.raises(BadTrajectory):
        p.token_probs([[0, 3]])
    with pytest.raises(BadTrajectory):
        p.token_probs([[0, 1, 2]])
    with pytest.raises(ValueError):
        ToyPolicy(3, 2, (np.zeros((1, 3)),))
    with pytest.raises(ValueError):
        ToyPolicy(3, 1, (np.full((1, 3), np.nan),))
    with pytest.raises(ValueError):
        ToyPolicy(3, 1, (np.zeros((1, 3)),), temperature=0.0)


def test_flat_roundtrip():
    rng = np.random.default_rng(2)
    p = ToyPolicy(3, 2, tuple(rng.normal(size=(3**t, 3)) for t in range(2)))
    q = p.from_flat(p.flat())
    assert all(np.array_equal(a, b) for a, b in zip(p.logits, q.logits))
