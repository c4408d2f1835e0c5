import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dragrpo.advantage import (
    ClipConfig,
    NonPositiveRatio,
    StaleSnapshot,
    clipped_surrogate,
    group_advantages,
    policy_gradient_step,
    surrogate_gradient,
    surrogate_objective,
)
from dragrpo.core import AdvantageMode, GroupTooSmall, NonFiniteValue
from dragrpo.policy import Rollout, ToyPolicy

GRPO, DRGRPO = AdvantageMode.GRPO, AdvantageMode.DRGRPO


def test_sqrt2_fixture():
    a = group_advantages([1, 0, 0, 1, 0, 0], GRPO).values
    s = math.sqrt(2.0)
    assert np.allclose(a, [s, -1 / s, -1 / s, s, -1 / s, -1 / s], atol=1e-9)


def test_drgrpo_fixture():
    a = group_advantages([1, 0, 0, 1, 0, 0], DRGRPO).values
    assert np.allclose(a, [2 / 3, -1 / 3, -1 / 3, 2 / 3, -1 / 3, -1 / 3], atol=1e-15)


@pytest.mark.parametrize("mode", [GRPO, DRGRPO])
def test_constant_rewards_give_zeros(mode):
    assert np.array_equal(group_advantages([0.3] * 6, mode).values, np.zeros(6))


def test_std_floor():
    a = group_advantages([1.0, 1.0 + 1e-12], GRPO).values
    assert np.array_equal(a, [0.0, 0.0])
    a = group_advantages([1.0, 1.0 + 1e-12], GRPO, std_floor=0.0).values
    assert np.allclose(a, [-1.0, 1.0])


def test_advantage_errors():
    with pytest.raises(GroupTooSmall):
        group_advantages([1.0])
    with pytest.raises(NonFiniteValue):
        group_advantages([1.0, np.nan])


def test_clipped_surrogate_fixtures():
    for a in (-2.0, 0.0, 3.5):
        assert clipped_surrogate(1.0, a, 0.2) == a
    assert clipped_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert clipped_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    assert clipped_surrogate(0.5, -1.0, ClipConfig(0.2)) == pytest.approx(-0.8)


@pytest.mark.parametrize("r", [0.0, -1.0, math.inf, math.nan])
def test_non_positive_ratio(r):
    with pytest.raises(NonPositiveRatio):
        clipped_surrogate(r, 1.0)


def test_clip_config_validation():
    for eps in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            ClipConfig(epsilon=eps)
    assert ClipConfig(mode="DRGRPO").mode is DRGRPO


# --- properties --------------------------------------------------------------

rewards_st = arrays(np.float64, st.integers(2, 16), elements=st.floats(-100, 100))


@given(rewards_st, st.floats(1e-2, 1e2), st.floats(-1e2, 1e2))
def test_grpo_affine_invariance(r, a, b):
    assume(np.ptp(r) > 1e-6)
    base = group_advantages(r, GRPO).values
    assert np.allclose(group_advantages(a * r + b, GRPO).values, base, atol=1e-8, rtol=0)


@given(rewards_st, st.floats(1e-2, 1e2), st.floats(-1e2, 1e2))
def test_drgrpo_shift_invariance_scale_equivariance(r, a, b):
    base = group_advantages(r, DRGRPO).values
    assert np.allclose(group_advantages(r + b, DRGRPO).values, base, atol=1e-8 * (1 + abs(b)))
    assert np.allclose(group_advantages(a * r, DRGRPO).values, a * base, atol=1e-8 * (1 + a))


@given(rewards_st)
def test_zero_mean_and_unit_std(r):
    for mode in (GRPO, DRGRPO):
        v = group_advantages(r, mode).values
        assert abs(v.mean()) <= 1e-8 * max(1.0, np.abs(r).max())
    v = group_advantages(r, GRPO).values
    if np.ptp(r) > 1e-6:
        assert v.std() == pytest.approx(1.0, abs=1e-6)


@given(st.floats(1e-3, 10), st.floats(-10, 10), st.floats(0.01, 0.99))
def test_clip_bounds(r, a, eps):
    v = clipped_surrogate(r, a, eps)
    if a > 0:
        assert v <= (1 + eps) * a + 1e-12
    if a < 0:
        # min() keeps the pessimistic branch, so the bound for negative advantages is
        # an upper one too: v <= clip(r) * a <= (1 - eps) * a (no lower bound as r grows)
        assert v <= (1 - eps) * a + 1e-12
    # the clipped objective never exceeds the unclipped one
    assert v <= r * a + 1e-12


# --- gradient ----------------------------------------------------------------


def random_policy(rng, v, l, scale=1.0):
    return ToyPolicy(v, l, tuple(scale * rng.normal(size=(v**t, v)) for t in range(l)))


def perturbed_rollout(rng, policy, n, spread=0.05):
    """Trajectories whose old probabilities sit near the current ones (ratios inside the band)."""
    trajs = policy.sample(n, rng)
    old = policy.token_probs(trajs) * np.exp(rng.uniform(-spread, spread, size=(n, policy.seq_len)))
    return Rollout(trajs, rng.normal(size=n), old)


def finite_difference(policy, rollout, config, h=1e-6):
    theta = policy.flat()
    out = np.empty_like(theta)
    for k in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h
        out[k] = (
            surrogate_objective(policy.from_flat(up), rollout, config)
            - surrogate_objective(policy.from_flat(dn), rollout, config)
        ) / (2 * h)
    return out


def relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


@pytest.mark.parametrize("mode", [GRPO, DRGRPO])
def test_gradient_matches_finite_differences(mode):
    rng = np.random.default_rng(7)
    for _ in range(10):
        v, l = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        policy = random_policy(rng, v, l)
        rollout = perturbed_rollout(rng, policy, int(rng.integers(2, 7)))
        config = ClipConfig(0.2, mode)
        analytic = np.concatenate([g.reshape(-1) for g in surrogate_gradient(policy, rollout, config)])
        assert relative_error(analytic, finite_difference(policy, rollout, config)) < 1e-5


def test_clipped_region_contributes_nothing():
    rng = np.random.default_rng(3)
    policy = random_policy(rng, 3, 2)
    trajs = policy.sample(4, rng)
    old = policy.token_probs(trajs) / 1.5  # every ratio is 1.5 > 1 + eps
    grads = surrogate_gradient(policy, Rollout(trajs, np.ones(4), old), ClipConfig(0.2))
    assert all(not np.any(g) for g in grads)
    # same for negative advantages below the band
    old = policy.token_probs(trajs) / 0.5
    grads = surrogate_gradient(policy, Rollout(trajs, -np.ones(4), old), ClipConfig(0.2))
    assert all(not np.any(g) for g in grads)


def test_single_trajectory_on_policy_is_reinforce():
    """At ratio 1 the step is A * grad log pi(o) scaled by the sequence weight."""
    rng = np.random.default_rng(11)
    policy = random_policy(rng, 4, 3)
    traj = policy.sample(1, rng)
    adv = 0.7
    rollout = Rollout(traj, np.array([adv]), policy.token_probs(traj))

    def logp(flat):
        return float(np.sum(np.log(policy.from_flat(flat).token_probs(traj))))

    theta = policy.flat()
    h = 1e-6
    fd = np.array(
        [(logp(theta + h * e) - logp(theta - h * e)) / (2 * h) for e in np.eye(theta.size)]
    )
    for mode, weight in ((GRPO, 1 / 3), (DRGRPO, 1.0)):
        new = policy_gradient_step(policy, rollout, ClipConfig(0.2, mode), learning_rate=0.1)
        step = new.flat() - theta
        assert relative_error(step, 0.1 * weight * adv * fd) < 1e-5


def test_zero_advantages_leave_policy_unchanged():
    rng = np.random.default_rng(0)
    policy = random_policy(rng, 3, 2)
    trajs = policy.sample(5, rng)
    new = policy_gradient_step(policy, Rollout(trajs, np.zeros(5), policy.token_probs(trajs)), ClipConfig(), 1.0)
    assert new is policy


def test_stale_snapshot():
    rng = np.random.default_rng(0)
    policy = random_policy(rng, 3, 2)
    trajs = policy.sample(3, rng)
    with pytest.raises(StaleSnapshot):
        policy_gradient_step(policy, Rollout(trajs, np.ones(3)), ClipConfig(), 1.0)
    with pytest.raises(StaleSnapshot):
        policy_gradient_step(policy, Rollout(trajs, np.ones(3), np.ones((2, 2))), ClipConfig(), 1.0)
    bad = policy.token_probs(trajs)
    bad[1, 0] = np.nan
    with pytest.raises(StaleSnapshot):
        policy_gradient_step(policy, Rollout(trajs, np.ones(3), bad), ClipConfig(), 1.0)


def test_ascent_increases_objective():
    rng = np.random.default_rng(5)
    policy = random_policy(rng, 4, 3)
    rollout = perturbed_rollout(rng, policy, 6, spread=0.0)
    config = ClipConfig()
    new = policy_gradient_step(policy, rollout, config, 1e-2)
    assert surrogate_objective(new, rollout, config) > surrogate_objective(policy, rollout, config)
