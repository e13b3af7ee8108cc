import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fastgrpo.core import TIERS, NumericalError, Rollout, RolloutGroup
from fastgrpo.grpo import (
    adaptive_beta,
    clipped_surrogate_term,
    gradient_coefficient,
    grpo_objective,
    group_advantages,
    kl_value,
    objective_gradient,
    policy_update_step,
)
from fastgrpo.toy_policy import DEFAULT_TASKS, ToyPolicy, sample_response

from oracles import central_difference


def _fixed_rollout(logp_new, logp_old=None, logp_ref=None, correct=True):
    n = len(logp_new)
    return Rollout(
        np.zeros(n, dtype=np.int64),
        logp_new,
        logp_new if logp_old is None else logp_old,
        logp_new if logp_ref is None else logp_ref,
        correct,
    )


def random_setup(seed, max_len=16):
    """Random policy, behaviour/reference policies and scored groups on the toy task."""
    rng = np.random.default_rng(seed)
    policy = ToyPolicy(rng.normal(0.5, 1.0, 6), max_len=max_len)
    old = policy.with_params(policy.flat + rng.normal(0, 0.15, 6))
    ref = policy.with_params(policy.flat + rng.normal(0, 0.4, 6))
    groups, tasks = [], {}
    for gi in range(int(rng.integers(1, 4))):
        task = DEFAULT_TASKS[TIERS[int(rng.integers(3))]]
        qid = f"q{gi}"
        tasks[qid] = task
        G = int(rng.integers(2, 7))
        rollouts = [sample_response(old, task, rng, old=old, ref=ref) for _ in range(G)]
        rewards = rng.normal(size=G)
        groups.append(RolloutGroup(qid, rollouts, rewards=list(rewards), advantages=list(group_advantages(rewards))))
    betas = list(rng.uniform(0.001, 0.03, len(groups)))
    return policy, groups, betas, tasks


# -- advantages ----------------------------------------------------------------


def test_advantage_examples():
    assert np.allclose(group_advantages([1, 0, 1, 0]), [1, -1, 1, -1], atol=1e-5)
    assert np.array_equal(group_advantages([0.3] * 5), np.zeros(5))
    a = group_advantages([0.0, 0.0, 3.0])
    # mean 1, population std sqrt(2)
    assert a[2] == pytest.approx(2 / (math.sqrt(2) + 1e-6), abs=1e-12)
    with pytest.raises(ValueError):
        group_advantages([1.0])


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=16))
def test_advantage_properties(rewards):
    a = group_advantages(rewards)
    if max(rewards) == min(rewards):
        assert np.all(a == 0)
        return
    assert abs(a.mean()) <= 1e-9
    if np.std(rewards) > 1e-3:
        assert 0.999 <= a.std() <= 1.0
    order = np.argsort(rewards, kind="stable")
    assert np.all(np.diff(a[order]) >= -1e-12)


@given(
    st.lists(st.integers(-20, 20), min_size=2, max_size=16),
    st.floats(0.1, 10),
    st.floats(-5, 5),
)
def test_advantages_invariant_to_scale_and_shift(rewards, scale, shift):
    a = group_advantages([float(r) for r in rewards])
    b = group_advantages([scale * r + shift for r in rewards])
    assert np.allclose(a, b, atol=1e-5)


# -- beta, KL, surrogate ---------------------------------------------------------


def test_adaptive_beta_endpoints():
    assert adaptive_beta(1.0) == 0.001
    assert adaptive_beta(0.0) == 0.03
    assert adaptive_beta(0.5) == pytest.approx(0.0155, abs=1e-15)
    with pytest.raises(ValueError):
        adaptive_beta(1.1)


@pytest.mark.parametrize("d, expected", [(0.0, 0.0), (1.0, math.e - 2.0), (-1.0, math.exp(-1) - 0.0)])
def test_kl_closed_forms(d, expected):
    # d = logp_ref - logp_new
    assert kl_value(-1.0, -1.0 + d) == pytest.approx(expected, abs=1e-12)


def test_kl_vectorized():
    out = kl_value(np.array([-1.0, -2.0]), np.array([-1.0, -1.0]))
    assert out.shape == (2,) and out[0] == 0.0 and out[1] == pytest.approx(math.e - 2.0, abs=1e-12)


@pytest.mark.parametrize(
    "ratio, adv, expected",
    [(1.5, 1.0, 1.2), (0.5, 1.0, 0.5), (0.5, -1.0, -0.8), (1.5, -1.0, -1.5), (1.1, 2.0, 2.2), (1.0, 0.0, 0.0)],
)
def test_clipped_surrogate_examples(ratio, adv, expected):
    assert clipped_surrogate_term(ratio, adv, 0.2) == pytest.approx(expected, abs=1e-15)


def test_gradient_coefficient_examples():
    assert gradient_coefficient(1.0, 0.02, 1.0) == 1.0
    assert gradient_coefficient(0.5, 0.02, 2.0) == pytest.approx(0.52, abs=1e-15)
    assert gradient_coefficient(-1.0, 0.03, 0.5) == pytest.approx(-1.015, abs=1e-15)
    with pytest.raises(ValueError):
        gradient_coefficient(1.0, 0.01, 0.0)


# -- objective ---------------------------------------------------------------------


def test_objective_on_policy_zero_kl():
    lp = np.log([0.5, 0.25])
    g = RolloutGroup("q", [_fixed_rollout(lp), _fixed_rollout(lp)], rewards=[1.0, 0.0], advantages=[1.0, -1.0])
    res = grpo_objective([g], [0.01])
    assert res.loss == pytest.approx(0.0, abs=1e-15)
    assert res.diagnostics.mean_ratio == 1.0 and res.diagnostics.clip_fraction == 0.0 and res.diagnostics.mean_kl == 0.0


def test_objective_hand_computed():
    # one group, two rollouts of 1 and 2 tokens
    r1 = _fixed_rollout(np.log([0.6]), logp_old=np.log([0.4]), logp_ref=np.log([0.6]))
    r2 = _fixed_rollout(np.log([0.5, 0.5]), logp_old=np.log([0.5, 0.5]), logp_ref=np.log([0.25, 0.5]))
    g = RolloutGroup("q", [r1, r2], rewards=[1, 0], advantages=[1.0, -1.0])
    beta = 0.02
    term1 = min(1.5, 1.2) * 1.0  # clipped
    kl_tok = 0.5 - math.log(0.5) - 1.0
    term2 = (-1.0 - beta * kl_tok + -1.0) / 2
    expected = (term1 + term2) / 2
    res = grpo_objective([g], [beta])
    assert -res.loss == pytest.approx(expected, abs=1e-12)
    assert res.diagnostics.clip_fraction == pytest.approx(1 / 3, abs=1e-15)
    # clipped token carries no surrogate gradient
    assert res.weights[0][0][0] == 0.0
    assert res.weights[0][1][0] == pytest.approx((-1.0 + beta * (0.5 - 1.0)) / 4, abs=1e-15)


def test_objective_requires_advantages():
    lp = np.log([0.5])
    g = RolloutGroup("q", [_fixed_rollout(lp), _fixed_rollout(lp)])
    with pytest.raises(ValueError):
        grpo_objective([g], [0.01])
    with pytest.raises(ValueError):
        grpo_objective([], [])


def _rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / scale


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_central_differences(seed):
    policy, groups, betas, tasks = random_setup(seed)

    def f(x):
        return objective_gradient(policy.with_params(x), groups, betas, tasks)[0]

    _, grad, _ = objective_gradient(policy, groups, betas, tasks)
    assert _rel_err(grad, central_difference(f, list(policy.flat), 1e-5)) <= 1e-4


def test_kl_gradient_decomposition():
    policy, groups, betas, tasks = random_setup(3)
    zeroed = [RolloutGroup(g.question_id, g.rollouts, rewards=g.rewards, advantages=[0.0] * g.size) for g in groups]
    _, grad, _ = objective_gradient(policy, zeroed, betas, tasks)
    expected = np.zeros(6)
    for g, beta in zip(zeroed, betas):
        task = tasks[g.question_id]
        for r in g.rollouts:
            lp = policy.token_logprobs(r, task)
            # per-token score vectors by finite differences of the token log-probabilities
            for i in range(6):
                e = np.zeros(6)
                e[i] = 1e-6
                dlp = (policy.with_params(policy.flat + e).token_logprobs(r, task) - policy.with_params(policy.flat - e).token_logprobs(r, task)) / 2e-6
                expected[i] += np.sum(beta * (np.exp(r.logp_ref - lp) - 1.0) * dlp) / (len(zeroed) * g.size * len(lp))
    assert np.max(np.abs(grad - expected)) <= 1e-8


def test_update_moves_uphill():
    policy, groups, betas, tasks = random_setup(5)
    before = objective_gradient(policy, groups, betas, tasks)[0]
    new, diag = policy_update_step(policy, groups, betas, tasks, learning_rate=1e-3)
    assert objective_gradient(new, groups, betas, tasks)[0] > before
    assert diag.mean_beta == pytest.approx(np.mean(betas))


def test_update_rejects_non_finite():
    policy, groups, betas, tasks = random_setup(5)
    with pytest.raises(NumericalError):
        policy_update_step(policy, groups, [float("nan")] * len(groups), tasks, learning_rate=1e-3)


def test_update_rejects_overflowing_step():
    policy, groups, betas, tasks = random_setup(5)
    with pytest.raises(NumericalError, match="overflow"):
        policy_update_step(policy, groups, betas, tasks, learning_rate=float("inf"))
