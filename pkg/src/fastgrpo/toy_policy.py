"""A two-parameter-per-tier sequence policy with exact log-likelihood gradients.

A response is ``L`` THINK tokens, one STOP and one ANSWER token. Each step
continues with probability ``p = sigmoid(continue_logit)``; the answer is
correct with probability ``competence(L + softplus(care_logit))``. When the
THINK run reaches ``max_len - 2`` the STOP is forced (log-probability 0), so the
response never exceeds ``max_len`` tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ANSWER_CORRECT, ANSWER_WRONG, STOP, THINK, TIERS, Rollout, Tier

PARAM_NAMES = ("continue_logit", "care_logit")


@dataclass(frozen=True)
class SyntheticTask:
    tier: Tier
    q_min: float
    q_max: float
    L_star: float
    image_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.q_min <= self.q_max <= 1.0:
            raise ValueError("need 0 <= q_min <= q_max <= 1")
        if self.L_star <= 0:
            raise ValueError("L_star must be positive")


DEFAULT_TASKS = {
    Tier.EASY: SyntheticTask(Tier.EASY, 0.6, 0.9, 2.0),
    Tier.MEDIUM: SyntheticTask(Tier.MEDIUM, 0.3, 0.85, 6.0),
    Tier.HARD: SyntheticTask(Tier.HARD, 0.05, 0.7, 16.0),
}


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def softplus(x: float) -> float:
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def competence(L: float, task: SyntheticTask) -> float:
    return task.q_min + (task.q_max - task.q_min) * (1.0 - math.exp(-L / task.L_star))


def competence_slope(L: float, task: SyntheticTask) -> float:
    return (task.q_max - task.q_min) / task.L_star * math.exp(-L / task.L_star)


class ToyPolicy:
    """Parameters are a (3, 2) array: rows Easy/Medium/Hard, columns continue/care logits."""

    def __init__(self, params=None, max_len: int = 64):
        if max_len < 2:
            raise ValueError("max_len must leave room for STOP and ANSWER")
        self.params = np.zeros((len(TIERS), 2)) if params is None else np.array(params, dtype=float).reshape(len(TIERS), 2)
        if not np.all(np.isfinite(self.params)):
            raise ValueError("policy parameters must be finite")
        self.max_len = max_len

    @classmethod
    def initial(cls, continue_logit: float = 3.5, care_logit: float = 12.0, max_len: int = 64) -> "ToyPolicy":
        return cls(np.tile([continue_logit, care_logit], (len(TIERS), 1)), max_len)

    @property
    def think_cap(self) -> int:
        return self.max_len - 2

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.params.copy(), self.max_len)

    def with_params(self, flat) -> "ToyPolicy":
        return ToyPolicy(np.asarray(flat, dtype=float).reshape(self.params.shape), self.max_len)

    @property
    def flat(self) -> np.ndarray:
        return self.params.ravel().copy()

    def continue_prob(self, tier: Tier) -> float:
        return sigmoid(self.params[tier.index, 0])

    def care_bonus(self, tier: Tier) -> float:
        return softplus(self.params[tier.index, 1])

    def to_dict(self) -> dict:
        d = {"max_len": self.max_len}
        for tier in TIERS:
            for j, name in enumerate(PARAM_NAMES):
                d[f"{tier.value.lower()}.{name}"] = float(self.params[tier.index, j])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ToyPolicy":
        params = [[d[f"{t.value.lower()}.{n}"] for n in PARAM_NAMES] for t in TIERS]
        return cls(params, int(d.get("max_len", 64)))

    # -- per-token quantities -------------------------------------------------

    def token_logprobs(self, rollout: Rollout, task: SyntheticTask) -> np.ndarray:
        return token_logprobs(self, rollout.think_length, bool(rollout.correct), task)

    def token_grads(self, rollout: Rollout, task: SyntheticTask) -> np.ndarray:
        """d log pi(token) / d params, shape (n_tokens, 6)."""
        L = rollout.think_length
        p = self.continue_prob(task.tier)
        care = self.params[task.tier.index, 1]
        g = np.zeros((L + 2, self.params.size))
        ci, ki = 2 * task.tier.index, 2 * task.tier.index + 1
        g[:L, ci] = 1.0 - p
        if L < self.think_cap:
            g[L, ci] = -p
        g[L + 1, ki] = _answer_care_grad(L, self.care_bonus(task.tier), care, bool(rollout.correct), task)
        return g


def _answer_care_grad(L: int, bonus: float, care_logit: float, correct: bool, task: SyntheticTask) -> float:
    eff = L + bonus
    q = competence(eff, task)
    dq = competence_slope(eff, task) * sigmoid(care_logit)
    if correct:
        return dq / q if q > 0 else 0.0
    return -dq / (1.0 - q) if q < 1 else 0.0


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def token_logprobs(policy: ToyPolicy, L: int, correct: bool, task: SyntheticTask) -> np.ndarray:
    theta = policy.params[task.tier.index, 0]
    # log sigmoid(x) and log(1 - sigmoid(x)) without cancellation
    log_p = -softplus(-theta)
    log_stop = -softplus(theta)
    q = competence(L + policy.care_bonus(task.tier), task)
    out = np.empty(L + 2)
    out[:L] = log_p
    out[L] = log_stop if L < policy.think_cap else 0.0
    out[L + 1] = _log(q) if correct else _log(1.0 - q)
    return out


def rollout_logprob(policy: ToyPolicy, rollout: Rollout, task: SyntheticTask) -> float:
    return float(np.sum(policy.token_logprobs(rollout, task)))


def rollout_grad(policy: ToyPolicy, rollout: Rollout, task: SyntheticTask) -> np.ndarray:
    """Gradient of the sequence log-probability w.r.t. this tier's (continue, care) logits."""
    g = policy.token_grads(rollout, task).sum(axis=0)
    i = task.tier.index
    return g[2 * i : 2 * i + 2]


def sample_response(
    policy: ToyPolicy,
    task: SyntheticTask,
    rng: np.random.Generator,
    old: Optional[ToyPolicy] = None,
    ref: Optional[ToyPolicy] = None,
) -> Rollout:
    """Sample from ``policy``; ``old`` and ``ref`` default to ``policy`` itself."""
    p = policy.continue_prob(task.tier)
    if p >= 1.0:
        L = policy.think_cap
    else:
        L = min(int(rng.geometric(1.0 - p)) - 1, policy.think_cap)
    q = competence(L + policy.care_bonus(task.tier), task)
    correct = bool(rng.random() < q)
    tokens = np.full(L + 2, THINK, dtype=np.int64)
    tokens[L] = STOP
    tokens[L + 1] = ANSWER_CORRECT if correct else ANSWER_WRONG
    lp = token_logprobs(policy, L, correct, task)
    lp_old = lp if old is None else token_logprobs(old, L, correct, task)
    lp_ref = lp if ref is None else token_logprobs(ref, L, correct, task)
    return Rollout(tokens, lp, lp_old, lp_ref, correct=correct, format_ok=True)


def expected_think_length(policy: ToyPolicy, tier: Tier) -> float:
    """Mean THINK count under truncation at ``think_cap``."""
    p = policy.continue_prob(tier)
    n = policy.think_cap
    # E[min(G, n)] for G geometric on {0,1,...} with continue prob p
    return p * (1.0 - p**n) / (1.0 - p) if p < 1.0 else float(n)


def length_distribution(policy: ToyPolicy, tier: Tier) -> np.ndarray:
    """P(THINK count = L) for L = 0..think_cap, including the forced stop at the cap."""
    p = policy.continue_prob(tier)
    n = policy.think_cap
    L = np.arange(n + 1)
    probs = p**L * (1.0 - p)
    probs[n] = p**n
    return probs


def expected_metrics(policy: ToyPolicy, task: SyntheticTask) -> tuple[float, float]:
    """Exact (accuracy, mean response length in tokens) for one task."""
    probs = length_distribution(policy, task.tier)
    L = np.arange(len(probs))
    eff = L + policy.care_bonus(task.tier)
    q = task.q_min + (task.q_max - task.q_min) * (1.0 - np.exp(-eff / task.L_star))
    return float(probs @ q), float(probs @ (L + 2))
