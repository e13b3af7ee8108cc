"""Group-relative advantages, clipped surrogate objective with per-token KL, and its gradient."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import NumericalError, RolloutGroup

STD_EPS = 1e-6


@dataclass(frozen=True)
class StepDiagnostics:
    mean_ratio: float
    clip_fraction: float
    mean_kl: float
    mean_beta: float
    mean_gc: float
    surrogate_loss: float


def group_advantages(rewards: Sequence[float]) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    if r.size < 2:
        raise ValueError("advantages need a group of at least 2 rewards")
    if r.max() == r.min():
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + STD_EPS)


def adaptive_beta(s_ext: float, beta_min: float = 0.001, beta_max: float = 0.03) -> float:
    if not 0.0 <= s_ext <= 1.0:
        raise ValueError(f"s_ext must lie in [0, 1], got {s_ext}")
    if not 0.0 < beta_min <= beta_max:
        raise ValueError("need 0 < beta_min <= beta_max")
    return beta_min + (beta_max - beta_min) * (1.0 - s_ext)


def kl_value(logp_new, logp_ref):
    """Per-token k3 estimate r - ln r - 1 with r = pi_ref / pi_theta."""
    d = np.subtract(logp_ref, logp_new)
    out = np.expm1(d) - d
    return float(out) if np.ndim(out) == 0 else out


def clipped_surrogate_term(ratio: float, advantage: float, eps: float = 0.2) -> float:
    if ratio <= 0:
        raise ValueError("probability ratio must be positive")
    return min(ratio * advantage, min(max(ratio, 1.0 - eps), 1.0 + eps) * advantage)


def gradient_coefficient(advantage: float, beta_d: float, ratio_ref: float) -> float:
    if ratio_ref <= 0:
        raise ValueError("ratio_ref must be positive")
    return advantage + beta_d * (ratio_ref - 1.0)


@dataclass
class ObjectiveResult:
    loss: float
    weights: list[list[np.ndarray]]  # [group][rollout] -> d objective / d logp_new per token
    diagnostics: StepDiagnostics


def grpo_objective(
    groups: Sequence[RolloutGroup],
    betas: Sequence[float],
    eps: float = 0.2,
    logp_new: Sequence[Sequence[np.ndarray]] | None = None,
) -> ObjectiveResult:
    """Negated objective, per-token gradient weights and diagnostics.

    The objective averages over groups, then rollouts, then tokens of each
    rollout: clipped ratio * advantage - beta * kl. ``logp_new`` overrides the
    log-probabilities stored on the rollouts (used when re-evaluating at new
    parameters). Weights are d objective / d logp_new, so the parameter gradient
    is their contraction with the per-token score vectors.
    """
    if len(groups) == 0:
        raise ValueError("objective over an empty batch")
    if len(betas) != len(groups):
        raise ValueError("need one beta per group")
    n_groups = len(groups)
    objective = 0.0
    weights = []
    ratio_sum = kl_sum = gc_sum = 0.0
    n_tok = n_clip = 0
    for gi, (g, beta) in enumerate(zip(groups, betas)):
        if g.size == 0:
            raise ValueError(f"empty group {g.question_id!r}")
        if len(g.advantages) != g.size:
            raise ValueError(f"group {g.question_id!r} has no advantages")
        gw = []
        group_obj = 0.0
        for ri, (ro, adv) in enumerate(zip(g.rollouts, g.advantages)):
            lp = ro.logp_new if logp_new is None else np.asarray(logp_new[gi][ri])
            ratio = np.exp(lp - ro.logp_old)
            lo, hi = 1.0 - eps, 1.0 + eps
            unclipped = ratio * adv
            clipped = np.clip(ratio, lo, hi) * adv
            surr = np.minimum(unclipped, clipped)
            ratio_ref = np.exp(ro.logp_ref - lp)
            kl = np.expm1(ro.logp_ref - lp) - (ro.logp_ref - lp)
            n = len(lp)
            scale = 1.0 / (n_groups * g.size * n)
            group_obj += float(np.sum(surr - beta * kl)) / n
            # ties go to the unclipped branch, which carries the gradient
            active = unclipped <= clipped
            gw.append(scale * (np.where(active, unclipped, 0.0) + beta * (ratio_ref - 1.0)))
            ratio_sum += float(ratio.sum())
            kl_sum += float(kl.sum())
            gc_sum += float(np.sum(adv + beta * (ratio_ref - 1.0)))
            n_clip += int(np.count_nonzero((ratio < lo) | (ratio > hi)))
            n_tok += n
        objective += group_obj / g.size
        weights.append(gw)
    objective /= n_groups
    diag = StepDiagnostics(
        mean_ratio=ratio_sum / n_tok,
        clip_fraction=n_clip / n_tok,
        mean_kl=kl_sum / n_tok,
        mean_beta=float(np.mean(betas)),
        mean_gc=gc_sum / n_tok,
        surrogate_loss=-objective,
    )
    return ObjectiveResult(-objective, weights, diag)


def objective_gradient(policy, groups: Sequence[RolloutGroup], betas, tasks: Mapping, eps: float = 0.2):
    """(objective, gradient w.r.t. policy.flat, diagnostics) at the policy's parameters."""
    lps = [[policy.token_logprobs(r, tasks[g.question_id]) for r in g.rollouts] for g in groups]
    res = grpo_objective(groups, betas, eps, logp_new=lps)
    grad = np.zeros(policy.params.size)
    for g, gw in zip(groups, res.weights):
        task = tasks[g.question_id]
        for r, w in zip(g.rollouts, gw):
            grad += w @ policy.token_grads(r, task)
    return -res.loss, grad, res.diagnostics


def policy_update_step(policy, groups: Sequence[RolloutGroup], betas, tasks: Mapping, learning_rate: float, eps: float = 0.2):
    """One plain gradient-ascent step; returns (new policy, diagnostics)."""
    obj, grad, diag = objective_gradient(policy, groups, betas, tasks, eps)
    if not (math.isfinite(obj) and np.all(np.isfinite(grad))):
        raise NumericalError("non-finite objective or gradient; step rejected")
    with np.errstate(over="ignore", invalid="ignore"):
        flat = policy.flat + learning_rate * grad
    if not np.all(np.isfinite(flat)):
        raise NumericalError("update overflowed the policy parameters; step rejected")
    return policy.with_params(flat), diag
