"""Reward components: accuracy, format, and the length-shaping schemes.

``fast_length_reward`` is the difficulty-aware shaping used for training; the
Kimi, cosine and DAST rewards are the baselines it is compared against, and the
pilot rewards push length uniformly up or down.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional

SCHEMES = ("fast", "kimi", "cosfn", "dast", "pilot_lengthy", "pilot_short", "none")

# cosine reward endpoints: (reward at t=0, reward at t=T)
COS_CORRECT = (1.0, 0.5)
COS_WRONG = (-1.0, 0.0)


@dataclass(frozen=True)
class LengthContext:
    """Length statistics a single rollout's length reward may depend on.

    L_avg is the batch mean length, min_len/max_len the group extremes,
    n_correct/group_size the group's pass counts and mean_correct_len the mean
    length of the group's correct responses (None when none were correct).
    """

    L: float
    L_avg: float = 0.0
    L_max: float = 64
    min_len: float = 0.0
    max_len: float = 0.0
    n_correct: int = 0
    group_size: int = 1
    mean_correct_len: Optional[float] = None

    @property
    def t_over_T(self) -> float:
        return self.L / self.L_max


def accuracy_reward(rollout) -> float:
    return 1.0 if rollout.correct else 0.0


_FORMAT_RE = re.compile(r"\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*", re.DOTALL)
_TAG_RE = re.compile(r"</?(?:think|answer)>")


def format_reward(text: str) -> float:
    """1.0 for exactly one <think>...</think> followed by exactly one <answer>...</answer>."""
    m = _FORMAT_RE.fullmatch(text)
    if m is None:
        return 0.0
    if _TAG_RE.search(m.group(1)) or _TAG_RE.search(m.group(2)):
        return 0.0
    return 1.0


def fast_length_reward(ctx: LengthContext, s_d: float, theta: float, r_a: float) -> float:
    if ctx.L_avg <= 0:
        raise ValueError(f"L_avg must be positive, got {ctx.L_avg}")
    ratio = ctx.L / ctx.L_avg
    if s_d < theta and r_a == 1:
        # shorter-than-average correct answers on simple questions; floor at -1
        return max(1.0 - ratio, -1.0)
    if s_d >= theta and r_a == 0:
        return min(ratio - 1.0, 1.0)
    return 0.0


def kimi_length_penalty(ctx: LengthContext, correct: bool) -> float:
    if ctx.max_len == ctx.min_len:
        return 0.0
    base = 0.5 - (ctx.L - ctx.min_len) / (ctx.max_len - ctx.min_len)
    return base if correct else min(0.0, base)


def cosine_length_reward(
    ctx: LengthContext,
    correct: bool,
    correct_endpoints: tuple[float, float] = COS_CORRECT,
    wrong_endpoints: tuple[float, float] = COS_WRONG,
) -> float:
    t, T = ctx.L, ctx.L_max
    if t > T or t < 0:
        raise ValueError(f"generation length {t} outside [0, {T}]")
    at_zero, at_end = correct_endpoints if correct else wrong_endpoints
    return at_end + 0.5 * (at_zero - at_end) * (1.0 + math.cos(t * math.pi / T))


def dast_budget(ctx: LengthContext) -> float:
    if ctx.n_correct == 0 or ctx.mean_correct_len is None:
        return float(ctx.L_max)
    p = ctx.n_correct / ctx.group_size
    return p * ctx.mean_correct_len + (1.0 - p) * ctx.L_max


def dast_length_reward(ctx: LengthContext, correct: bool) -> float:
    budget = dast_budget(ctx)
    if budget <= 0:
        raise ValueError(f"length budget must be positive, got {budget}")
    lam = (ctx.L - budget) / budget
    if correct:
        return max(-0.5 * lam + 0.5, 0.1)
    return min(0.9 * lam - 0.1, -0.1)


def pilot_length_reward(ctx: LengthContext, correct: bool, mode: str) -> float:
    if not correct:
        return 0.0
    frac = ctx.L / ctx.L_max
    if mode == "lengthy":
        return frac
    if mode == "short":
        return 1.0 - frac
    raise ValueError(f"unknown pilot mode {mode!r}")


def total_reward(r_a: float, r_f: float, r_t: float, lambda_f: float, lambda_t: float) -> float:
    return r_a + lambda_f * r_f + lambda_t * r_t


def length_reward(scheme: str, ctx: LengthContext, correct: bool, s_d: float = 0.0, theta: float = 0.0) -> float:
    """Dispatch to the length reward of ``scheme``."""
    if scheme == "fast":
        return fast_length_reward(ctx, s_d, theta, 1.0 if correct else 0.0)
    if scheme == "kimi":
        return kimi_length_penalty(ctx, correct)
    if scheme == "cosfn":
        return cosine_length_reward(ctx, correct)
    if scheme == "dast":
        return dast_length_reward(ctx, correct)
    if scheme == "pilot_lengthy":
        return pilot_length_reward(ctx, correct, "lengthy")
    if scheme == "pilot_short":
        return pilot_length_reward(ctx, correct, "short")
    if scheme == "none":
        return 0.0
    raise ValueError(f"unknown reward scheme {scheme!r}")
