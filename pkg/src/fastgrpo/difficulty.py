"""Question difficulty: pass@k based extrinsic score, combination with image complexity, tiers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .core import Tier

EASY_PASS = 0.75
HARD_PASS = 0.25


@dataclass(frozen=True)
class DifficultyScore:
    s_extrinsic: float
    h_image: float
    s_difficulty: float
    tier: Tier


def extrinsic_difficulty(c: int, k: int) -> float:
    if k < 1 or c < 0 or c > k:
        raise ValueError(f"need 0 <= c <= k and k >= 1, got c={c}, k={k}")
    return 1.0 - c / k


def combined_difficulty(s_ext: float, h_img: float, mode: str = "multiplicative", alpha: float = 0.5) -> float:
    if not (0.0 <= s_ext <= 1.0 and 0.0 <= h_img <= 1.0):
        raise ValueError(f"difficulty inputs must lie in [0, 1], got {s_ext}, {h_img}")
    if mode == "multiplicative":
        return s_ext * h_img
    if mode == "weighted_sum":
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        return alpha * s_ext + (1.0 - alpha) * h_img
    raise ValueError(f"unknown combine mode {mode!r}")


def difficulty_tier(pass_at_k: float, easy_pass: float = EASY_PASS, hard_pass: float = HARD_PASS) -> Tier:
    if pass_at_k >= easy_pass:
        return Tier.EASY
    if pass_at_k <= hard_pass:
        return Tier.HARD
    return Tier.MEDIUM


def score(c: int, k: int, h_img: float, mode: str = "multiplicative", alpha: float = 0.5) -> DifficultyScore:
    s_ext = extrinsic_difficulty(c, k)
    return DifficultyScore(s_ext, h_img, combined_difficulty(s_ext, h_img, mode, alpha), difficulty_tier(c / k))


def batch_threshold(scores: Sequence[float], percentile: float = 0.8) -> float:
    """Nearest-rank percentile: always one of the given scores."""
    if len(scores) == 0:
        raise ValueError("batch_threshold of an empty batch")
    if not 0.0 < percentile <= 1.0:
        raise ValueError("percentile must lie in (0, 1]")
    ordered = sorted(scores)
    # guard against 0.8 * 10 = 8.000000000000002 style round-up
    rank = math.ceil(round(percentile * len(ordered), 9))
    return ordered[max(rank, 1) - 1]
