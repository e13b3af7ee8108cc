"""Difficulty-based batch selection over the question bank.

Filters read each question's current extrinsic difficulty (1 - pass@k), so
Easy means ``s_ext <= easy_cut`` and Hard means ``s_ext >= hard_cut``.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .core import CurriculumExhausted, Question

STRATEGIES = ("slow_to_fast_binary", "slow_to_fast_continuous", "fast_to_slow", "dynamic", "none")


def _early(epoch: int, total_epochs: int) -> bool:
    return epoch <= total_epochs // 2


def binary_slow_to_fast_filter(s_ext: float, epoch: int, total_epochs: int, easy_cut: float = 0.25, hard_cut: float = 0.75) -> bool:
    """Drop easy questions in the first half of training, hard ones in the second."""
    if _early(epoch, total_epochs):
        return s_ext > easy_cut
    return s_ext < hard_cut


def fast_to_slow_filter(s_ext: float, epoch: int, total_epochs: int, easy_cut: float = 0.25, hard_cut: float = 0.75) -> bool:
    if _early(epoch, total_epochs):
        return s_ext < hard_cut
    return s_ext > easy_cut


def dynamic_filter(s_ext: float, easy_cut: float = 0.25, hard_cut: float = 0.75) -> bool:
    return easy_cut < s_ext < hard_cut


def continuous_easy_probability(t: int, T: int, p_max: float = 0.4) -> float:
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 <= t <= T:
        raise ValueError(f"epoch index {t} outside [0, {T}]")
    return p_max * t / T


def keep(strategy: str, s_ext: float, epoch: int, total_epochs: int, easy_cut: float = 0.25, hard_cut: float = 0.75) -> bool:
    if strategy == "slow_to_fast_binary":
        return binary_slow_to_fast_filter(s_ext, epoch, total_epochs, easy_cut, hard_cut)
    if strategy == "fast_to_slow":
        return fast_to_slow_filter(s_ext, epoch, total_epochs, easy_cut, hard_cut)
    if strategy == "dynamic":
        return dynamic_filter(s_ext, easy_cut, hard_cut)
    if strategy in ("none", "slow_to_fast_continuous"):
        return True
    raise ValueError(f"unknown sampling strategy {strategy!r}")


def _score(q: Question, scores: Mapping[str, float] | None) -> float:
    s = scores.get(q.id) if scores is not None else q.extrinsic_difficulty
    if s is None:
        raise ValueError(f"question {q.id!r} has no extrinsic difficulty yet; run a warmup pass first")
    return s


def kept_questions(
    bank: Sequence[Question],
    strategy: str,
    epoch: int,
    total_epochs: int,
    easy_cut: float = 0.25,
    hard_cut: float = 0.75,
    scores: Mapping[str, float] | None = None,
) -> list[Question]:
    """Questions passing the strategy's filter; ``scores`` overrides the cached difficulties."""
    if strategy == "none":
        return list(bank)
    return [q for q in bank if keep(strategy, _score(q, scores), epoch, total_epochs, easy_cut, hard_cut)]


def sample_batch(
    bank: Sequence[Question],
    strategy: str,
    epoch: int,
    batch_size: int,
    rng_seed: int | np.random.Generator,
    total_epochs: int = 10,
    easy_cut: float = 0.25,
    hard_cut: float = 0.75,
    p_max: float = 0.4,
    scores: Mapping[str, float] | None = None,
) -> list[Question]:
    """Draw a batch for ``epoch`` (1-based).

    The continuous schedule maps epochs 1..N onto t = 0..N-1 so the easy
    probability runs from 0 at the first epoch to ``p_max`` at the last.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if strategy == "slow_to_fast_continuous":
        easy = [q for q in bank if _score(q, scores) <= easy_cut]
        rest = [q for q in bank if _score(q, scores) > easy_cut]
        if not easy and not rest:
            raise CurriculumExhausted(strategy, epoch)
        p_easy = continuous_easy_probability(epoch - 1, max(total_epochs - 1, 1), p_max) if total_epochs > 1 else p_max
        out = []
        for u in rng.random(batch_size):
            pool = easy if (u < p_easy and easy) or not rest else rest
            out.append(pool[int(rng.integers(len(pool)))])
        return out

    kept = kept_questions(bank, strategy, epoch, total_epochs, easy_cut, hard_cut, scores)
    if not kept:
        raise CurriculumExhausted(strategy, epoch)
    idx = rng.choice(len(kept), size=batch_size, replace=len(kept) < batch_size)
    return [kept[i] for i in idx]
