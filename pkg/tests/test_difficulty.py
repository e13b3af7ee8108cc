import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fastgrpo.core import Tier
from fastgrpo.difficulty import (
    batch_threshold,
    combined_difficulty,
    difficulty_tier,
    extrinsic_difficulty,
    score,
)


@pytest.mark.parametrize("c, k, expected", [(0, 8, 1.0), (8, 8, 0.0), (6, 8, 0.25), (2, 8, 0.75), (1, 3, 2 / 3)])
def test_extrinsic_difficulty(c, k, expected):
    assert extrinsic_difficulty(c, k) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("c, k", [(-1, 4), (5, 4), (0, 0)])
def test_extrinsic_difficulty_rejects(c, k):
    with pytest.raises(ValueError):
        extrinsic_difficulty(c, k)


def test_combined_examples():
    assert combined_difficulty(0.5, 0.4) == pytest.approx(0.2, abs=1e-15)
    assert combined_difficulty(0.5, 0.4, "weighted_sum", 0.5) == pytest.approx(0.45, abs=1e-15)
    assert combined_difficulty(1.0, 0.0, "weighted_sum", 0.25) == 0.25
    with pytest.raises(ValueError):
        combined_difficulty(0.5, 0.5, "geometric")
    with pytest.raises(ValueError):
        combined_difficulty(1.2, 0.5)


def test_combination_grid_substitution():
    grid = np.linspace(0.0, 1.0, 10)
    for s in grid:
        for h in grid:
            assert abs(combined_difficulty(s, h) - s * h) <= 1e-12
            assert abs(combined_difficulty(s, h, "weighted_sum", 0.3) - (0.3 * s + 0.7 * h)) <= 1e-12


@pytest.mark.parametrize(
    "p, tier",
    [(1.0, Tier.EASY), (0.75, Tier.EASY), (0.74, Tier.MEDIUM), (0.5, Tier.MEDIUM), (0.26, Tier.MEDIUM), (0.25, Tier.HARD), (0.0, Tier.HARD)],
)
def test_tier_boundaries_inclusive(p, tier):
    assert difficulty_tier(p) is tier


def test_score_bundle():
    s = score(6, 8, 0.5)
    assert (s.s_extrinsic, s.s_difficulty, s.tier) == (0.25, 0.125, Tier.EASY)


@pytest.mark.parametrize(
    "scores, p, expected",
    [([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0], 0.8, 0.8), ([3.0, 1.0, 2.0], 0.8, 3.0), ([5.0], 0.8, 5.0), ([1, 2, 3, 4], 0.5, 2)],
)
def test_batch_threshold_nearest_rank(scores, p, expected):
    assert batch_threshold(scores, p) == expected


@given(st.lists(st.floats(0, 1), min_size=1, max_size=64), st.floats(0.01, 1.0))
def test_batch_threshold_is_a_member_with_enough_mass_below(scores, p):
    theta = batch_threshold(scores, p)
    assert theta in scores
    below = sum(s <= theta for s in scores)
    assert below >= p * len(scores) - 1e-9


def test_batch_threshold_rejects_empty():
    with pytest.raises(ValueError):
        batch_threshold([])
