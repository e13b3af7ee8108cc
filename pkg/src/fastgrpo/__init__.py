"""Difficulty-aware GRPO with length shaping, adaptive KL and curriculum sampling on a toy policy."""

__version__ = "0.1.0"
