"""Intrinsic image difficulty from GLCM texture entropy and a semantic entropy term.

All entropies use the natural log. Co-occurrence matrices are accumulated
symmetrically, so an orientation and its 180 degree opposite are equivalent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np


class DegenerateError(ValueError):
    """No valid pixel pair exists for the requested offset(s)."""


class ProviderContractError(ValueError):
    pass


# (row, col) step per unit radius; rows grow downwards, so 90 degrees is "up".
_DIRECTIONS = {0: (0, 1), 45: (-1, 1), 90: (-1, 0), 135: (-1, -1)}


@dataclass(frozen=True)
class GlcmConfig:
    gray_levels: int = 64
    patch_size: int = 64
    radii: tuple[int, ...] = (1, 2, 3, 4)
    orientations: tuple[int, ...] = (0, 45, 90, 135)

    def __post_init__(self):
        if self.gray_levels < 2:
            raise ValueError("gray_levels must be >= 2")
        if self.patch_size < 2:
            raise ValueError("patch_size must be >= 2")
        if not self.radii or not self.orientations:
            raise ValueError("radii and orientations must be nonempty")
        if any(r < 1 for r in self.radii):
            raise ValueError("radii must be positive")
        for o in self.orientations:
            if o % 180 not in _DIRECTIONS:
                raise ValueError(f"unsupported orientation {o}; use multiples of 45 degrees")


class SemanticEntropyProvider(Protocol):
    n_classes: int

    def probabilities(self, image: np.ndarray) -> np.ndarray: ...


class HistogramSoftmaxProvider:
    """Deterministic stand-in for an image classifier.

    Softmax (temperature 1) over the normalized 16-bin intensity histogram.
    """

    n_classes = 16

    def __init__(self, temperature: float = 1.0):
        self.temperature = temperature

    def probabilities(self, image: np.ndarray) -> np.ndarray:
        img = np.asarray(image, dtype=np.int64)
        hist = np.bincount((img // (256 // self.n_classes)).ravel(), minlength=self.n_classes)
        z = hist / hist.sum() / self.temperature
        e = np.exp(z - z.max())
        return e / e.sum()


class FixedProvider:
    """Returns the same distribution for every image (handy for tests and ablations)."""

    def __init__(self, probs: Sequence[float]):
        self.probs = np.asarray(probs, dtype=float)
        self.n_classes = len(self.probs)

    def probabilities(self, image: np.ndarray) -> np.ndarray:
        return self.probs


def quantize_gray(image: np.ndarray, levels: int) -> np.ndarray:
    if levels < 2:
        raise ValueError("levels must be >= 2")
    img = np.asarray(image, dtype=np.int64)
    return (img * levels) // 256


def _pairs(patch: np.ndarray, radius: int, orientation: int) -> tuple[np.ndarray, np.ndarray]:
    dr, dc = _DIRECTIONS[orientation % 180]
    dr, dc = dr * radius, dc * radius
    rows, cols = patch.shape
    r0, r1 = max(0, -dr), rows - max(0, dr)
    c0, c1 = max(0, -dc), cols - max(0, dc)
    if r1 <= r0 or c1 <= c0:
        return patch[:0, :0].ravel(), patch[:0, :0].ravel()
    a = patch[r0:r1, c0:c1]
    b = patch[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
    return a.ravel(), b.ravel()


def glcm(patch: np.ndarray, radius: int, orientation: int, levels: int | None = None) -> np.ndarray:
    """Symmetric co-occurrence probabilities of level pairs at one offset."""
    patch = np.asarray(patch, dtype=np.int64)
    if patch.ndim != 2:
        raise ValueError("patch must be 2-D")
    if levels is None:
        levels = int(patch.max()) + 1 if patch.size else 1
    a, b = _pairs(patch, radius, orientation)
    if a.size == 0:
        raise DegenerateError(f"no pixel pairs at radius {radius}, orientation {orientation} in {patch.shape} patch")
    counts = np.bincount(a * levels + b, minlength=levels * levels).reshape(levels, levels)
    counts = counts + counts.T
    return counts / counts.sum()


def glcm_entropy(matrix: np.ndarray) -> float:
    p = np.asarray(matrix, dtype=float).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _patches(img: np.ndarray, size: int):
    rows, cols = img.shape
    rstarts = range(0, rows - size + 1, size) if rows >= size else [0]
    cstarts = range(0, cols - size + 1, size) if cols >= size else [0]
    for r in rstarts:
        for c in cstarts:
            yield img[r : r + size, c : c + size]


def mean_patch_entropy(image: np.ndarray, cfg: GlcmConfig = GlcmConfig()) -> float:
    """Mean GLCM entropy over non-overlapping patches and all (radius, orientation) pairs.

    Images smaller than ``patch_size`` along an axis are a single patch along that
    axis; trailing pixels that do not fill a whole patch are ignored. Offsets with
    no valid pair in a patch are left out of the average.
    """
    q = quantize_gray(image, cfg.gray_levels)
    total, n = 0.0, 0
    for patch in _patches(q, cfg.patch_size):
        for radius in cfg.radii:
            for orientation in cfg.orientations:
                try:
                    m = glcm(patch, radius, orientation, cfg.gray_levels)
                except DegenerateError:
                    continue
                total += glcm_entropy(m)
                n += 1
    if n == 0:
        raise DegenerateError(f"every patch/offset combination is degenerate for image of shape {np.shape(image)}")
    return total / n


def _checked_distribution(provider: SemanticEntropyProvider, image: np.ndarray) -> np.ndarray:
    p = np.asarray(provider.probabilities(image), dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(~np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ProviderContractError("provider must return a nonnegative vector summing to 1")
    return p


def semantic_entropy(image: np.ndarray, provider: SemanticEntropyProvider) -> float:
    p = _checked_distribution(provider, image)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def image_complexity_raw(image, cfg: GlcmConfig = GlcmConfig(), provider: SemanticEntropyProvider | None = None) -> float:
    """The literal score: minus mean patch entropy minus semantic entropy (always <= 0)."""
    provider = provider or HistogramSoftmaxProvider()
    return -(mean_patch_entropy(image, cfg) + semantic_entropy(image, provider))


def normalize_complexity(patch_entropy: float, sem_entropy: float, gray_levels: int, n_classes: int) -> float:
    texture = patch_entropy / math.log(gray_levels**2)
    semantic = sem_entropy / math.log(n_classes) if n_classes > 1 else 0.0
    return min(1.0, max(0.0, 0.5 * texture + 0.5 * semantic))


def image_complexity_norm(image, cfg: GlcmConfig = GlcmConfig(), provider: SemanticEntropyProvider | None = None) -> float:
    """Complexity in [0, 1], increasing with texture and semantic entropy."""
    provider = provider or HistogramSoftmaxProvider()
    return normalize_complexity(
        mean_patch_entropy(image, cfg), semantic_entropy(image, provider), cfg.gray_levels, provider.n_classes
    )


def image_scores(image, cfg: GlcmConfig = GlcmConfig(), provider: SemanticEntropyProvider | None = None) -> tuple[float, float]:
    """(raw, normalized) computed from a single pass over the image."""
    provider = provider or HistogramSoftmaxProvider()
    e1 = mean_patch_entropy(image, cfg)
    e2 = semantic_entropy(image, provider)
    return -(e1 + e2), normalize_complexity(e1, e2, cfg.gray_levels, provider.n_classes)
