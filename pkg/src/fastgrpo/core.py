"""Shared data model, validation and (de)serialization.

Questions are read from a JSONL bank whose images live in binary PGM (P5)
files next to it. Rollout logs are JSONL with one object per rollout.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


class FastGrpoError(Exception):
    """Base class for library errors."""


class ParseError(FastGrpoError, ValueError):
    pass


class ImageIOError(FastGrpoError, OSError):
    pass


class ConfigError(FastGrpoError, ValueError):
    pass


class NumericalError(FastGrpoError, ArithmeticError):
    pass


class CurriculumExhausted(FastGrpoError):
    def __init__(self, strategy: str, epoch: int):
        super().__init__(f"curriculum exhausted: strategy={strategy} epoch={epoch} kept no questions")
        self.strategy = strategy
        self.epoch = epoch


class Tier(str, enum.Enum):
    EASY = "Easy"
    MEDIUM = "Medium"
    HARD = "Hard"

    @property
    def index(self) -> int:
        return TIERS.index(self)


TIERS = (Tier.EASY, Tier.MEDIUM, Tier.HARD)

# Toy vocabulary.
THINK, STOP, ANSWER_CORRECT, ANSWER_WRONG = 0, 1, 2, 3


@dataclass(frozen=True)
class Question:
    id: str
    image: np.ndarray
    answer: str
    image_complexity: Optional[float] = None
    extrinsic_difficulty: Optional[float] = None
    tier: Optional[Tier] = None

    def __post_init__(self):
        img = np.asarray(self.image)
        if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
            raise ValueError(f"question {self.id!r}: empty image")
        if img.dtype != np.uint8:
            if img.size and (img.min() < 0 or img.max() > 255):
                raise ValueError(f"question {self.id!r}: pixel values outside [0, 255]")
            img = img.astype(np.uint8)
        img.setflags(write=False)
        object.__setattr__(self, "image", img)
        s = self.extrinsic_difficulty
        if s is not None and not 0.0 <= s <= 1.0:
            raise ValueError(f"question {self.id!r}: extrinsic_difficulty {s} outside [0, 1]")
        if self.tier is not None and not isinstance(self.tier, Tier):
            object.__setattr__(self, "tier", Tier(self.tier))


@dataclass(frozen=True, eq=False)
class Rollout:
    """One sampled response with per-token log-probabilities (nats)."""

    tokens: np.ndarray
    logp_new: np.ndarray
    logp_old: np.ndarray
    logp_ref: np.ndarray
    correct: bool
    format_ok: bool = True

    def __post_init__(self):
        n = len(self.tokens)
        for name in ("logp_new", "logp_old", "logp_ref"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} has {arr.shape[0] if arr.ndim else 0} entries, tokens has {n}")
            if np.any(arr > 0):
                raise ValueError(f"{name} contains a positive log-probability")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "tokens", np.asarray(self.tokens, dtype=np.int64))

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def think_length(self) -> int:
        return int(np.count_nonzero(self.tokens == THINK))


@dataclass(frozen=True)
class RewardBreakdown:
    r_a: float
    r_f: float
    r_t: float
    total: float

    @classmethod
    def combine(cls, r_a: float, r_f: float, r_t: float, lambda_f: float, lambda_t: float) -> "RewardBreakdown":
        return cls(r_a, r_f, r_t, r_a + lambda_f * r_f + lambda_t * r_t)


@dataclass
class RolloutGroup:
    question_id: str
    rollouts: list[Rollout]
    rewards: list[float] = field(default_factory=list)
    advantages: list[float] = field(default_factory=list)
    breakdowns: list[RewardBreakdown] = field(default_factory=list)

    def __post_init__(self):
        g = len(self.rollouts)
        if g < 2:
            raise ValueError(f"group for {self.question_id!r} has {g} rollouts; need at least 2")
        for name in ("rewards", "advantages", "breakdowns"):
            seq = getattr(self, name)
            if seq and len(seq) != g:
                raise ValueError(f"group {self.question_id!r}: {len(seq)} {name} for {g} rollouts")

    @property
    def size(self) -> int:
        return len(self.rollouts)

    @property
    def n_correct(self) -> int:
        return sum(bool(r.correct) for r in self.rollouts)

    @property
    def pass_at_k(self) -> float:
        return self.n_correct / self.size


# ---------------------------------------------------------------------------
# PGM images


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary (P5) PGM with maxval <= 255."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot read image ({exc.strerror})") from exc

    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageIOError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval

    if tokens[0] != b"P5":
        raise ImageIOError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        cols, rows, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageIOError(f"{path}: corrupt PGM header") from exc
    if not 0 < maxval <= 255:
        raise ImageIOError(f"{path}: unsupported maxval {maxval}")
    if rows < 1 or cols < 1:
        raise ImageIOError(f"{path}: empty image")
    raw = data[pos : pos + rows * cols]
    if len(raw) != rows * cols:
        raise ImageIOError(f"{path}: expected {rows * cols} pixel bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(rows, cols).copy()


def write_pgm(path: str | os.PathLike, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("empty image")
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (cols, rows))
        fh.write(img.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# question bank


def _image_from_record(rec: dict, base: Path, lineno: int) -> np.ndarray:
    if "image" in rec:
        ref = rec["image"]
        if not isinstance(ref, str):
            raise ParseError(f"line {lineno}: 'image' must be a relative path string")
        return read_pgm(base / ref)
    try:
        rows, cols, pixels = int(rec["rows"]), int(rec["cols"]), rec["pixels"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"line {lineno}: record needs 'image' or inline 'rows', 'cols', 'pixels'") from exc
    if rows < 1 or cols < 1:
        raise ParseError(f"line {lineno}: empty image")
    arr = np.asarray(pixels)
    if arr.size != rows * cols or (arr.size and (arr.min() < 0 or arr.max() > 255)):
        raise ParseError(f"line {lineno}: inline pixels do not match {rows}x{cols} 8-bit image")
    return arr.reshape(rows, cols).astype(np.uint8)


def parse_question_bank(path: str | os.PathLike) -> list[Question]:
    """Load a JSONL question bank; image paths resolve relative to the bank file."""
    path = Path(path)
    base = path.parent
    questions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise ParseError(f"line {lineno}: expected a JSON object")
            for key in ("id", "answer"):
                if not isinstance(rec.get(key), str):
                    raise ParseError(f"line {lineno}: missing or non-string {key!r}")
            image = _image_from_record(rec, base, lineno)
            try:
                questions.append(
                    Question(
                        id=rec["id"],
                        image=image,
                        answer=rec["answer"],
                        image_complexity=rec.get("image_complexity"),
                        extrinsic_difficulty=rec.get("extrinsic_difficulty"),
                        tier=rec.get("tier"),
                    )
                )
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc
    return questions


def write_question_bank(path: str | os.PathLike, questions: Iterable[Question], image_dir: str = "images") -> None:
    """Write a JSONL bank plus one PGM per question under ``image_dir``."""
    path = Path(path)
    (path.parent / image_dir).mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for q in questions:
            rel = f"{image_dir}/{q.id}.pgm"
            write_pgm(path.parent / rel, q.image)
            rec = {"id": q.id, "image": rel, "answer": q.answer}
            if q.tier is not None:
                rec["tier"] = q.tier.value
            if q.image_complexity is not None:
                rec["image_complexity"] = q.image_complexity
            if q.extrinsic_difficulty is not None:
                rec["extrinsic_difficulty"] = q.extrinsic_difficulty
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# rollout log


@dataclass(frozen=True)
class RolloutRecord:
    question_id: str
    length: int
    correct: bool
    format_ok: bool
    r_a: float
    r_f: float
    r_t: float
    total: float
    advantage: float
    step: Optional[int] = None


def records_from_groups(groups: Sequence[RolloutGroup], step: Optional[int] = None) -> list[RolloutRecord]:
    out = []
    for g in groups:
        for i, r in enumerate(g.rollouts):
            b = g.breakdowns[i] if g.breakdowns else RewardBreakdown(float(r.correct), float(r.format_ok), 0.0, float("nan"))
            out.append(
                RolloutRecord(
                    question_id=g.question_id,
                    length=r.length,
                    correct=bool(r.correct),
                    format_ok=bool(r.format_ok),
                    r_a=b.r_a,
                    r_f=b.r_f,
                    r_t=b.r_t,
                    total=g.rewards[i] if g.rewards else b.total,
                    advantage=g.advantages[i] if g.advantages else float("nan"),
                    step=step,
                )
            )
    return out


def write_rollout_log(path: str | os.PathLike, groups: Sequence[RolloutGroup], step: Optional[int] = None, append: bool = False) -> None:
    with open(path, "a" if append else "w", encoding="utf-8") as fh:
        for rec in records_from_groups(groups, step):
            d = {k: v for k, v in rec.__dict__.items() if not (k == "step" and v is None)}
            fh.write(json.dumps(d) + "\n")


def read_rollout_log(path: str | os.PathLike) -> list[RolloutRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(RolloutRecord(**json.loads(line)))
            except (json.JSONDecodeError, TypeError) as exc:
                raise ParseError(f"line {lineno}: bad rollout record ({exc})") from exc
    return out
