"""Training configuration and INI loading.

Every field can be set from an INI file (any section, ``key = value``) and
overridden on the command line.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from typing import Mapping

from .core import ConfigError
from .curriculum import STRATEGIES
from .rewards import SCHEMES

COMBINE_MODES = ("multiplicative", "weighted_sum")


@dataclass(frozen=True)
class TrainConfig:
    group_size: int = 8
    epochs: int = 10
    batch_size: int = 32
    clip_eps: float = 0.2
    beta_min: float = 0.001
    beta_max: float = 0.03
    lambda_f: float = 0.5
    lambda_t: float = 0.5
    difficulty_percentile: float = 0.80
    easy_cut: float = 0.25
    hard_cut: float = 0.75
    p_max: float = 0.4
    learning_rate: float = 0.7
    seed: int = 0
    reward_scheme: str = "fast"
    sampler: str = "slow_to_fast_binary"
    difficulty_combine: str = "multiplicative"
    alpha: float = 0.5
    # synthetic task / desk-scale settings
    n_per_tier: int = 100
    steps_per_epoch: int = 0  # 0: len(bank) // batch_size
    rescore_each_epoch: int = 1  # 1: refresh every question's pass@k at each epoch start
    max_len: int = 64
    init_continue_logit: float = 3.5
    init_care_logit: float = 12.0
    gray_levels: int = 64
    patch_size: int = 64
    image_size: int = 64

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.group_size >= 2, "group_size must be >= 2")
        need(self.epochs >= 1, "epochs must be >= 1")
        need(self.batch_size >= 1, "batch_size must be >= 1")
        need(0.0 < self.clip_eps < 1.0, "clip_eps must lie in (0, 1)")
        need(0.0 < self.beta_min <= self.beta_max, "need 0 < beta_min <= beta_max")
        need(0.0 < self.difficulty_percentile <= 1.0, "difficulty_percentile must lie in (0, 1]")
        need(self.easy_cut < self.hard_cut, "easy_cut must be below hard_cut")
        need(0.0 <= self.p_max <= 1.0, "p_max must lie in [0, 1]")
        need(0.0 <= self.alpha <= 1.0, "alpha must lie in [0, 1]")
        need(0.0 <= self.learning_rate < float("inf"), "learning_rate must be finite and nonnegative")
        need(0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer")
        need(self.reward_scheme in SCHEMES, f"reward_scheme must be one of {SCHEMES}")
        need(self.sampler in STRATEGIES, f"sampler must be one of {STRATEGIES}")
        need(self.difficulty_combine in COMBINE_MODES, f"difficulty_combine must be one of {COMBINE_MODES}")
        need(self.n_per_tier >= 1, "n_per_tier must be >= 1")
        need(self.steps_per_epoch >= 0, "steps_per_epoch must be >= 0")
        need(self.rescore_each_epoch in (0, 1), "rescore_each_epoch must be 0 or 1")
        need(self.max_len >= 3, "max_len must be >= 3")
        need(self.gray_levels >= 2 and self.patch_size >= 2 and self.image_size >= 2, "image settings must be >= 2")

    @classmethod
    def full_scale(cls, **overrides) -> "TrainConfig":
        """Values used for full-size training; not runnable with the toy policy at speed."""
        base = dict(batch_size=512, learning_rate=1e-6, max_len=4096, n_per_tier=6000)
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_ini(self) -> str:
        lines = ["[train]"]
        lines += [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, value: str):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(value, 0) if isinstance(value, str) else int(value)
        if kind == "float":
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from exc
    return str(value).strip()


def config_from_mapping(values: Mapping[str, object], base: TrainConfig | None = None) -> TrainConfig:
    base = base or TrainConfig()
    changes = {k: _coerce(k, v) if isinstance(v, str) else v for k, v in values.items()}
    for k in changes:
        if k not in _TYPES:
            raise ConfigError(f"unknown config key {k!r}")
    try:
        return base.replace(**changes)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: Mapping[str, object] | None = None) -> TrainConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values: dict[str, object] = {}
    for section in parser.sections():
        values.update(parser.items(section))
    values.update(overrides or {})
    return config_from_mapping(values)
