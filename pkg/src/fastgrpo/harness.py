"""End-to-end training loop on the synthetic question bank."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import curriculum
from .config import TrainConfig
from .core import TIERS, NumericalError, Question, RolloutGroup, RewardBreakdown, Tier, write_question_bank, write_rollout_log
from .difficulty import batch_threshold, combined_difficulty, extrinsic_difficulty
from .grpo import adaptive_beta, group_advantages, policy_update_step
from .image_complexity import GlcmConfig, HistogramSoftmaxProvider, image_complexity_norm
from .rewards import LengthContext, length_reward
from .toy_policy import DEFAULT_TASKS, SyntheticTask, ToyPolicy, sample_response

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "step",
    "epoch",
    "n_rollouts",
    "mean_length",
    "mean_length_easy",
    "mean_length_medium",
    "mean_length_hard",
    "accuracy",
    "accuracy_easy",
    "accuracy_medium",
    "accuracy_hard",
    "mean_reward",
    "mean_beta",
    "theta",
    "clip_fraction",
    "mean_kl",
    "loss",
)


# ---------------------------------------------------------------------------
# synthetic bank


def tier_texture(tier: Tier, size: int, seed: int) -> np.ndarray:
    """Constant (Easy), coarse stripes (Medium) or white noise (Hard)."""
    rng = np.random.default_rng(seed)
    if tier is Tier.EASY:
        return np.full((size, size), rng.integers(32, 224), dtype=np.uint8)
    if tier is Tier.MEDIUM:
        lo, hi = rng.integers(0, 96), rng.integers(160, 256)
        width = int(rng.integers(6, 12))
        band = (np.arange(size) // width) % 2
        img = np.where(band[None, :] if rng.random() < 0.5 else band[:, None], hi, lo)
        return np.broadcast_to(img, (size, size)).astype(np.uint8)
    return rng.integers(0, 256, size=(size, size), dtype=np.uint8)


def generate_question_bank(
    n_per_tier: int, seed: int = 0, image_size: int = 64, glcm: GlcmConfig | None = None
) -> tuple[list[Question], dict[str, SyntheticTask]]:
    """3 * n_per_tier questions with tier-matched textures and cached complexity."""
    if n_per_tier < 1:
        raise ValueError("n_per_tier must be >= 1")
    glcm = glcm or GlcmConfig()
    provider = HistogramSoftmaxProvider()
    seeds = np.random.SeedSequence(seed).generate_state(3 * n_per_tier, dtype=np.uint64)
    questions, tasks = [], {}
    k = 0
    for tier in TIERS:
        for j in range(n_per_tier):
            qid = f"{tier.value.lower()}-{j:04d}"
            image_seed = int(seeds[k])
            k += 1
            img = tier_texture(tier, image_size, image_seed)
            base = DEFAULT_TASKS[tier]
            tasks[qid] = SyntheticTask(tier, base.q_min, base.q_max, base.L_star, image_seed)
            questions.append(
                Question(qid, img, answer="correct", image_complexity=image_complexity_norm(img, glcm, provider), tier=tier)
            )
    return questions, tasks


def tasks_for(bank: Sequence[Question]) -> dict[str, SyntheticTask]:
    out = {}
    for q in bank:
        if q.tier is None:
            raise ValueError(f"question {q.id!r} has no tier; the toy harness needs one")
        out[q.id] = DEFAULT_TASKS[q.tier]
    return out


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    policy: ToyPolicy
    metrics: list[dict] = field(default_factory=list)
    scores: dict[str, float] = field(default_factory=dict)


def _rollout_group(policy, ref, q: Question, task, G: int, rng) -> RolloutGroup:
    return RolloutGroup(q.id, [sample_response(policy, task, rng, ref=ref) for _ in range(G)])


def warmup_scores(policy: ToyPolicy, bank: Sequence[Question], tasks: Mapping[str, SyntheticTask], G: int, rng) -> dict[str, float]:
    """One unfiltered rollout pass giving every question an extrinsic difficulty."""
    scores = {}
    for q in bank:
        g = _rollout_group(policy, policy, q, tasks[q.id], G, rng)
        scores[q.id] = extrinsic_difficulty(g.n_correct, G)
    return scores


def shape_rewards(groups: Sequence[RolloutGroup], s_d: Sequence[float], theta: float, config: TrainConfig) -> None:
    """Fill rewards, breakdowns and advantages of each group in place."""
    lengths = [r.length for g in groups for r in g.rollouts]
    L_avg = float(np.mean(lengths))
    for g, sd in zip(groups, s_d):
        lens = [r.length for r in g.rollouts]
        correct_lens = [r.length for r in g.rollouts if r.correct]
        breakdowns = []
        for r in g.rollouts:
            ctx = LengthContext(
                L=r.length,
                L_avg=L_avg,
                L_max=config.max_len,
                min_len=min(lens),
                max_len=max(lens),
                n_correct=len(correct_lens),
                group_size=g.size,
                mean_correct_len=float(np.mean(correct_lens)) if correct_lens else None,
            )
            r_a = 1.0 if r.correct else 0.0
            r_f = 1.0 if r.format_ok else 0.0
            r_t = length_reward(config.reward_scheme, ctx, bool(r.correct), sd, theta)
            breakdowns.append(RewardBreakdown.combine(r_a, r_f, r_t, config.lambda_f, config.lambda_t))
        g.breakdowns = breakdowns
        g.rewards = [b.total for b in breakdowns]
        g.advantages = list(group_advantages(g.rewards))


def _tier_stats(groups, bank_tier: Mapping[str, Tier]):
    lengths = {t: [] for t in TIERS}
    correct = {t: [] for t in TIERS}
    for g in groups:
        t = bank_tier[g.question_id]
        lengths[t] += [r.length for r in g.rollouts]
        correct[t] += [float(r.correct) for r in g.rollouts]
    return lengths, correct


def _mean(xs) -> float:
    return float(np.mean(xs)) if len(xs) else float("nan")


def train(
    config: TrainConfig,
    bank: Sequence[Question],
    tasks: Mapping[str, SyntheticTask] | None = None,
    on_step: Optional[Callable[[int, list[RolloutGroup]], None]] = None,
) -> TrainResult:
    """Run the full loop: sample, roll out, score difficulty, shape rewards, update.

    ``on_step(step, groups)`` is called after every update (used for rollout logging).
    """
    if not bank:
        raise ValueError("empty question bank")
    tasks = dict(tasks) if tasks is not None else tasks_for(bank)
    rng = np.random.default_rng(config.seed)
    policy = ToyPolicy.initial(config.init_continue_logit, config.init_care_logit, config.max_len)
    ref = policy.copy()
    G = config.group_size

    glcm = GlcmConfig(gray_levels=config.gray_levels, patch_size=config.patch_size)
    h_img = {q.id: q.image_complexity if q.image_complexity is not None else image_complexity_norm(q.image, glcm) for q in bank}
    bank_tier = {q.id: tasks[q.id].tier for q in bank}

    scores = {q.id: q.extrinsic_difficulty for q in bank if q.extrinsic_difficulty is not None}
    if len(scores) < len(bank):
        missing = [q for q in bank if q.id not in scores]
        scores.update(warmup_scores(policy, missing, tasks, G, rng))

    steps_per_epoch = config.steps_per_epoch or max(1, len(bank) // config.batch_size)
    result = TrainResult(policy, scores=scores)
    step = 0
    for epoch in range(1, config.epochs + 1):
        if epoch > 1 and config.rescore_each_epoch and config.sampler != "none":
            scores.update(warmup_scores(policy, bank, tasks, G, rng))
        for _ in range(steps_per_epoch):
            step += 1
            batch = curriculum.sample_batch(
                bank, config.sampler, epoch, config.batch_size, rng,
                total_epochs=config.epochs, easy_cut=config.easy_cut, hard_cut=config.hard_cut,
                p_max=config.p_max, scores=scores,
            )  # fmt: skip
            groups = [_rollout_group(policy, ref, q, tasks[q.id], G, rng) for q in batch]

            s_ext = [extrinsic_difficulty(g.n_correct, G) for g in groups]
            s_d = [combined_difficulty(se, h_img[g.question_id], config.difficulty_combine, config.alpha) for se, g in zip(s_ext, groups)]
            betas = [adaptive_beta(se, config.beta_min, config.beta_max) for se in s_ext]
            latest_sd = {}
            for g, se, sd in zip(groups, s_ext, s_d):
                scores[g.question_id] = se
                latest_sd[g.question_id] = sd
            theta = batch_threshold(list(latest_sd.values()), config.difficulty_percentile)

            shape_rewards(groups, s_d, theta, config)
            try:
                policy, diag = policy_update_step(policy, groups, betas, tasks, config.learning_rate, config.clip_eps)
            except NumericalError as exc:
                raise NumericalError(f"step {step}: {exc}") from exc
            if not math.isfinite(diag.surrogate_loss):
                raise NumericalError(f"step {step}: non-finite loss")

            lengths, correct = _tier_stats(groups, bank_tier)
            all_len = [r.length for g in groups for r in g.rollouts]
            all_cor = [float(r.correct) for g in groups for r in g.rollouts]
            row = {
                "step": step,
                "epoch": epoch,
                "n_rollouts": len(all_len),
                "mean_length": _mean(all_len),
                "accuracy": _mean(all_cor),
                "mean_reward": _mean([x for g in groups for x in g.rewards]),
                "mean_beta": diag.mean_beta,
                "theta": theta,
                "clip_fraction": diag.clip_fraction,
                "mean_kl": diag.mean_kl,
                "loss": diag.surrogate_loss,
            }
            for t in TIERS:
                row[f"mean_length_{t.value.lower()}"] = _mean(lengths[t])
                row[f"accuracy_{t.value.lower()}"] = _mean(correct[t])
            result.metrics.append(row)
            if on_step is not None:
                on_step(step, groups)
        log.info("epoch %d done: step %d, mean length %.2f", epoch, step, result.metrics[-1]["mean_length"])
    result.policy = policy
    return result


def evaluate(policy: ToyPolicy, bank: Sequence[Question], G: int = 8, seed: int = 0, tasks: Mapping[str, SyntheticTask] | None = None) -> dict[str, dict]:
    """Per-tier and overall accuracy and mean length with a frozen policy."""
    tasks = tasks if tasks is not None else tasks_for(bank)
    rng = np.random.default_rng(seed)
    acc = {t: [] for t in TIERS}
    lens = {t: [] for t in TIERS}
    for q in bank:
        task = tasks[q.id]
        for _ in range(G):
            r = sample_response(policy, task, rng)
            acc[task.tier].append(float(r.correct))
            lens[task.tier].append(r.length)
    report = {t.value: {"accuracy": _mean(acc[t]), "mean_length": _mean(lens[t]), "n": len(acc[t])} for t in TIERS}
    all_acc = [x for t in TIERS for x in acc[t]]
    all_len = [x for t in TIERS for x in lens[t]]
    report["overall"] = {"accuracy": _mean(all_acc), "mean_length": _mean(all_len), "n": len(all_acc)}
    return report


# ---------------------------------------------------------------------------
# files


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.6f}"


def write_metrics_csv(path, rows: Sequence[Mapping]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = []
        for rec in csv.DictReader(fh):
            rows.append({k: (int(v) if k in ("step", "epoch", "n_rollouts") else float(v)) for k, v in rec.items()})
        return rows


def save_policy(path, policy: ToyPolicy) -> None:
    # json writes floats with repr, i.e. round-trip precision
    Path(path).write_text(json.dumps(policy.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_policy(path) -> ToyPolicy:
    return ToyPolicy.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def run_training(config: TrainConfig, out_dir, bank: Sequence[Question] | None = None, plots: bool = True) -> TrainResult:
    """Train and write metrics.csv, rollouts.jsonl, policy.json, the bank and figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = None
    if bank is None:
        glcm = GlcmConfig(gray_levels=config.gray_levels, patch_size=config.patch_size)
        bank, tasks = generate_question_bank(config.n_per_tier, config.seed, config.image_size, glcm)
    (out / "config.ini").write_text(config.to_ini(), encoding="utf-8")

    rollout_path = out / "rollouts.jsonl"
    rollout_path.write_text("")

    def log_step(step, groups):
        write_rollout_log(rollout_path, groups, step=step, append=True)

    result = train(config, bank, tasks, on_step=log_step)
    write_metrics_csv(out / "metrics.csv", result.metrics)
    save_policy(out / "policy.json", result.policy)

    scored = [replace(q, extrinsic_difficulty=result.scores.get(q.id)) for q in bank]
    write_question_bank(out / "bank.jsonl", scored)
    if plots:
        from .plotting import plot_training_metrics

        plot_training_metrics(result.metrics, out / "metrics.png")
    return result
