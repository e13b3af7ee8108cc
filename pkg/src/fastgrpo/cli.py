"""Command line entry point: ``fastgrpo <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import curriculum, harness
from .config import TrainConfig, config_from_mapping, load_config
from .core import ConfigError, CurriculumExhausted, FastGrpoError, NumericalError, ParseError, ImageIOError, parse_question_bank, read_pgm
from .image_complexity import GlcmConfig, image_scores
from .rewards import LengthContext, format_reward, length_reward
from .toy_policy import ToyPolicy

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CURRICULUM = 2, 3, 4

log = logging.getLogger("fastgrpo")


def _parse_sets(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def cmd_train(args) -> int:
    overrides = _parse_sets(args.set)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    config = load_config(args.config, overrides) if args.config else config_from_mapping(overrides)
    bank = parse_question_bank(args.bank) if args.bank else None
    result = harness.run_training(config, args.out, bank=bank, plots=not args.no_plots)
    last = result.metrics[-1]
    print(f"steps={last['step']} mean_length={last['mean_length']:.6f} accuracy={last['accuracy']:.6f} out={args.out}")
    return 0


def cmd_evaluate(args) -> int:
    policy = harness.load_policy(args.policy) if args.policy else ToyPolicy.initial()
    bank = parse_question_bank(args.bank)
    report = harness.evaluate(policy, bank, G=args.G, seed=args.seed)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["tier", "accuracy", "mean_length", "n"])
    for tier, row in report.items():
        w.writerow([tier, f"{row['accuracy']:.6f}", f"{row['mean_length']:.6f}", row["n"]])
    return 0


def cmd_gen_bank(args) -> int:
    from .core import write_question_bank

    glcm = GlcmConfig(gray_levels=args.levels, patch_size=args.patch)
    bank, _ = harness.generate_question_bank(args.n, args.seed, args.image_size, glcm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_question_bank(out / "bank.jsonl", bank)
    print(f"wrote {len(bank)} questions to {out / 'bank.jsonl'}")
    return 0


def cmd_score_image(args) -> int:
    image = read_pgm(args.path)
    raw, norm = image_scores(image, GlcmConfig(gray_levels=args.levels, patch_size=args.patch))
    print(f"{raw:.6f},{norm:.6f}")
    return 0


def _ctx_from_args(args, L) -> LengthContext:
    return LengthContext(
        L=L,
        L_avg=args.Lavg,
        L_max=args.Lmax,
        min_len=args.min_len,
        max_len=args.max_len,
        n_correct=args.n_correct,
        group_size=args.group_size,
        mean_correct_len=args.mean_correct_len,
    )


def cmd_shape_reward(args) -> int:
    value = length_reward(args.scheme, _ctx_from_args(args, args.L), args.correct, args.sd, args.theta)
    print(f"{value:.6f}")
    return 0


def cmd_check_format(args) -> int:
    print(f"{format_reward(args.text):.0f}")
    return 0


COMPARE_COLUMNS = (
    ("fast_easy_correct", "fast", True, 0.0),
    ("fast_hard_wrong", "fast", False, 1.0),
    ("kimi_correct", "kimi", True, 0.0),
    ("kimi_wrong", "kimi", False, 0.0),
    ("cosfn_correct", "cosfn", True, 0.0),
    ("cosfn_wrong", "cosfn", False, 0.0),
    ("dast_correct", "dast", True, 0.0),
    ("dast_wrong", "dast", False, 0.0),
    ("pilot_lengthy", "pilot_lengthy", True, 0.0),
    ("pilot_short", "pilot_short", True, 0.0),
)


def cmd_compare_rewards(args) -> int:
    lengths = list(range(args.from_len, args.to_len + 1, args.step))
    curves = {name: [] for name, *_ in COMPARE_COLUMNS}
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["L", *curves])
    for L in lengths:
        ctx = LengthContext(
            L=L, L_avg=args.Lavg, L_max=args.Lmax, min_len=args.from_len, max_len=args.to_len,
            n_correct=args.n_correct, group_size=args.group_size, mean_correct_len=args.mean_correct_len,
        )  # fmt: skip
        row = [L]
        for name, scheme, correct, s_d in COMPARE_COLUMNS:
            # s_d 1.0 with theta 0.5 puts the question on the complex side
            v = length_reward(scheme, ctx, correct, s_d, 0.5)
            curves[name].append(v)
            row.append(f"{v:.6f}")
        w.writerow(row)
    if args.plot:
        from .plotting import plot_reward_comparison

        plot_reward_comparison(lengths, curves, args.plot, title=f"L_avg={args.Lavg:g}, L_max={args.Lmax:g}")
    return 0


def cmd_sample_curriculum(args) -> int:
    bank = parse_question_bank(args.bank)
    scores = {q.id: q.extrinsic_difficulty for q in bank if q.extrinsic_difficulty is not None}
    if len(scores) < len(bank):
        rng = np.random.default_rng(args.seed)
        missing = [q for q in bank if q.id not in scores]
        scores.update(harness.warmup_scores(ToyPolicy.initial(), missing, harness.tasks_for(missing), args.G, rng))
    if args.batch:
        picked = curriculum.sample_batch(
            bank, args.strategy, args.epoch, args.batch, args.seed, total_epochs=args.of,
            easy_cut=args.easy_cut, hard_cut=args.hard_cut, p_max=args.p_max, scores=scores,
        )  # fmt: skip
    else:
        picked = curriculum.kept_questions(bank, args.strategy, args.epoch, args.of, args.easy_cut, args.hard_cut, scores)
        if not picked:
            raise CurriculumExhausted(args.strategy, args.epoch)
    for q in picked:
        print(q.id)
    return 0


def cmd_report(args) -> int:
    from .plotting import plot_training_metrics

    rows = harness.read_metrics_csv(args.metrics)
    plot_training_metrics(rows, args.out)
    print(args.out)
    return 0


def _add_length_args(p):
    p.add_argument("--Lavg", type=float, default=20.0, help="batch mean length")
    p.add_argument("--Lmax", type=float, default=64, help="generation cap")
    p.add_argument("--n-correct", type=int, default=4, help="correct responses in the group (DAST)")
    p.add_argument("--group-size", type=int, default=8)
    p.add_argument("--mean-correct-len", type=float, default=None, help="mean correct length in the group (DAST)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fastgrpo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run training and write metrics.csv, rollouts.jsonl, policy.json")
    p.add_argument("--config", help="INI file; keys are TrainConfig field names")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="run")
    p.add_argument("--bank", help="existing bank.jsonl (default: generate one)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="per-tier accuracy and mean length of a policy")
    p.add_argument("--policy", help="policy.json (default: untrained policy)")
    p.add_argument("--bank", required=True)
    p.add_argument("--G", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-bank", help="write a synthetic question bank")
    p.add_argument("--n", type=int, default=100, help="questions per tier")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default="bank")
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--levels", type=int, default=64)
    p.add_argument("--patch", type=int, default=64)
    p.set_defaults(func=cmd_gen_bank)

    p = sub.add_parser("score-image", help="print raw and normalized image complexity")
    p.add_argument("path")
    p.add_argument("--levels", type=int, default=64)
    p.add_argument("--patch", type=int, default=64)
    p.set_defaults(func=cmd_score_image)

    p = sub.add_parser("shape-reward", help="print one length reward")
    p.add_argument("--scheme", required=True, choices=("fast", "kimi", "cosfn", "dast", "pilot_lengthy", "pilot_short", "none"))
    p.add_argument("--L", type=float, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--correct", dest="correct", action="store_true", default=True)
    g.add_argument("--incorrect", dest="correct", action="store_false")
    p.add_argument("--sd", type=float, default=0.0, help="combined difficulty (fast)")
    p.add_argument("--theta", type=float, default=0.5, help="batch difficulty threshold (fast)")
    p.add_argument("--min-len", type=float, default=0.0)
    p.add_argument("--max-len", type=float, default=0.0)
    _add_length_args(p)
    p.set_defaults(func=cmd_shape_reward)

    p = sub.add_parser("check-format", help="print the format reward of a response string")
    p.add_argument("text")
    p.set_defaults(func=cmd_check_format)

    p = sub.add_parser("compare-rewards", help="sweep L and print every scheme's reward as CSV")
    p.add_argument("--from", dest="from_len", type=int, default=0)
    p.add_argument("--to", dest="to_len", type=int, default=64)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--plot", help="also render the curves to this image file")
    _add_length_args(p)
    p.set_defaults(func=cmd_compare_rewards)

    p = sub.add_parser("sample-curriculum", help="print ids kept (or sampled) for an epoch")
    p.add_argument("--strategy", required=True, choices=curriculum.STRATEGIES)
    p.add_argument("--epoch", type=int, required=True)
    p.add_argument("--of", type=int, required=True, help="total epochs")
    p.add_argument("--bank", required=True)
    p.add_argument("--batch", type=int, default=0, help="draw a batch of this size instead of listing the kept set")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--G", type=int, default=8, help="rollouts per question when scoring an unscored bank")
    p.add_argument("--easy-cut", type=float, default=0.25)
    p.add_argument("--hard-cut", type=float, default=0.75)
    p.add_argument("--p-max", type=float, default=0.4)
    p.set_defaults(func=cmd_sample_curriculum)

    p = sub.add_parser("report", help="render figures from a metrics.csv")
    p.add_argument("metrics")
    p.add_argument("--out", default="metrics.png")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError, ImageIOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CurriculumExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CURRICULUM
    except (FastGrpoError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
