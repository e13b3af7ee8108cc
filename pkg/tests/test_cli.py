import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from fastgrpo.cli import main
from fastgrpo.core import NumericalError, write_pgm

SMALL = ["--set", "n_per_tier=4", "--set", "batch_size=4", "--set", "epochs=2", "--set", "steps_per_epoch=2", "--set", "group_size=4"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def bank_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("bank")
    assert main(["gen-bank", "--n", "3", "--seed", "1", "--out", str(d), "--image-size", "32", "--patch", "32"]) == 0
    return d


def test_gen_bank(bank_dir):
    lines = (bank_dir / "bank.jsonl").read_text().splitlines()
    assert len(lines) == 9
    assert len(list((bank_dir / "images").glob("*.pgm"))) == 9


def test_train_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        code, out, _ = run(capsys, "train", "--seed", "5", "--out", str(tmp_path / name), "--no-plots", *SMALL)
        assert code == 0 and "steps=4" in out
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    code, _, _ = run(capsys, "train", "--seed", "6", "--out", str(tmp_path / "c"), "--no-plots", *SMALL)
    assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "c" / "metrics.csv").read_bytes()


def test_train_with_config_file(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[train]\nreward_scheme = kimi\nsampler = none\nn_per_tier = 3\nbatch_size = 3\nepochs = 1\nsteps_per_epoch = 2\n")
    code, out, _ = run(capsys, "train", "--config", str(ini), "--out", str(tmp_path / "o"), "--no-plots")
    assert code == 0
    assert "reward_scheme = kimi" in (tmp_path / "o" / "config.ini").read_text()


def test_train_on_existing_bank_then_evaluate(tmp_path, bank_dir, capsys):
    out_dir = tmp_path / "run"
    code, _, _ = run(capsys, "train", "--bank", str(bank_dir / "bank.jsonl"), "--out", str(out_dir), "--no-plots", *SMALL)
    assert code == 0
    code, out, _ = run(capsys, "evaluate", "--policy", str(out_dir / "policy.json"), "--bank", str(bank_dir / "bank.jsonl"), "--G", "2")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["tier"] for r in rows] == ["Easy", "Medium", "Hard", "overall"]
    assert rows[-1]["n"] == "18"


def test_config_error_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--out", str(tmp_path), "--set", "group_size=1")
    assert code == 2 and "group_size" in err
    code, _, _ = run(capsys, "train", "--out", str(tmp_path), "--set", "bogus")
    assert code == 2


def test_parse_error_exit_code(tmp_path, capsys):
    (tmp_path / "bad.jsonl").write_text('{"id": "x", "rows": 0, "cols": 0, "pixels": [], "answer": "a"}\n')
    code, _, err = run(capsys, "evaluate", "--bank", str(tmp_path / "bad.jsonl"))
    assert code == 2 and "line 1" in err


def test_curriculum_exhausted_exit_code(tmp_path, capsys):
    (tmp_path / "b.jsonl").write_text('{"id": "x", "rows": 1, "cols": 1, "pixels": [3], "answer": "a", "extrinsic_difficulty": 0.0}\n')
    code, _, err = run(capsys, "sample-curriculum", "--strategy", "slow_to_fast_binary", "--epoch", "1", "--of", "4", "--bank", str(tmp_path / "b.jsonl"))
    assert code == 4 and "exhausted" in err


def test_numerical_abort_exit_code(tmp_path, capsys, monkeypatch):
    import fastgrpo.harness

    def blow_up(*args, **kwargs):
        raise NumericalError("non-finite objective or gradient; step rejected")

    monkeypatch.setattr(fastgrpo.harness, "policy_update_step", blow_up)
    code, _, err = run(capsys, "train", "--out", str(tmp_path), "--no-plots", *SMALL)
    assert code == 3 and "step 1" in err


def test_sample_curriculum_lists_and_samples(bank_dir, capsys):
    code, out, _ = run(capsys, "sample-curriculum", "--strategy", "none", "--epoch", "1", "--of", "2", "--bank", str(bank_dir / "bank.jsonl"))
    assert code == 0 and len(out.split()) == 9
    code, out, _ = run(
        capsys, "sample-curriculum", "--strategy", "slow_to_fast_continuous", "--epoch", "2", "--of", "2",
        "--bank", str(bank_dir / "bank.jsonl"), "--batch", "5",
    )  # fmt: skip
    assert code == 0 and len(out.split()) == 5


def test_score_image(tmp_path, capsys):
    write_pgm(tmp_path / "c.pgm", np.full((16, 16), 40, np.uint8))
    code, out, _ = run(capsys, "score-image", str(tmp_path / "c.pgm"), "--patch", "16")
    raw, norm = (float(x) for x in out.split(","))
    assert code == 0 and raw <= 0 and 0 <= norm <= 1
    code, _, err = run(capsys, "score-image", str(tmp_path / "missing.pgm"))
    assert code == 2 and "missing.pgm" in err


@pytest.mark.parametrize(
    "argv, expected",
    [
        (["--scheme", "fast", "--L", "10", "--Lavg", "20", "--sd", "0.1", "--theta", "0.5"], 0.5),
        (["--scheme", "kimi", "--L", "50", "--min-len", "10", "--max-len", "50"], -0.5),
        (["--scheme", "dast", "--L", "40", "--Lmax", "40", "--n-correct", "0", "--incorrect"], -0.1),
        (["--scheme", "cosfn", "--L", "0"], 1.0),
        (["--scheme", "none", "--L", "3"], 0.0),
    ],
)
def test_shape_reward(capsys, argv, expected):
    code, out, _ = run(capsys, "shape-reward", *argv)
    assert code == 0 and float(out) == pytest.approx(expected, abs=1e-6)


def test_check_format(capsys):
    assert run(capsys, "check-format", "<think>x</think><answer>y</answer>")[1].strip() == "1"
    assert run(capsys, "check-format", "<answer>y</answer>")[1].strip() == "0"


def test_compare_rewards_writes_csv_and_plot(tmp_path, capsys):
    png = tmp_path / "rewards.png"
    code, out, _ = run(capsys, "compare-rewards", "--from", "0", "--to", "64", "--step", "8", "--plot", str(png))
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and len(rows) == 10 and len(rows[0]) == 11
    assert png.stat().st_size > 0


def test_report_renders_png(tmp_path, capsys):
    run(capsys, "train", "--out", str(tmp_path / "r"), "--no-plots", *SMALL)
    code, _, _ = run(capsys, "report", str(tmp_path / "r" / "metrics.csv"), "--out", str(tmp_path / "m.png"))
    assert code == 0 and (tmp_path / "m.png").read_bytes()[:4] == b"\x89PNG"


def test_console_script_module_entry():
    proc = subprocess.run([sys.executable, "-m", "fastgrpo.cli", "check-format", "x"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0"
