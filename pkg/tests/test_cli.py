import csv

import numpy as np
import pytest

from sdrl.checkpoint import dumps, load_checkpoint, loads, save_checkpoint
from sdrl.cli import CSV_COLUMNS, compare_runs, format_cell, read_run_csv, run_subcommand

FAST = ["--hidden_sizes", "16,16", "--warmup_steps", "100", "--pioneer_updates", "20",
        "--pioneer_min_updates", "10", "--batch_size", "16", "--eval_every", "2",
        "--eval_episodes", "2"]


def train(tmp_path, name, *extra):
    out = tmp_path / f"{name}.csv"
    code = run_subcommand(["train", "--out", str(out), *FAST, *extra])
    return code, out


def test_train_writes_schema_and_is_deterministic(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("episodes = 3\n")
    c1, a = train(tmp_path, "a", "--config", str(cfg), "--seed", "7")
    c2, b = train(tmp_path, "b", "--config", str(cfg), "--seed", "7")
    assert c1 == c2 == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.reader(a.open()))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 4
    assert rows[1][11:] == ["", "", ""] and rows[2][11] != ""
    assert rows[1][6] in {"running", "landed", "crashed", "timeout", "success", "other"}


def test_config_echoed_to_stderr(tmp_path, capsys):
    train(tmp_path, "a", "--episodes", "1")
    err = capsys.readouterr().err
    assert "# env = pendulum" in err and "# episodes = 1" in err


def test_six_significant_digits():
    assert format_cell("train_return", -371.0287648) == "-371.029"
    assert format_cell("k", 0.8835999999999999) == "0.8836"
    assert format_cell("eval_mean_return", None) == ""
    assert format_cell("episode", 12) == "12"


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("decay_fraction = 1.5\n")
    code, _ = train(tmp_path, "x", "--config", str(cfg))
    assert code == 2
    assert "decay_fraction" in capsys.readouterr().err
    assert train(tmp_path, "y", "--gamma", "lots")[0] == 2


def test_flag_overrides_file(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("ablation = full\nepisodes = 2\n")
    ck = tmp_path / "c.ckpt"
    code, _ = train(tmp_path, "a", "--config", str(cfg), "--ablation=no_pioneer",
                    "--ckpt", str(ck))
    assert code == 0
    assert load_checkpoint(ck).config["ablation"] == "no_pioneer"


def test_eval_reports_zero_k_for_ddpg_only(tmp_path, capsys):
    ck = tmp_path / "final.ckpt"
    code, _ = train(tmp_path, "a", "--ablation", "ddpg_only", "--episodes", "2",
                    "--ckpt", str(ck))
    assert code == 0
    capsys.readouterr()
    assert run_subcommand(["eval", "--ckpt", str(ck), "--episodes", "3"]) == 0
    header, values = capsys.readouterr().out.strip().splitlines()
    table = dict(zip(header.split(), values.split()))
    assert table["k"] == "0" and table["episodes"] == "3"


def test_missing_files_and_version_mismatch(tmp_path, capsys):
    assert run_subcommand(["eval", "--ckpt", str(tmp_path / "none.ckpt")]) == 1
    assert run_subcommand(["checkpoint-info", str(tmp_path / "none.ckpt")]) == 1
    assert run_subcommand(["compare", str(tmp_path / "none.csv")]) == 1
    ck = tmp_path / "c.ckpt"
    train(tmp_path, "a", "--episodes", "1", "--ckpt", str(ck))
    ck.write_text(ck.read_text().replace("SDRL-CKPT v1", "SDRL-CKPT v9", 1))
    assert run_subcommand(["checkpoint-info", str(ck)]) == 1
    assert "version" in capsys.readouterr().err


def test_invariant_breach_exit_code(tmp_path):
    ck = tmp_path / "sup.ckpt"
    train(tmp_path, "a", "--episodes", "1", "--ckpt", str(ck))
    c = load_checkpoint(ck)
    c.arrays["net.actor"][:] = np.nan
    save_checkpoint(ck, c)
    code, out = train(tmp_path, "b", "--episodes", "2", "--supervisor", str(ck))
    assert code == 3
    rows = list(csv.reader(out.open()))
    assert rows[1][0] == "1" and rows[1][6] == "running"


def test_checkpoint_every_and_info(tmp_path, capsys):
    ck = tmp_path / "run.ckpt"
    code, _ = train(tmp_path, "a", "--episodes", "3", "--ckpt", str(ck), "--ckpt-every", "2")
    assert code == 0
    capsys.readouterr()
    assert run_subcommand(["checkpoint-info", str(ck)]) == 0
    out = capsys.readouterr().out
    assert "format: SDRL-CKPT v1" in out and "episode: 3" in out and "network pioneer" in out
    text = ck.read_text()
    assert dumps(loads(text)) == text


def test_resume_appends_identical_rows(tmp_path):
    c1, straight = train(tmp_path, "straight", "--episodes", "4")
    ck = tmp_path / "half.ckpt"
    c2, split = train(tmp_path, "split", "--episodes", "2", "--ckpt", str(ck))
    c3 = run_subcommand(["train", "--out", str(split), "--resume", str(ck), "--episodes", "4"])
    assert (c1, c2, c3) == (0, 0, 0)
    assert straight.read_bytes() == split.read_bytes()


def test_resume_rejects_changed_hyperparameters(tmp_path):
    ck = tmp_path / "half.ckpt"
    _, out = train(tmp_path, "a", "--episodes", "1", "--ckpt", str(ck))
    code = run_subcommand(["train", "--out", str(out), "--resume", str(ck), "--gamma", "0.5"])
    assert code == 2


def test_compare_on_self(tmp_path, capsys):
    _, a = train(tmp_path, "a", "--episodes", "5")
    capsys.readouterr()
    assert run_subcommand(["compare", str(a), str(a), "--window", "2"]) == 0
    lines = list(csv.reader(capsys.readouterr().out.strip().splitlines()))
    assert lines[0] == ["window_start", "window_end", "a_mean", "a_min", "a_crashes",
                        "a__mean", "a__min", "a__crashes"]
    assert len(lines) == 1 + 3
    for row in lines[1:]:
        assert row[2:5] == row[5:8]


def test_compare_windows_and_crashes():
    def rows(returns, outcomes):
        return [dict(zip(CSV_COLUMNS, [str(i + 1), "10", str(r), "1", "1", "0", o] + [""] * 7))
                for i, (r, o) in enumerate(zip(returns, outcomes))]
    runs = {"x": rows([1, 2, 3, 4, 5], ["crashed", "landed", "crashed", "crashed", "landed"]),
            "y": rows([0, 0, 0, 0, 0], ["landed"] * 5)}
    header, table = compare_runs(runs, window=2)
    assert table[0] == ["1", "2", "1.5", "1", "1", "0", "0", "0"]
    assert table[1][2:5] == ["3.5", "3", "3"]
    assert table[2] == ["5", "5", "5", "5", "3", "0", "0", "0"]


def test_read_run_csv_rejects_foreign_header(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_run_csv(f)
