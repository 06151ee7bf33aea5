"""CLI subcommands: artifacts, exit codes, byte-stable reruns."""

import subprocess
import sys

import numpy as np
import pytest

from csichart.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, main

TINY = [
    "--set", "n_samples=60", "--set", "n_subcarriers=16",
    "--set", "antennas_per_ap=2", "--set", "capacity=12",
    "--set", "c_taps=4", "--set", "k_neighbors=5",
    "--set", "epochs=20", "--set", "batch_pairs=128",
    "--set", "widths=16,8,2",
]


def run(args):
    return main([str(a) for a in args])


def test_stream_artifacts(tmp_path):
    out = tmp_path / "s"
    assert run(["stream", "--out", out, "--set", "strategy=both", *TINY]) == EXIT_OK
    for name in ("sims", "randos"):
        assert (out / f"memory_{name}.csv").is_file()
        assert (out / f"memory_{name}.cckp").is_file()
        assert (out / f"memory_{name}.png").is_file()
    assert (out / "config.txt").is_file()
    summary = (out / "stream_summary.txt").read_text()
    assert "n_offered=60" in summary
    assert "sims_stored=12" in summary
    header = (out / "memory_sims.csv").read_text().splitlines()[0]
    assert header == "slot,arrival_index,timestamp,gt_x,gt_y,max_sim"


def test_stream_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["stream", "--out", out, "--set", "strategy=both", *TINY]) == EXIT_OK
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_train_and_evaluate_flow(tmp_path):
    s, t, e = tmp_path / "s", tmp_path / "t", tmp_path / "e"
    assert run(["stream", "--out", s, *TINY]) == EXIT_OK
    assert run(["train", "--out", t, "--memory", s / "memory_sims.cckp",
                *TINY]) == EXIT_OK
    assert (t / "model_memory.cckp").is_file()
    assert (t / "loss_memory.csv").is_file()
    assert (t / "chart_memory.csv").read_text().startswith(
        "index,arrival_index,gt_x,gt_y,chart_x,chart_y")
    assert run(["evaluate", "--out", e, "--model", t / "model_memory.cckp",
                "--memory", s / "memory_sims.cckp", *TINY]) == EXIT_OK
    metrics = (e / "metrics.txt").read_text()
    for key in ("trustworthiness=", "continuity=", "kruskal_stress=",
                "rajski_distance="):
        assert key in metrics
    assert (e / "metrics.csv").read_text().count("\n") == 2


def test_train_streams_when_no_memory_given(tmp_path):
    t = tmp_path / "t"
    assert run(["train", "--out", t, *TINY]) == EXIT_OK
    assert (t / "memory_sims.cckp").is_file()
    assert (t / "model_sims.cckp").is_file()


def test_reproduce_comparison(tmp_path):
    out = tmp_path / "r"
    assert run(["reproduce", "--out", out, *TINY,
                "--set", "all_subset=30"]) == EXIT_OK
    rows = (out / "comparison.csv").read_text().splitlines()
    assert len(rows) == 4
    assert [r.split(",")[0] for r in rows] == ["label", "sims", "randos", "all"]
    for name in ("sims", "randos", "all"):
        assert (out / f"model_{name}.cckp").is_file()
        assert (out / f"chart_{name}.csv").is_file()


def test_record_range(tmp_path):
    out = tmp_path / "s"
    assert run(["stream", "--out", out, "--record-range", "10:30", *TINY]) == EXIT_OK
    assert "n_offered=20" in (out / "stream_summary.txt").read_text()
    first = (out / "memory_sims.csv").read_text().splitlines()[1]
    assert first.split(",")[1] == "10"


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("capacity = 9\nstrategy = randos  # comment\n\n")
    out = tmp_path / "s"
    assert run(["stream", "--out", out, "--config", cfg, *TINY]) == EXIT_OK
    echoed = (out / "config.txt").read_text()
    assert "strategy=randos" in echoed
    # --set wins over the file for overlapping keys
    assert "capacity=12" in echoed
    assert (out / "memory_randos.csv").is_file()


def test_npz_input(tmp_path):
    npz = tmp_path / "in.npz"
    rng = np.random.default_rng(0)
    np.savez(npz, csi=rng.standard_normal((30, 4, 16))
             + 1j * rng.standard_normal((30, 4, 16)),
             positions=rng.standard_normal((30, 2)))
    out = tmp_path / "s"
    assert run(["stream", "--out", out, "--input", npz, "--set", "capacity=8",
                "--set", "c_taps=4", "--set", "antennas_per_ap=2"]) == EXIT_OK
    assert (out / "imported.ccsf").is_file()
    assert "n_offered=30" in (out / "stream_summary.txt").read_text()


def test_unknown_config_key(tmp_path, capsys):
    assert run(["stream", "--out", tmp_path / "s",
                "--set", "bogus_key=1"]) == EXIT_CONFIG
    assert "unknown setting" in capsys.readouterr().err


def test_bad_value(tmp_path):
    assert run(["stream", "--out", tmp_path / "s",
                "--set", "capacity=many"]) == EXIT_CONFIG


def test_bad_strategy(tmp_path):
    assert run(["stream", "--out", tmp_path / "s", *TINY,
                "--set", "strategy=greedy"]) == EXIT_CONFIG


def test_bad_widths(tmp_path):
    assert run(["train", "--out", tmp_path / "t", *TINY,
                "--set", "widths=16,8,3"]) == EXIT_CONFIG


def test_bad_record_range(tmp_path):
    assert run(["stream", "--out", tmp_path / "s", *TINY,
                "--record-range", "30-40"]) == EXIT_CONFIG


def test_missing_input_file(tmp_path):
    assert run(["stream", "--out", tmp_path / "s",
                "--input", tmp_path / "nope.ccsf"]) == EXIT_DATA


def test_corrupt_input(tmp_path):
    bad = tmp_path / "bad.ccsf"
    bad.write_bytes(b"NOTAFORMAT" + b"\x00" * 64)
    assert run(["stream", "--out", tmp_path / "s", "--input", bad]) == EXIT_DATA


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit(tmp_path):
    s = tmp_path / "s"
    assert run(["stream", "--out", s, *TINY]) == EXIT_OK
    code = run(["train", "--out", tmp_path / "t",
                "--memory", s / "memory_sims.cckp", *TINY,
                "--set", "learning_rate=1e200"])
    assert code == EXIT_NUMERIC


def test_console_script_installed():
    proc = subprocess.run([sys.executable, "-m", "csichart.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("stream", "train", "evaluate", "reproduce"):
        assert sub in proc.stdout