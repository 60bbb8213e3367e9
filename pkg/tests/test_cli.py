"""End-to-end CLI tests: artifacts, reproducibility, and the exit-code taxonomy."""

import json
import time

import pytest

import riskskills.gradcheck as gradcheck_mod
from riskskills.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_OK, main, trial_seed
from riskskills.manifest import load_manifest, verify_manifest
from riskskills.policy import log_grad_rad


def run_cli(*argv):
    return main(list(argv))


def train_run(tmp_path, name="run", episodes="400", extra=()):
    out = tmp_path / name
    code = run_cli("train", "--trials", "1", "--episodes", episodes,
                   "--seed", "7", "--scenario", "losing", "--out", str(out), *extra)
    assert code == EXIT_OK
    return out


# ---------------------------------------------------------------------------
# train / er-train


def test_train_smoke_produces_verified_artifacts(tmp_path):
    started = time.monotonic()
    out = train_run(tmp_path, episodes="500")
    elapsed = time.monotonic() - started
    assert elapsed < 60.0
    for rel in ("trial0/curve.tsv", "trial0/checkpoint.json", "trial0/curve.png",
                "manifest.json"):
        assert (out / rel).exists()
    assert verify_manifest(str(out / "manifest.json")) == []
    doc = load_manifest(str(out / "manifest.json"))
    assert doc["command"] == "train"
    assert doc["mode"] == "pg"
    assert doc["trial_seeds"] == [trial_seed(7, 0)]


def test_train_is_byte_reproducible(tmp_path):
    a = train_run(tmp_path, "a")
    b = train_run(tmp_path, "b")
    for rel in ("trial0/curve.tsv", "trial0/checkpoint.json"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes()
    da = load_manifest(str(a / "manifest.json"))
    db = load_manifest(str(b / "manifest.json"))
    assert da["config_sha256"] == db["config_sha256"]
    assert da["artifacts"]["trial0/curve.tsv"] == db["artifacts"]["trial0/curve.tsv"]
    assert da["artifacts"]["trial0/checkpoint.json"] == db["artifacts"]["trial0/checkpoint.json"]


def test_er_train_writes_mode_tagged_artifacts(tmp_path):
    out = tmp_path / "er"
    code = run_cli("er-train", "--trials", "1", "--episodes", "300",
                   "--seed", "3", "--scenario", "losing", "--out", str(out))
    assert code == EXIT_OK
    assert load_manifest(str(out / "manifest.json"))["mode"] == "er"
    curve = (out / "trial0/curve.tsv").read_text()
    assert "# mode: er" in curve


def test_distinct_trials_get_distinct_seeds():
    seeds = {trial_seed(0, t) for t in range(10)}
    assert len(seeds) == 10
    assert trial_seed(1, 0) not in {trial_seed(0, t) for t in range(10)}


def test_config_file_overrides_are_applied(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[learner]\nepisodes = 200\nearly_stop = false\n")
    out = tmp_path / "cfg-run"
    code = run_cli("train", "--trials", "1", "--seed", "1", "--config", str(cfg),
                   "--scenario", "losing", "--out", str(out))
    assert code == EXIT_OK
    curve = (out / "trial0/curve.tsv").read_text()
    last = curve.strip().splitlines()[-1].split("\t")
    assert last[1] == "200"  # episodes column reached the configured budget


# ---------------------------------------------------------------------------
# eval


def test_eval_greedy_is_repeatable(tmp_path, capsys):
    run = train_run(tmp_path)
    ckpt = run / "trial0/checkpoint.json"
    out_a, out_b = tmp_path / "eval-a", tmp_path / "eval-b"
    for out in (out_a, out_b):
        code = run_cli("eval", "--checkpoint", str(ckpt), "--episodes", "40",
                       "--seed", "5", "--scenario", "losing", "--greedy",
                       "--out", str(out))
        assert code == EXIT_OK
    assert (out_a / "eval.tsv").read_bytes() == (out_b / "eval.tsv").read_bytes()
    table = capsys.readouterr().out
    assert "goal_rate" in table
    assert "avg_episode_length" in table
    assert verify_manifest(str(out_a / "manifest.json")) == []


def test_eval_table_partitions_outcomes(tmp_path):
    run = train_run(tmp_path)
    out = tmp_path / "eval"
    code = run_cli("eval", "--checkpoint", str(run / "trial0/checkpoint.json"),
                   "--episodes", "25", "--seed", "2", "--scenario", "losing",
                   "--out", str(out))
    assert code == EXIT_OK
    lines = (out / "eval.tsv").read_text().strip().splitlines()
    assert lines[0] == "# schema_version: 1"
    assert lines[1] == "# mode: sampling"
    header = lines[2].split("\t")
    row = dict(zip(header, lines[3].split("\t")))
    assert int(row["goals"]) + int(row["captures"]) + int(row["out_of_time"]) == 25


def test_eval_rejects_checkpoint_with_foreign_dimensions(tmp_path, capsys):
    run = train_run(tmp_path)
    ckpt = run / "trial0/checkpoint.json"
    doc = json.loads(ckpt.read_text())
    doc["feature_spec"]["bounds"] = doc["feature_spec"]["bounds"][:4]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code = run_cli("eval", "--checkpoint", str(bad), "--episodes", "5",
                   "--scenario", "losing", "--out", str(tmp_path / "e"))
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "4" in err and "7" in err  # both shapes are reported


# ---------------------------------------------------------------------------
# exit-code taxonomy


def test_missing_config_file_is_an_io_failure(tmp_path, capsys):
    code = run_cli("train", "--trials", "1", "--episodes", "10",
                   "--config", str(tmp_path / "absent.ini"),
                   "--out", str(tmp_path / "x"))
    assert code == EXIT_IO
    assert "io error" in capsys.readouterr().err


def test_invalid_config_is_a_config_failure(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[learner]\np_a = 0.2\n[episode]\nhorizon = 0\n")
    code = run_cli("train", "--trials", "1", "--episodes", "10",
                   "--config", str(cfg), "--out", str(tmp_path / "x"))
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "p_a" in err and "horizon" in err


def test_missing_checkpoint_is_an_io_failure(tmp_path):
    code = run_cli("eval", "--checkpoint", str(tmp_path / "absent.json"),
                   "--episodes", "5", "--out", str(tmp_path / "x"))
    assert code == EXIT_IO


# ---------------------------------------------------------------------------
# gradcheck


def test_gradcheck_passes_on_a_fresh_checkout(capsys):
    code = run_cli("gradcheck", "--samples", "3000")
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "oracle_vs_fd" in out
    assert "sampled_vs_oracle" in out
    assert "FAIL" not in out


def test_gradcheck_fails_on_a_corrupted_gradient(monkeypatch, capsys):
    flipped = lambda omega_i, phi, y, var: -log_grad_rad(omega_i, phi, y, var)
    monkeypatch.setattr(gradcheck_mod, "log_grad_rad", flipped)
    code = run_cli("gradcheck", "--samples", "3000")
    assert code == EXIT_CHECK
    captured = capsys.readouterr()
    assert "FAIL" in captured.out
    assert "FAILED" in captured.err


# ---------------------------------------------------------------------------
# heatmap


def test_heatmap_resolution_one_is_a_single_row(tmp_path):
    run = train_run(tmp_path)
    out = tmp_path / "hm1"
    code = run_cli("heatmap", "--checkpoint", str(run / "trial0/checkpoint.json"),
                   "--resolution", "1", "--scenario", "losing", "--out", str(out))
    assert code == EXIT_OK
    lines = (out / "heatmap.tsv").read_text().strip().splitlines()
    assert lines[0] == "# schema_version: 1"
    assert lines[1].split("\t") == ["x", "y", "rap_mean", "rap_mean_clamped"]
    assert len(lines) == 3


def test_heatmap_grid_stays_in_clamp_range(tmp_path, capsys):
    run = train_run(tmp_path)
    out = tmp_path / "hm"
    code = run_cli("heatmap", "--checkpoint", str(run / "trial0/checkpoint.json"),
                   "--resolution", "6", "--w", "0.5", "--scenario", "losing",
                   "--out", str(out))
    assert code == EXIT_OK
    lines = (out / "heatmap.tsv").read_text().strip().splitlines()[2:]
    assert len(lines) == 36
    for line in lines:
        x, y, mean, clamped = (float(v) for v in line.split("\t"))
        assert 0.0 <= clamped <= 150.0
        assert 0.0 < x < 1.0 and 0.0 < y < 1.0
    printed = capsys.readouterr().out
    assert "halfway region" in printed
    assert verify_manifest(str(out / "manifest.json")) == []


def test_heatmap_png_is_rendered(tmp_path):
    run = train_run(tmp_path)
    out = tmp_path / "hm-png"
    code = run_cli("heatmap", "--checkpoint", str(run / "trial0/checkpoint.json"),
                   "--resolution", "4", "--scenario", "losing", "--out", str(out))
    assert code == EXIT_OK
    png = (out / "heatmap.png").read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"
