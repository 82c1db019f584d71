"""
Integration tests for the command-line workflows.
"""
import csv

import pytest

from alignrl.main import cli_main
from alignrl.services.checkpoint import load_checkpoint
from alignrl.services.dataset import load_dataset

TINY_MODEL = [
    "--set", "model.context_len=2",
    "--set", "model.embed_dim=8",
    "--set", "model.n_heads=2",
    "--set", "model.encoder_layers=1",
    "--set", "model.decoder_layers=1",
    "--set", "model.q_hidden=8",
    "--set", "model.dropout=0",
]
SHORT_DIAL = ["--set", "env.horizon=5"]


def read_csv(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small dial dataset and a briefly trained checkpoint."""
    root = tmp_path_factory.mktemp("pipeline")
    data, checkpoint = root / "dial.jsonl", root / "dial.ckpt"
    assert cli_main([
        "gen-data", "--env", "dial", "--horizon", "5", "--episodes", "20", "--seed", "1", "--out", str(data),
    ]) == 0
    assert cli_main([
        "train", "--data", str(data), "--out", str(checkpoint), "--steps", "5", "--warmup", "0",
        "--batch-size", "8", *TINY_MODEL,
    ]) == 0
    return {"root": root, "data": data, "checkpoint": checkpoint}


@pytest.mark.integration
class TestDataCommands:
    """gen-data and filter-data."""

    def test_same_seed_same_bytes(self, tmp_path, capsys):
        first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for path in (first, second):
            assert cli_main(["gen-data", "--env", "dial", "--horizon", "4", "--episodes", "6",
                             "--seed", "3", "--out", str(path)]) == 0
        assert first.read_bytes() == second.read_bytes()

        echo = capsys.readouterr().out.splitlines()
        assert echo[-1] == "seed=3"
        assert "env.episodes=6" in echo

    def test_config_file_and_overrides(self, tmp_path, capsys):
        config = tmp_path / "exp.cfg"
        config.write_text("env.episodes=9\nenv.horizon=3\n")
        out = tmp_path / "cfg.jsonl"

        code = cli_main(["gen-data", "--config", str(config), "--set", "env.episodes=4", "--out", str(out)])

        assert code == 0
        ds = load_dataset(out)
        assert len(ds) == 4
        assert all(traj.horizon == 3 for traj in ds.trajectories)

    def test_spec_file_round_trip(self, tmp_path):
        spec, first, second = tmp_path / "disease.jsonl", tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        common = ["--policy", "soc", "--episodes", "3", "--set", "policy.q0_draws=10"]
        assert cli_main(["gen-data", "--env", "treatment:4", *common, "--out", str(first),
                         "--spec-out", str(spec)]) == 0
        assert cli_main(["gen-data", "--spec", str(spec), *common, "--out", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()

    def test_filter_data(self, workspace, tmp_path):
        out = tmp_path / "filtered.jsonl"
        assert cli_main(["filter-data", "--data", str(workspace["data"]), "--percent", "10", "--out", str(out)]) == 0
        original, filtered = load_dataset(workspace["data"]), load_dataset(out)
        assert len(filtered) == 18
        assert filtered.r_max < original.r_max

    def test_keep_mode(self, workspace, tmp_path):
        out = tmp_path / "kept.jsonl"
        assert cli_main(["filter-data", "--data", str(workspace["data"]), "--percent", "10",
                         "--mode", "keep", "--out", str(out)]) == 0
        assert len(load_dataset(out)) == 2


@pytest.mark.integration
class TestTrainingCommands:
    """train and finetune."""

    def test_checkpoint_records_the_dataset(self, workspace):
        model, info = load_checkpoint(workspace["checkpoint"])
        assert info.env_id == "dial"
        assert info.step == 5
        assert info.r_max == load_dataset(workspace["data"]).r_max
        assert model.config.embed_dim == 8

    def test_metrics_log(self, workspace, tmp_path):
        metrics = tmp_path / "metrics.jsonl"
        assert cli_main(["train", "--data", str(workspace["data"]), "--out", str(tmp_path / "m.ckpt"),
                         "--metrics", str(metrics), "--steps", "2", "--warmup", "0", *TINY_MODEL]) == 0
        assert metrics.read_text().count("\n") == 1

    def test_finetune_advances_the_step(self, workspace, tmp_path):
        out = tmp_path / "tuned.ckpt"
        code = cli_main([
            "finetune", "--checkpoint", str(workspace["checkpoint"]), "--data", str(workspace["data"]),
            "--episodes", "1", "--updates", "2", "--out", str(out), *SHORT_DIAL,
            "--set", "infer.n_candidates=2", "--set", "train.batch_size=4", "--set", "train.warmup_steps=0",
        ])
        assert code == 0
        assert load_checkpoint(out)[1].step == 7


@pytest.mark.integration
class TestEvaluationCommands:
    """Evaluation reports."""

    def test_eval_align_grid(self, workspace, tmp_path):
        out, trace = tmp_path / "align.csv", tmp_path / "trace.jsonl"
        code = cli_main([
            "eval-align", "--checkpoint", str(workspace["checkpoint"]), "--targets", "2:18:2",
            "--episodes", "1", "--n", "2", "--out", str(out), "--trace-out", str(trace), *SHORT_DIAL,
        ])

        assert code == 0
        rows = read_csv(out)
        assert [float(row["target"]) for row in rows] == [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0]
        assert all(int(row["episodes"]) == 1 for row in rows)
        assert len(load_dataset(trace)) == 9

    def test_eval_align_is_reproducible(self, workspace, tmp_path):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for path, workers in zip(paths, ("1", "2")):
            assert cli_main([
                "eval-align", "--checkpoint", str(workspace["checkpoint"]), "--targets", "1:3:1",
                "--episodes", "2", "--n", "3", "--workers", workers, "--out", str(path), *SHORT_DIAL,
            ]) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_ablate_n(self, workspace, tmp_path):
        out = tmp_path / "ablate.csv"
        assert cli_main([
            "ablate-n", "--checkpoint", str(workspace["checkpoint"]), "--n-list", "1,3", "--target", "2",
            "--episodes", "1", "--out", str(out), *SHORT_DIAL,
        ]) == 0
        assert [row["variant_or_N"] for row in read_csv(out)] == ["1", "3"]

    def test_extrapolation(self, workspace, tmp_path):
        out = tmp_path / "extrapolation.csv"
        assert cli_main([
            "eval-extrapolation", "--checkpoint", str(workspace["checkpoint"]), "--target-list", "6,7",
            "--episodes", "1", "--n", "2", "--out", str(out), *SHORT_DIAL,
        ]) == 0
        assert [row["variant_or_N"] for row in read_csv(out)] == ["full", "conditioning"]

    @pytest.mark.slow
    def test_ablate_components(self, workspace, tmp_path):
        out = tmp_path / "components.csv"
        assert cli_main([
            "ablate-components", "--data", str(workspace["data"]), "--seeds", "1", "--steps", "2",
            "--warmup", "0", "--targets", "1:2:1", "--episodes", "1", "--n", "2", "--out", str(out),
            *TINY_MODEL, *SHORT_DIAL, "--set", "train.batch_size=4",
        ]) == 0
        assert [row["variant_or_N"] for row in read_csv(out)] == ["full", "w/o RM", "w/o DB"]

    @pytest.mark.slow
    def test_eval_safety(self, tmp_path):
        data, checkpoint, out = tmp_path / "t.jsonl", tmp_path / "t.ckpt", tmp_path / "safety.csv"
        assert cli_main(["gen-data", "--env", "treatment:0", "--policy", "soc", "--episodes", "8",
                         "--set", "policy.q0_draws=10", "--out", str(data)]) == 0
        assert cli_main(["train", "--data", str(data), "--out", str(checkpoint), "--steps", "2",
                         "--warmup", "0", "--batch-size", "4", *TINY_MODEL]) == 0
        assert cli_main(["eval-safety", "--checkpoint", str(checkpoint), "--episodes", "5", "--n", "2",
                         "--out", str(out)]) == 0

        rows = read_csv(out)
        assert [float(row["target_fraction"]) for row in rows] == [0.4, 0.8]
        assert all(int(row["episodes"]) == 5 for row in rows)


@pytest.mark.integration
class TestFailures:
    """Exit codes and error messages."""

    def test_missing_checkpoint(self, tmp_path, capsys):
        path = tmp_path / "absent.ckpt"
        code = cli_main(["eval-align", "--checkpoint", str(path), "--out", str(tmp_path / "x.csv")])
        assert code == 3
        assert str(path) in capsys.readouterr().err

    def test_unknown_flag(self):
        assert cli_main(["gen-data", "--bogus", "--out", "x.jsonl"]) == 2

    def test_unknown_command(self):
        assert cli_main(["launch"]) == 2

    def test_unknown_config_key(self, tmp_path):
        assert cli_main(["gen-data", "--set", "env.colour=red", "--out", str(tmp_path / "x.jsonl")]) == 2

    def test_unknown_env(self, tmp_path):
        assert cli_main(["gen-data", "--env", "cartpole", "--out", str(tmp_path / "x.jsonl")]) == 2

    def test_truncated_dataset(self, workspace, tmp_path):
        truncated = tmp_path / "cut.jsonl"
        lines = workspace["data"].read_text().splitlines()
        truncated.write_text("\n".join(lines[:5]) + "\n")
        code = cli_main(["train", "--data", str(truncated), "--out", str(tmp_path / "m.ckpt"),
                         "--steps", "1", "--warmup", "0"])
        assert code == 3

    def test_invalid_filter_percent(self, workspace, tmp_path):
        code = cli_main(["filter-data", "--data", str(workspace["data"]), "--percent", "100",
                         "--out", str(tmp_path / "x.jsonl")])
        assert code == 2

    def test_safety_on_continuous_env(self, workspace, tmp_path):
        code = cli_main(["eval-safety", "--checkpoint", str(workspace["checkpoint"]), "--episodes", "1",
                         "--out", str(tmp_path / "x.csv"), *SHORT_DIAL])
        assert code == 2

    @pytest.mark.slow
    def test_grad_check_command(self, capsys):
        assert cli_main(["grad-check", "--nu", "0.7", "--episodes", "4"]) == 0
        out = capsys.readouterr().out
        assert "nu=0.7" in out
        assert "max_relative_error=" in out
